#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "voxalign/cli.hpp"
#include "voxalign/config_json.hpp"
#include "voxalign/error.hpp"
#include "voxalign/evaluation.hpp"
#include "voxalign/experiment.hpp"
#include "voxalign/gradcheck.hpp"
#include "voxalign/kernels.hpp"
#include "voxalign/synthdata.hpp"
#include "voxalign/training.hpp"

namespace voxalign::cli {
namespace fs = std::filesystem;
namespace {

std::string fmt(double x, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

Json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open config file '" + path + "'");
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, "config file '" + path + "': " + e.what());
    }
}

void write_json(const Json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
    out << j.dump(2) << "\n";
    if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path.string() + "'");
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());
}

// Flags that were given on the command line, in declaration order. --threads
// only affects scheduling and is left out so records do not depend on it.
Json given_flags(const CLI::App& app) {
    Json j = Json::object();
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_single_name();
        if (name == "help" || name == "threads" || opt->count() == 0) continue;
        if (opt->get_expected_max() == 0) {
            j[name] = true;
            continue;
        }
        const auto& res = opt->results();
        j[name] = res.size() == 1 ? Json(res.front()) : Json(res);
    }
    return j;
}

Json run_record(const std::string& command, const CLI::App& app, Json resolved) {
    Json j;
    j["command"] = command;
    j["flags"] = given_flags(app);
    j["resolved"] = std::move(resolved);
    return j;
}

struct Common {
    std::string out;
    std::string config;
    unsigned threads = 1;
    std::uint64_t seed = 0;
};

void add_threads(CLI::App& app, Common& c) {
    app.add_option("--threads", c.threads, "Worker threads (does not change outputs)")->check(CLI::Range(1u, 1024u));
}

// ---------------------------------------------------------------------------
struct SynthArgs {
    Common common;
    std::size_t n = 0;
    double train_fraction = 0.0;
};

int cmd_synth_data(const CLI::App& app, const SynthArgs& a, std::ostream& out) {
    GeneratorConfig config;
    if (!a.common.config.empty()) apply_json(read_config_file(a.common.config), config);
    if (app.count("--n")) config.n_examples = a.n;
    if (app.count("--seed")) config.seed = a.common.seed;
    if (app.count("--train-fraction")) config.train_fraction = a.train_fraction;
    validate(config);

    const fs::path dir(a.common.out);
    ensure_dir(dir);
    const DatasetManifest manifest = generate_dataset(config, dir, a.common.threads);
    write_json(run_record("synth-data", app, to_json(config)), dir / "run.json");

    out << "wrote " << manifest.records.size() << " examples to " << dir.string() << "\n";
    for (Split s : {Split::Train, Split::Test}) {
        std::size_t count = 0;
        double sum = 0.0;
        double lo = 0.0;
        double hi = 0.0;
        for (const auto& r : manifest.records) {
            if (r.split != s) continue;
            lo = count == 0 ? r.duration_s : std::min(lo, r.duration_s);
            hi = count == 0 ? r.duration_s : std::max(hi, r.duration_s);
            sum += r.duration_s;
            ++count;
        }
        out << to_string(s) << ": " << count << " examples";
        if (count > 0)
            out << ", duration mean " << fmt(sum / double(count), 1) << " s (min " << fmt(lo, 1) << ", max "
                << fmt(hi, 1) << ")";
        out << "\n";
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
struct TrainArgs {
    Common common;
    std::string manifest;
    std::size_t steps = 0;
    std::size_t batch_size = 0;
    double lr = 0.0;
    double lambda = 0.0;
    double temperature = 0.0;
    std::size_t eval_every = 0;
    bool no_kd = false;
};

int cmd_train(const CLI::App& app, const TrainArgs& a, std::ostream& out) {
    TrainConfig config;
    if (!a.common.config.empty()) apply_json(read_config_file(a.common.config), config);
    if (app.count("--steps")) config.steps = a.steps;
    if (app.count("--batch-size")) config.batch_size = a.batch_size;
    if (app.count("--lr")) config.learning_rate = a.lr;
    if (app.count("--lambda")) config.lambda = a.lambda;
    if (app.count("--temperature")) config.temperature = a.temperature;
    if (app.count("--eval-every")) config.eval_every = a.eval_every;
    if (app.count("--seed")) config.seed = a.common.seed;
    if (a.no_kd) config.kd_enabled = false;
    validate(config);

    const Dataset dataset = load_dataset(a.manifest, a.common.threads);
    const fs::path dir(a.common.out);
    ensure_dir(dir);
    const TrainResult result = train(config, dataset, dir, a.common.threads);
    write_json(run_record("train", app, to_json(config)), dir / "run.json");

    const auto& curve = result.report.loss_curve;
    out << "trained " << curve.size() << " steps (kd " << (config.kd_enabled ? "on" : "off") << ", lambda "
        << fmt(config.effective_lambda(), 3) << ")\n";
    if (!curve.empty()) {
        const LossBreakdown& first = curve.front();
        const LossBreakdown& last = curve.back();
        out << "initial_loss total=" << fmt(first.total) << " con=" << fmt(first.con_symmetric)
            << " distill=" << fmt(first.distill) << "\n";
        out << "final_loss total=" << fmt(last.total) << " con=" << fmt(last.con_symmetric)
            << " distill=" << fmt(last.distill) << "\n";
    }
    out << "checkpoint " << (dir / "checkpoint.xmdt").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
struct EvalArgs {
    Common common;
    std::string manifest;
    std::string checkpoint;
    std::string query_path = "student";
    std::string split;
    double threshold = 0.5;
};

struct EvalInputs {
    EvalConfig config;
    QueryPath path = QueryPath::Student;
    Dataset dataset;
    std::optional<StudentEncoderParams> student;
};

EvalInputs prepare_eval(const CLI::App& app, const EvalArgs& a) {
    EvalInputs in;
    if (!a.common.config.empty()) apply_json(read_config_file(a.common.config), in.config);
    if (app.count("--threshold")) in.config.threshold = a.threshold;
    if (app.count("--split")) in.config.split = parse_split(a.split);
    if (!(in.config.threshold > 0.0 && in.config.threshold < 1.0))
        throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0, 1)");
    in.path = parse_query_path(a.query_path);
    in.dataset = load_dataset(a.manifest, a.common.threads);
    if (in.path == QueryPath::Student) {
        if (a.checkpoint.empty())
            throw Error(ErrorCode::InvalidConfig, "--checkpoint is required for the student query path");
        in.student = load_checkpoint(a.checkpoint);
        const StudentArchitecture& arch = in.student->arch;
        if (arch.input_dim != in.dataset.config.audio_dim || arch.output_dim != in.dataset.config.embed_dim)
            throw Error(ErrorCode::ShapeMismatch, "checkpoint dims " + std::to_string(arch.input_dim) + "->" +
                                                      std::to_string(arch.output_dim) + " do not match dataset " +
                                                      std::to_string(in.dataset.config.audio_dim) + "->" +
                                                      std::to_string(in.dataset.config.embed_dim));
    }
    return in;
}

Json eval_resolved(const EvalInputs& in) {
    Json j = to_json(in.config);
    j["query_path"] = to_string(in.path);
    return j;
}

int cmd_eval_zeroshot(const CLI::App& app, const EvalArgs& a, std::ostream& out) {
    const EvalInputs in = prepare_eval(app, a);
    const MetricsReport report = evaluate_zero_shot(in.dataset, in.path, in.student ? &*in.student : nullptr,
                                                    in.config, a.common.threads);
    const fs::path dir(a.common.out);
    ensure_dir(dir);
    const std::string stem = std::string("zeroshot_") + to_string(in.path);
    write_json(to_json(report), dir / (stem + ".json"));
    write_metrics_csv(report, dir / (stem + ".csv"));
    write_json(run_record("eval zeroshot", app, eval_resolved(in)), dir / ("run_" + stem + ".json"));

    out << "zeroshot " << to_string(in.path) << ": cases " << report.case_count << ", labels " << report.label_count
        << ", threshold " << fmt(report.threshold, 3) << "\n";
    out << "auroc " << fmt(report.mean_auroc) << " f1 " << fmt(report.mean_f1) << " accuracy "
        << fmt(report.mean_accuracy) << " precision " << fmt(report.mean_precision) << " weighted_f1 "
        << fmt(report.weighted_f1) << "\n";
    if (!report.excluded_from_auroc.empty()) {
        out << "excluded from auroc:";
        for (const auto& l : report.excluded_from_auroc) out << " " << l;
        out << "\n";
    }
    return kExitOk;
}

int cmd_eval_retrieval(const CLI::App& app, const EvalArgs& a, std::ostream& out) {
    const EvalInputs in = prepare_eval(app, a);
    const RetrievalReport report = evaluate_retrieval(in.dataset, in.path, in.student ? &*in.student : nullptr,
                                                      in.config, a.common.threads);
    const fs::path dir(a.common.out);
    ensure_dir(dir);
    const std::string stem = std::string("retrieval_") + to_string(in.path);
    write_json(to_json(report), dir / (stem + ".json"));
    write_retrieval_csv(report, dir / (stem + ".csv"));
    write_json(run_record("eval retrieval", app, eval_resolved(in)), dir / ("run_" + stem + ".json"));

    out << "retrieval " << to_string(in.path) << ": queries " << report.query_count << ", pool "
        << report.pool_size << "\n";
    for (std::size_t i = 0; i < report.ks.size(); ++i)
        out << "recall@" << report.ks[i] << " " << fmt(report.recall[i]) << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
struct GradcheckArgs {
    Common common;
    std::size_t trials = GradcheckOptions{}.trials;
    bool flip_sign = false;
};

int cmd_gradcheck(const CLI::App& app, const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
    GradcheckOptions options;
    options.trials = a.trials;
    options.seed = a.common.seed;
    options.flip_sign = a.flip_sign;
    if (options.trials == 0) throw Error(ErrorCode::InvalidConfig, "--trials must be positive");

    const GradcheckReport report = run_gradcheck(options);
    for (std::size_t t = 0; t < report.trials.size(); ++t) {
        const GradcheckTrial& tr = report.trials[t];
        char line[256];
        std::snprintf(line, sizeof line, "trial %zu N=%zu d=%zu lambda=%.2f tau=%.4f embed_err=%.3e param_err=%.3e\n",
                      t, tr.batch_size, tr.embed_dim, tr.lambda, tr.temperature, tr.embedding_max_rel_error,
                      tr.parameter_max_rel_error);
        out << line;
    }
    char summary[128];
    std::snprintf(summary, sizeof summary, "max relative error %.3e (tolerance %.0e)\n", report.max_rel_error,
                  options.tolerance);
    out << summary;

    if (!a.common.out.empty()) {
        const fs::path dir(a.common.out);
        ensure_dir(dir);
        Json trials = Json::array();
        for (const auto& tr : report.trials)
            trials.push_back({{"batch_size", tr.batch_size},
                              {"embed_dim", tr.embed_dim},
                              {"lambda", tr.lambda},
                              {"temperature", tr.temperature},
                              {"embedding_max_rel_error", tr.embedding_max_rel_error},
                              {"parameter_max_rel_error", tr.parameter_max_rel_error},
                              {"worst_coordinate", tr.worst_coordinate}});
        write_json({{"max_rel_error", report.max_rel_error},
                    {"tolerance", options.tolerance},
                    {"passed", report.passed},
                    {"trials", std::move(trials)}},
                   dir / "gradcheck.json");
        write_json(run_record("gradcheck", app, {{"trials", options.trials}, {"seed", options.seed}}),
                   dir / "run.json");
    }

    if (!report.passed) {
        const GradcheckTrial& w = report.trials[report.worst_trial];
        err << "gradcheck failed: trial " << report.worst_trial << " at " << w.worst_coordinate << " analytic "
            << w.worst_analytic << " numeric " << w.worst_numeric << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
struct ReplicateArgs {
    Common common;
    std::string train_config;
    std::vector<std::uint64_t> seeds{0, 1, 2};
    std::size_t n = 0;
    std::size_t steps = 0;
};

Json to_json(const VariantScores& v) {
    return {{"macro_f1", v.macro_f1}, {"mean_auroc", v.mean_auroc}, {"recall_at_10", v.recall_at_10}};
}

int cmd_replicate(const CLI::App& app, const ReplicateArgs& a, std::ostream& out) {
    GeneratorConfig gen;
    TrainConfig tc;
    if (!a.common.config.empty()) apply_json(read_config_file(a.common.config), gen);
    if (!a.train_config.empty()) apply_json(read_config_file(a.train_config), tc);
    if (app.count("--n")) gen.n_examples = a.n;
    if (app.count("--steps")) tc.steps = a.steps;
    validate(gen);
    validate(tc);

    const ReplicationSummary r = run_replication(gen, tc, EvalConfig{}, a.seeds, a.common.threads);
    char line[256];
    out << "seed  teacher_f1  kd_f1  nkd_f1  teacher_r@10  kd_r@10  nkd_r@10\n";
    for (const auto& s : r.seeds) {
        std::snprintf(line, sizeof line, "%-5llu %.4f      %.4f %.4f  %.4f        %.4f   %.4f\n",
                      static_cast<unsigned long long>(s.seed), s.teacher.macro_f1, s.kd.macro_f1, s.nkd.macro_f1,
                      s.teacher.recall_at_10, s.kd.recall_at_10, s.nkd.recall_at_10);
        out << line;
    }
    std::snprintf(line, sizeof line, "mean  %.4f      %.4f %.4f  %.4f        %.4f   %.4f\n", r.teacher.macro_f1,
                  r.kd.macro_f1, r.nkd.macro_f1, r.teacher.recall_at_10, r.kd.recall_at_10, r.nkd.recall_at_10);
    out << line;
    out << "kd recovers " << fmt(100.0 * r.f1_gap_recovery, 1) << "% of the teacher - nkd f1 gap\n";

    if (!a.common.out.empty()) {
        const fs::path dir(a.common.out);
        ensure_dir(dir);
        Json seeds = Json::array();
        for (const auto& s : r.seeds)
            seeds.push_back({{"seed", s.seed},
                             {"teacher", to_json(s.teacher)},
                             {"kd", to_json(s.kd)},
                             {"nkd", to_json(s.nkd)},
                             {"kd_final_con", s.kd_final_con},
                             {"nkd_final_con", s.nkd_final_con}});
        write_json({{"teacher", to_json(r.teacher)},
                    {"kd", to_json(r.kd)},
                    {"nkd", to_json(r.nkd)},
                    {"f1_gap_recovery", r.f1_gap_recovery},
                    {"seeds", std::move(seeds)}},
                   dir / "replication.json");
        write_json(run_record("replicate", app, {{"generator", to_json(gen)}, {"train", to_json(tc)}}),
                   dir / "run.json");
    }
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"voxalign: cross-modal contrastive and distillation engine", "voxalign"};
    app.require_subcommand(1);
    std::string backend;
    app.add_option("--backend", backend, "Kernel backend override (scalar|avx2)");

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand("synth-data", "Generate a synthetic paired dataset and manifest");
    synth_cmd->add_option("--out", synth.common.out, "Output directory")->required();
    synth_cmd->add_option("--n", synth.n, "Number of examples");
    synth_cmd->add_option("--seed", synth.common.seed, "Generator seed");
    synth_cmd->add_option("--train-fraction", synth.train_fraction, "Fraction of examples in the train split");
    synth_cmd->add_option("--config", synth.common.config, "Generator config (JSON)");
    add_threads(*synth_cmd, synth.common);

    TrainArgs tr;
    CLI::App* train_cmd = app.add_subcommand("train", "Train the speech student");
    train_cmd->add_option("--manifest", tr.manifest, "Dataset manifest (manifest.jsonl)")->required();
    train_cmd->add_option("--out", tr.common.out, "Output directory")->required();
    train_cmd->add_option("--steps", tr.steps, "Optimizer steps");
    train_cmd->add_option("--batch-size", tr.batch_size, "Batch size");
    train_cmd->add_option("--lr", tr.lr, "Adam learning rate");
    train_cmd->add_option("--lambda", tr.lambda, "Distillation weight");
    train_cmd->add_option("--temperature", tr.temperature, "Contrastive temperature");
    train_cmd->add_option("--eval-every", tr.eval_every, "Held-out loss every N steps (0 = off)");
    train_cmd->add_flag("--no-kd", tr.no_kd, "Contrastive loss only (lambda = 0)");
    train_cmd->add_option("--seed", tr.common.seed, "Training seed");
    train_cmd->add_option("--config", tr.common.config, "Train config (JSON)");
    add_threads(*train_cmd, tr.common);

    EvalArgs ev;
    CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or the teacher path");
    eval_cmd->require_subcommand(1);
    auto add_eval_flags = [&](CLI::App& sub) {
        sub.add_option("--manifest", ev.manifest, "Dataset manifest (manifest.jsonl)")->required();
        sub.add_option("--checkpoint", ev.checkpoint, "Student checkpoint (student path)");
        sub.add_option("--query-path", ev.query_path, "student | teacher")
            ->check(CLI::IsMember({"student", "teacher"}));
        sub.add_option("--threshold", ev.threshold, "Decision threshold on the two-way score");
        sub.add_option("--split", ev.split, "train | test")->check(CLI::IsMember({"train", "test"}));
        sub.add_option("--out", ev.common.out, "Output directory")->required();
        sub.add_option("--seed", ev.common.seed, "Accepted for uniformity; evaluation is deterministic");
        sub.add_option("--config", ev.common.config, "Eval config (JSON)");
        add_threads(sub, ev.common);
    };
    CLI::App* zeroshot_cmd = eval_cmd->add_subcommand("zeroshot", "Zero-shot multi-label classification");
    CLI::App* retrieval_cmd = eval_cmd->add_subcommand("retrieval", "Cross-modal retrieval Recall@K");
    add_eval_flags(*zeroshot_cmd);
    add_eval_flags(*retrieval_cmd);

    GradcheckArgs gc;
    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the analytic gradient");
    grad_cmd->add_option("--trials", gc.trials, "Random configurations (default 24)");
    grad_cmd->add_option("--seed", gc.common.seed, "Seed");
    grad_cmd->add_option("--out", gc.common.out, "Optional output directory for gradcheck.json");
    grad_cmd->add_flag("--inject-sign-flip", gc.flip_sign, "Test hook: negate the analytic gradient");
    add_threads(*grad_cmd, gc.common);

    ReplicateArgs rep;
    CLI::App* rep_cmd = app.add_subcommand("replicate", "KD vs no-KD vs teacher comparison over several seeds");
    rep_cmd->add_option("--seeds", rep.seeds, "Seeds (each drives data and training)");
    rep_cmd->add_option("--n", rep.n, "Examples per synthesized dataset");
    rep_cmd->add_option("--steps", rep.steps, "Training steps per variant");
    rep_cmd->add_option("--config", rep.common.config, "Generator config (JSON)");
    rep_cmd->add_option("--train-config", rep.train_config, "Train config (JSON)");
    rep_cmd->add_option("--out", rep.common.out, "Optional output directory for replication.json");
    add_threads(*rep_cmd, rep.common);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        CLI::App* failing = &app;
        for (CLI::App* sub : app.get_subcommands()) {
            failing = sub;
            for (CLI::App* subsub : sub->get_subcommands()) failing = subsub;
        }
        err << failing->help();
        return kExitUsage;
    }

    try {
        if (!backend.empty()) {
            if (backend == "scalar") kernels::select_backend(kernels::Backend::Scalar);
            else if (backend == "avx2") kernels::select_backend(kernels::Backend::Avx2);
            else throw Error(ErrorCode::InvalidConfig, "unknown backend '" + backend + "'");
        }
        if (synth_cmd->parsed()) return cmd_synth_data(*synth_cmd, synth, out);
        if (train_cmd->parsed()) return cmd_train(*train_cmd, tr, out);
        if (zeroshot_cmd->parsed()) return cmd_eval_zeroshot(*zeroshot_cmd, ev, out);
        if (retrieval_cmd->parsed()) return cmd_eval_retrieval(*retrieval_cmd, ev, out);
        if (grad_cmd->parsed()) return cmd_gradcheck(*grad_cmd, gc, out, err);
        if (rep_cmd->parsed()) return cmd_replicate(*rep_cmd, rep, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace voxalign::cli
