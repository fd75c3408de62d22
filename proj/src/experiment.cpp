#include "voxalign/experiment.hpp"

#include <algorithm>
#include <limits>

namespace voxalign {
namespace {

double recall_at(const RetrievalReport& r, std::size_t k) {
    for (std::size_t i = 0; i < r.ks.size(); ++i)
        if (r.ks[i] == k) return r.recall[i];
    return std::numeric_limits<double>::quiet_NaN();
}

VariantScores scores(const MetricsReport& m, const RetrievalReport& r) {
    return {m.mean_f1, m.mean_auroc, recall_at(r, 10)};
}

void accumulate(VariantScores& sum, const VariantScores& v, double w) {
    sum.macro_f1 += w * v.macro_f1;
    sum.mean_auroc += w * v.mean_auroc;
    sum.recall_at_10 += w * v.recall_at_10;
}

}  // namespace

ReplicationSummary run_replication(const GeneratorConfig& generator, const TrainConfig& train_config,
                                   const EvalConfig& eval, const std::vector<std::uint64_t>& seeds,
                                   unsigned threads) {
    ReplicationSummary out;
    EvalConfig ec = eval;
    ec.windows = train_config.windows;
    if (std::find(ec.ks.begin(), ec.ks.end(), std::size_t{10}) == ec.ks.end()) ec.ks.push_back(10);

    for (std::uint64_t seed : seeds) {
        GeneratorConfig g = generator;
        g.seed = seed;
        const Dataset dataset = synthesize_dataset(g, threads);

        SeedOutcome o;
        o.seed = seed;
        o.teacher = scores(evaluate_zero_shot(dataset, QueryPath::Teacher, nullptr, ec, threads),
                           evaluate_retrieval(dataset, QueryPath::Teacher, nullptr, ec, threads));
        for (bool kd : {true, false}) {
            TrainConfig tc = train_config;
            tc.seed = seed;
            tc.kd_enabled = kd;
            const TrainResult r = train(tc, dataset, threads);
            const VariantScores s =
                scores(evaluate_zero_shot(dataset, QueryPath::Student, &r.params, ec, threads),
                       evaluate_retrieval(dataset, QueryPath::Student, &r.params, ec, threads));
            const double con = r.report.loss_curve.empty() ? 0.0 : r.report.loss_curve.back().con_symmetric;
            (kd ? o.kd : o.nkd) = s;
            (kd ? o.kd_final_con : o.nkd_final_con) = con;
        }
        out.seeds.push_back(o);
    }

    const double w = seeds.empty() ? 0.0 : 1.0 / double(seeds.size());
    for (const auto& o : out.seeds) {
        accumulate(out.teacher, o.teacher, w);
        accumulate(out.kd, o.kd, w);
        accumulate(out.nkd, o.nkd, w);
    }
    const double gap = out.teacher.macro_f1 - out.nkd.macro_f1;
    out.f1_gap_recovery =
        gap > 0.0 ? (out.kd.macro_f1 - out.nkd.macro_f1) / gap : std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace voxalign
