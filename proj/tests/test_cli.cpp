#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "voxalign/cli.hpp"
#include "voxalign/encoders.hpp"
#include "voxalign/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = voxalign::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "voxalign_cli_tests" / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = slurp(e.path());
    return files;
}

// Output directories differ between runs, so compare file contents with the
// directory name masked where commands echo it.
std::map<std::string, std::string> masked_tree(const fs::path& root) {
    auto files = tree(root);
    const std::string name = root.string();
    for (auto& [k, v] : files)
        for (std::size_t pos; (pos = v.find(name)) != std::string::npos;) v.replace(pos, name.size(), "<dir>");
    return files;
}

const fs::path& shared_data() {
    static const fs::path dir = [] {
        const fs::path d = fresh("shared_data");
        REQUIRE(run({"synth-data", "--n", "120", "--seed", "7", "--out", d.string()}).code == 0);
        return d;
    }();
    return dir;
}

std::string manifest() { return (shared_data() / "manifest.jsonl").string(); }

}  // namespace

TEST_CASE("synth-data is byte-identical across runs and thread counts") {
    const fs::path a = fresh("synth_a"), b = fresh("synth_b");
    REQUIRE(run({"synth-data", "--n", "100", "--seed", "7", "--out", a.string()}).code == 0);
    REQUIRE(run({"synth-data", "--n", "100", "--seed", "7", "--out", b.string(), "--threads", "4"}).code == 0);
    const auto ta = tree(a);
    const auto tb = tree(b);
    for (const auto& [name, bytes] : ta)
        if (name != "run.json") CHECK_MESSAGE(bytes == tb.at(name), name);
    CHECK(ta.size() == tb.size());
    CHECK(masked_tree(a) == masked_tree(b));
    CHECK(ta.count("manifest.jsonl") == 1);
    CHECK(ta.count("run.json") == 1);
    const json run_record = json::parse(ta.at("run.json"));
    CHECK(run_record["flags"]["n"] == "100");
    CHECK_FALSE(run_record["flags"].contains("threads"));
    CHECK(run_record["resolved"]["seed"] == 7);
}

TEST_CASE("usage and validation exit codes") {
    CHECK(run({"synth-data", "--n", "10"}).code == 2);
    CHECK(run({"synth-data", "--n", "0", "--out", fresh("n0").string()}).code == 1);
    CHECK(run({"synth-data", "--out", fresh("bogus").string(), "--bogus"}).code == 2);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"eval"}).code == 2);
    CHECK(run({"train", "--manifest", "/nonexistent/manifest.jsonl", "--out", fresh("nx").string()}).code == 1);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("config precedence: defaults < file < flags") {
    const fs::path dir = fresh("precedence");
    fs::create_directories(dir);
    std::ofstream(dir / "train.json") << R"({"steps": 3, "batch_size": 4, "hidden_dims": [8]})";
    const fs::path t1 = dir / "t1", t2 = dir / "t2";
    REQUIRE(run({"train", "--manifest", manifest(), "--out", t1.string(), "--config", (dir / "train.json").string()})
                .code == 0);
    REQUIRE(run({"train", "--manifest", manifest(), "--out", t2.string(), "--config", (dir / "train.json").string(),
                 "--steps", "2"})
                .code == 0);
    const json r1 = json::parse(slurp(t1 / "run.json"));
    const json r2 = json::parse(slurp(t2 / "run.json"));
    CHECK(r1["resolved"]["steps"] == 3);
    CHECK(r1["resolved"]["batch_size"] == 4);
    CHECK(r1["resolved"]["learning_rate"] == 1e-3);
    CHECK(r2["resolved"]["steps"] == 2);
    CHECK(r2["resolved"]["batch_size"] == 4);

    std::ofstream(dir / "bad.json") << R"({"stepz": 3})";
    CHECK(run({"train", "--manifest", manifest(), "--out", (dir / "t3").string(), "--config",
               (dir / "bad.json").string()})
              .code == 1);
}

TEST_CASE("train: zero steps writes the initialization, runs are reproducible") {
    const fs::path z = fresh("train_zero");
    REQUIRE(run({"train", "--manifest", manifest(), "--out", z.string(), "--steps", "0", "--seed", "5"}).code == 0);
    const auto ckpt = voxalign::load_checkpoint(z / "checkpoint.xmdt");
    voxalign::StudentArchitecture arch{64, {128}, 32, voxalign::Activation::Tanh};
    CHECK(ckpt == voxalign::init_student(arch, voxalign::derive_seed(5, voxalign::seed_stream::student_init)));

    const fs::path a = fresh("train_a"), b = fresh("train_b");
    const std::vector<std::string> common{"--steps", "6", "--batch-size", "8", "--seed", "2"};
    auto args = [&](const fs::path& out, const std::string& threads) {
        std::vector<std::string> v{"train", "--manifest", manifest(), "--out", out.string(), "--threads", threads};
        v.insert(v.end(), common.begin(), common.end());
        return v;
    };
    const Result ra = run(args(a, "1"));
    const Result rb = run(args(b, "3"));
    REQUIRE(ra.code == 0);
    REQUIRE(rb.code == 0);
    CHECK(masked_tree(a) == masked_tree(b));
    auto final_line = [](const std::string& s) { return s.substr(s.find("final_loss"), s.find('\n', s.find("final_loss")) - s.find("final_loss")); };
    CHECK(final_line(ra.out) == final_line(rb.out));
}

TEST_CASE("train --no-kd excludes the distillation term") {
    const fs::path d = fresh("train_nokd");
    REQUIRE(run({"train", "--manifest", manifest(), "--out", d.string(), "--steps", "3", "--batch-size", "8",
                 "--no-kd"})
                .code == 0);
    const json report = json::parse(slurp(d / "train_report.json"));
    CHECK(report["config"]["kd_enabled"] == false);
    CHECK(report["final_loss"]["lambda"] == 0.0);
    CHECK(report["final_loss"]["total"] == report["final_loss"]["con_symmetric"]);
    CHECK(report["final_loss"]["distill"].get<double>() > 0.0);
}

TEST_CASE("eval: student and teacher paths produce comparable, deterministic reports") {
    const fs::path t = fresh("eval_train");
    REQUIRE(run({"train", "--manifest", manifest(), "--out", t.string(), "--steps", "4", "--batch-size", "8"}).code ==
            0);
    const std::string ckpt = (t / "checkpoint.xmdt").string();
    const fs::path e1 = fresh("eval_1"), e2 = fresh("eval_2");
    for (const auto& [dir, threads] : {std::pair{e1, "1"}, std::pair{e2, "4"}}) {
        for (std::string kind : {"zeroshot", "retrieval"}) {
            REQUIRE(run({"eval", kind, "--manifest", manifest(), "--checkpoint", ckpt, "--out", dir.string(),
                         "--threads", threads})
                        .code == 0);
            REQUIRE(run({"eval", kind, "--manifest", manifest(), "--query-path", "teacher", "--out", dir.string(),
                         "--threads", threads})
                        .code == 0);
        }
    }
    CHECK(masked_tree(e1) == masked_tree(e2));
    const json s = json::parse(slurp(e1 / "zeroshot_student.json"));
    const json te = json::parse(slurp(e1 / "zeroshot_teacher.json"));
    CHECK(s["label_count"] == te["label_count"]);
    CHECK(s["case_count"] == te["case_count"]);
    CHECK(s["threshold"] == 0.5);
    const json rs = json::parse(slurp(e1 / "retrieval_student.json"));
    CHECK(rs["pool_size"] == 24);
    CHECK(rs["recall"]["recall@50"] == 1.0);  // K > pool

    CHECK(run({"eval", "zeroshot", "--manifest", manifest(), "--out", fresh("eval_nockpt").string()}).code == 1);
    CHECK(run({"eval", "zeroshot", "--manifest", manifest(), "--query-path", "text", "--out",
               fresh("eval_bad").string()})
              .code == 2);
}

TEST_CASE("eval rejects a corrupted checkpoint") {
    const fs::path t = fresh("eval_corrupt");
    REQUIRE(run({"train", "--manifest", manifest(), "--out", t.string(), "--steps", "0"}).code == 0);
    {
        std::fstream f(t / "checkpoint.xmdt", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(200);
        f.put('\x7f');
    }
    const Result r = run({"eval", "zeroshot", "--manifest", manifest(), "--checkpoint", (t / "checkpoint.xmdt").string(),
                          "--out", (t / "e").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("ChecksumMismatch") != std::string::npos);
}

TEST_CASE("gradcheck command") {
    const Result ok = run({"gradcheck"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("max relative error") != std::string::npos);
    const Result a = run({"gradcheck", "--trials", "1", "--seed", "3"});
    const Result b = run({"gradcheck", "--trials", "1", "--seed", "3"});
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    const Result bad = run({"gradcheck", "--trials", "3", "--inject-sign-flip"});
    CHECK(bad.code == 1);
    CHECK(bad.err.find("analytic") != std::string::npos);

    const fs::path g1 = fresh("grad_1"), g2 = fresh("grad_2");
    REQUIRE(run({"gradcheck", "--trials", "2", "--out", g1.string()}).code == 0);
    REQUIRE(run({"gradcheck", "--trials", "2", "--out", g2.string(), "--threads", "2"}).code == 0);
    CHECK(masked_tree(g1) == masked_tree(g2));
}
