#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "voxalign/error.hpp"
#include "voxalign/evaluation.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/training.hpp"

using namespace voxalign;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}

std::vector<double> flatten(const StudentEncoderParams& p) {
    std::vector<double> out;
    for (const auto& l : p.layers) {
        out.insert(out.end(), l.weights.begin(), l.weights.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    return out;
}

void fill(StudentEncoderParams& p, const std::vector<double>& flat) {
    std::size_t i = 0;
    for (auto& l : p.layers) {
        for (double& w : l.weights) w = flat[i++];
        for (double& b : l.bias) b = flat[i++];
    }
}

const Dataset& tiny_dataset() {
    static const Dataset ds = [] {
        GeneratorConfig c;
        c.n_examples = 80;
        c.seed = 3;
        return synthesize_dataset(c);
    }();
    return ds;
}

const Dataset& reference_dataset() {
    static const Dataset ds = synthesize_dataset(GeneratorConfig{});
    return ds;
}

double mean_con(const std::vector<LossBreakdown>& curve, std::size_t last) {
    double sum = 0.0;
    for (std::size_t i = curve.size() - last; i < curve.size(); ++i) sum += curve[i].con_symmetric;
    return sum / double(last);
}

TrainConfig quick_config() {
    TrainConfig c;
    c.steps = 12;
    c.batch_size = 8;
    c.hidden_dims = {16};
    c.seed = 4;
    return c;
}

}  // namespace

TEST_CASE("adam: zero gradient on fresh state leaves params unchanged") {
    StudentEncoderParams p = init_student(StudentArchitecture{3, {4}, 2, Activation::Tanh}, 1);
    const StudentEncoderParams before = p;
    AdamState s = AdamState::for_params(p);
    adam_step(p, p.zeros_like(), s, AdamHyper{});
    CHECK(p == before);
    CHECK(s.step == 1);
}

TEST_CASE("adam: first step moves every coordinate by about lr") {
    StudentEncoderParams p = init_student(StudentArchitecture{3, {4}, 2, Activation::Tanh}, 1);
    const auto before = flatten(p);
    Rng rng(70);
    StudentEncoderParams g = p.zeros_like();
    std::vector<double> gf(before.size());
    for (double& x : gf) x = (rng.bernoulli(0.5) ? 1.0 : -1.0) * std::pow(10.0, -3.0 + 6.0 * rng.uniform());
    fill(g, gf);
    AdamState s = AdamState::for_params(p);
    const AdamHyper h{1e-3, 0.9, 0.999, 1e-8};
    adam_step(p, g, s, h);
    const auto after = flatten(p);
    for (std::size_t i = 0; i < before.size(); ++i) {
        // m_hat = g, v_hat = g^2: step = lr * |g| / (|g| + eps)
        const double expected = h.learning_rate * std::abs(gf[i]) / (std::abs(gf[i]) + h.epsilon);
        CHECK(std::abs(before[i] - after[i]) == doctest::Approx(expected).epsilon(1e-9));
        CHECK((after[i] - before[i]) * gf[i] < 0.0);
    }
}

TEST_CASE("adam: repeated steps match a scripted reference") {
    StudentEncoderParams p = init_student(StudentArchitecture{4, {5}, 3, Activation::Tanh}, 2);
    auto ref_p = flatten(p);
    oracle::AdamRef ref{2e-3, 0.9, 0.999, 1e-8, {}, {}};
    AdamState s = AdamState::for_params(p);
    Rng rng(71);
    for (int step = 0; step < 5; ++step) {
        std::vector<double> gf(ref_p.size());
        for (double& x : gf) x = rng.normal();
        StudentEncoderParams g = p.zeros_like();
        fill(g, gf);
        adam_step(p, g, s, AdamHyper{2e-3, 0.9, 0.999, 1e-8});
        ref.step(ref_p, gf);
        const auto got = flatten(p);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - ref_p[i]) <= 1e-12);
    }
    CHECK(s.step == 5);
}

TEST_CASE("adam: shape and finiteness errors leave params untouched") {
    StudentEncoderParams p = init_student(StudentArchitecture{3, {4}, 2, Activation::Tanh}, 1);
    const StudentEncoderParams before = p;
    AdamState s = AdamState::for_params(p);
    StudentEncoderParams wrong = init_student(StudentArchitecture{3, {5}, 2, Activation::Tanh}, 1).zeros_like();
    CHECK(code_of([&] { adam_step(p, wrong, s, AdamHyper{}); }) == ErrorCode::ShapeMismatch);
    StudentEncoderParams g = p.zeros_like();
    g.layers[1].bias[0] = std::numeric_limits<double>::infinity();
    CHECK(code_of([&] { adam_step(p, g, s, AdamHyper{}); }) == ErrorCode::NonFiniteGradient);
    g.layers[1].bias[0] = std::nan("");
    CHECK(code_of([&] { adam_step(p, g, s, AdamHyper{}); }) == ErrorCode::NonFiniteGradient);
    CHECK(p == before);
    CHECK(s.step == 0);
}

TEST_CASE("train config validation") {
    TrainConfig c = quick_config();
    c.learning_rate = 0.0;
    CHECK(code_of([&] { validate(c); }) == ErrorCode::InvalidConfig);
    c = quick_config();
    c.lambda = -0.5;
    CHECK(code_of([&] { validate(c); }) == ErrorCode::InvalidConfig);
    c = quick_config();
    c.batch_size = 0;
    CHECK(code_of([&] { validate(c); }) == ErrorCode::InvalidConfig);
}

TEST_CASE("batch sampler: epochs are permutations and reproducible") {
    std::vector<std::size_t> pool{3, 5, 8, 13, 21, 34, 55};
    BatchSampler a(pool, 9), b(pool, 9);
    for (int epoch = 0; epoch < 4; ++epoch) {
        const auto batch = a.next(pool.size());
        CHECK(batch == b.next(pool.size()));
        CHECK(std::multiset<std::size_t>(batch.begin(), batch.end()) ==
              std::multiset<std::size_t>(pool.begin(), pool.end()));
    }
    CHECK(code_of([] { BatchSampler(std::vector<std::size_t>{}, 1); }) == ErrorCode::EmptySplit);

    // Small batches: every id appears exactly once within each epoch.
    BatchSampler c(pool, 10);
    std::vector<std::size_t> drawn;
    for (int i = 0; i < 7; ++i)
        for (std::size_t x : c.next(3)) drawn.push_back(x);
    for (std::size_t e = 0; e < 3; ++e) {
        std::multiset<std::size_t> epoch(drawn.begin() + std::ptrdiff_t(e * 7), drawn.begin() + std::ptrdiff_t(e * 7 + 7));
        CHECK(epoch == std::multiset<std::size_t>(pool.begin(), pool.end()));
    }
}

TEST_CASE("train with zero steps returns the initialization") {
    TrainConfig c = quick_config();
    c.steps = 0;
    const TrainResult r = train(c, tiny_dataset());
    CHECK(r.report.loss_curve.empty());
    CHECK(r.params == init_student(student_architecture(tiny_dataset(), c), derive_seed(c.seed, seed_stream::student_init)));
}

TEST_CASE("training is bit-reproducible and independent of thread count") {
    const TrainConfig c = quick_config();
    const TrainResult a = train(c, tiny_dataset(), 1);
    const TrainResult b = train(c, tiny_dataset(), 1);
    const TrainResult t = train(c, tiny_dataset(), 3);
    CHECK(a.params == b.params);
    CHECK(a.params == t.params);
    CHECK(a.report.batch_order == b.report.batch_order);
    REQUIRE(a.report.loss_curve.size() == c.steps);
    CHECK(std::abs(a.report.loss_curve.back().total - b.report.loss_curve.back().total) < 1e-12);
    for (std::size_t i = 0; i < c.steps; ++i) CHECK(a.report.loss_curve[i].total == t.report.loss_curve[i].total);
}

TEST_CASE("frozen towers are untouched by training and the curve is finite") {
    const TrainResult r = train(quick_config(), tiny_dataset());
    CHECK(r.report.vision_fingerprint_before == r.report.vision_fingerprint_after);
    CHECK(r.report.text_fingerprint_before == r.report.text_fingerprint_after);
    for (const auto& l : r.report.loss_curve) {
        CHECK(std::isfinite(l.total));
        CHECK(std::isfinite(l.distill));
    }
}

TEST_CASE("no-KD training excludes the distillation term") {
    TrainConfig c = quick_config();
    c.kd_enabled = false;
    c.lambda = 3.0;
    const TrainResult r = train(c, tiny_dataset());
    for (const auto& l : r.report.loss_curve) {
        CHECK(l.lambda == 0.0);
        CHECK(l.total == l.con_symmetric);
    }
    TrainConfig lambda0 = quick_config();
    lambda0.lambda = 0.0;
    CHECK(train(lambda0, tiny_dataset()).params == r.params);
}

TEST_CASE("periodic snapshots are tagged with their step") {
    TrainConfig c = quick_config();
    c.eval_every = 5;
    const TrainResult r = train(c, tiny_dataset());
    REQUIRE(r.report.snapshots.size() == 2);
    CHECK(r.report.snapshots[0].step == 5);
    CHECK(r.report.snapshots[1].step == 10);
}

TEST_CASE("divergent training reports the failing step") {
    TrainConfig c = quick_config();
    c.learning_rate = 1e300;
    c.steps = 50;
    try {
        train(c, tiny_dataset());
        FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteLoss);
        CHECK(std::string(e.what()).find("step ") != std::string::npos);
    }
}

TEST_CASE("speech-path evaluation never reads text features") {
    // Poisoning every text-side input with NaN must leave student reports unchanged.
    TrainConfig c = quick_config();
    const Dataset& clean = tiny_dataset();
    const TrainResult r = train(c, clean);
    Dataset poisoned = clean;
    for (auto& ex : poisoned.examples)
        for (double& x : ex.text_features) x = std::nan("");
    for (double& x : poisoned.prompts.text_positive.data) x = std::nan("");
    for (double& x : poisoned.prompts.text_negative.data) x = std::nan("");
    poisoned.towers.text = FrozenProjector();

    EvalConfig ec;
    const MetricsReport a = evaluate_zero_shot(clean, QueryPath::Student, &r.params, ec);
    const MetricsReport b = evaluate_zero_shot(poisoned, QueryPath::Student, &r.params, ec);
    CHECK(a.mean_auroc == b.mean_auroc);
    CHECK(a.mean_f1 == b.mean_f1);
    CHECK(a.weighted_f1 == b.weighted_f1);
    const RetrievalReport ra = evaluate_retrieval(clean, QueryPath::Student, &r.params, ec);
    const RetrievalReport rb = evaluate_retrieval(poisoned, QueryPath::Student, &r.params, ec);
    CHECK(ra.recall == rb.recall);
    CHECK(std::isfinite(b.mean_auroc));

    // The teacher path does read them, so the poison is observable there.
    CHECK_THROWS(evaluate_zero_shot(poisoned, QueryPath::Teacher, nullptr, ec));
}

TEST_CASE("student evaluation requires a checkpoint") {
    CHECK(code_of([] { evaluate_zero_shot(tiny_dataset(), QueryPath::Student, nullptr, EvalConfig{}); }) ==
          ErrorCode::InvalidConfig);
}

TEST_CASE("contrastive loss reduction at the reference scale") {
    // Best attainable symmetric loss at temperature 1: unit vectors on a regular
    // simplex, cos = 1 on the diagonal and -1/(N-1) elsewhere.
    const double n = 32.0;
    const double floor = 2.0 * std::log(1.0 + (n - 1.0) * std::exp(-1.0 - 1.0 / (n - 1.0)));
    const double ceiling = 1.0 - floor / (2.0 * std::log(n));
    CHECK(ceiling == doctest::Approx(0.2817).epsilon(1e-3));

    TrainConfig c;
    const TrainResult ref = train(c, reference_dataset());
    const auto& curve = ref.report.loss_curve;
    REQUIRE(curve.size() == 2000);
    const double ref_reduction = 1.0 - mean_con(curve, 100) / curve.front().con_symmetric;
    CHECK(ref_reduction > 0.12);
    CHECK(ref_reduction < ceiling);

    c.temperature = 0.1;
    const TrainResult sharp = train(c, reference_dataset());
    const double sharp_reduction =
        1.0 - mean_con(sharp.report.loss_curve, 100) / sharp.report.loss_curve.front().con_symmetric;
    CHECK(sharp_reduction >= 0.30);
}

TEST_CASE("untrained student scores at chance") {
    TrainConfig c;
    c.steps = 0;
    for (std::uint64_t seed : {0, 1, 2}) {
        c.seed = seed;
        const TrainResult r = train(c, reference_dataset());
        const MetricsReport m = evaluate_zero_shot(reference_dataset(), QueryPath::Student, &r.params, EvalConfig{});
        CHECK(m.case_count == 500);
        CHECK(std::abs(m.mean_auroc - 0.5) <= 0.05);
    }
}
