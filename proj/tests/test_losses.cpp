#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "voxalign/error.hpp"
#include "voxalign/losses.hpp"
#include "voxalign/rng.hpp"

using namespace voxalign;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

std::vector<Embedding> embed(const std::vector<std::vector<double>>& raw) {
    std::vector<Embedding> out;
    for (const auto& r : raw) out.push_back(l2_normalize(r));
    return out;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::IoError;
}

std::vector<Embedding> copies(const std::vector<double>& v, std::size_t n) {
    return std::vector<Embedding>(n, l2_normalize(v));
}

}  // namespace

TEST_CASE("losses match brute-force oracles on random batches") {
    Rng rng(30);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(8);
        const std::size_t d = 2 + rng.uniform_index(15);
        const double tau = trial % 2 == 0 ? 1.0 : 0.2 + rng.uniform();
        const double lambda = rng.uniform() * 2.0;
        std::vector<std::vector<double>> a, v, t;
        for (std::size_t i = 0; i < n; ++i) {
            a.push_back(random_vec(rng, d));
            v.push_back(random_vec(rng, d));
            t.push_back(random_vec(rng, d));
        }
        BatchEmbeddings b{embed(a), embed(v), embed(t)};
        const LossBreakdown l = total_loss(b, LossOptions{lambda, tau});
        const double a2v = double(oracle::infonce(a, v, tau));
        const double v2a = double(oracle::infonce(v, a, tau));
        const double dist = double(oracle::distill(a, t));
        CHECK(std::abs(l.con_audio_to_ct - a2v) < 1e-9);
        CHECK(std::abs(l.con_ct_to_audio - v2a) < 1e-9);
        CHECK(std::abs(l.con_symmetric - (a2v + v2a)) < 1e-9);
        CHECK(std::abs(l.distill - dist) < 1e-9);
        CHECK(std::abs(l.total - (a2v + v2a + lambda * dist)) < 1e-9);
        CHECK(std::abs(l.total - (l.con_symmetric + lambda * l.distill)) <= 1e-12);
    }
}

TEST_CASE("closed-form loss identities") {
    Rng rng(31);
    SUBCASE("single pair has zero contrastive loss") {
        auto a = embed({random_vec(rng, 5)});
        auto v = embed({random_vec(rng, 5)});
        CHECK(contrastive_loss_directional(a, v) == 0.0);
        CHECK(contrastive_loss_symmetric(BatchEmbeddings{a, v, std::nullopt}) == 0.0);
    }
    SUBCASE("identical embeddings give 2 ln N") {
        const auto v = random_vec(rng, 7);
        for (std::size_t n : {2, 3, 8, 32}) {
            BatchEmbeddings b{copies(v, n), copies(v, n), copies(v, n)};
            CHECK(std::abs(contrastive_loss_symmetric(b) - 2.0 * std::log(double(n))) < 1e-9);
            const LossBreakdown l = total_loss(b, LossOptions{1.0, 1.0});
            CHECK(std::abs(l.total - 2.0 * std::log(double(n))) < 1e-9);
        }
    }
    SUBCASE("distillation of identical, orthogonal and antipodal pairs") {
        const std::vector<double> x{1.0, 0.0, 0.0}, y{0.0, 1.0, 0.0}, nx{-1.0, 0.0, 0.0};
        CHECK(std::abs(distillation_loss(copies(x, 3), copies(x, 3)) - 0.0) <= 1e-12);
        CHECK(std::abs(distillation_loss(copies(x, 3), copies(y, 3)) - 1.0) <= 1e-12);
        CHECK(std::abs(distillation_loss(copies(x, 3), copies(nx, 3)) - 2.0) <= 1e-12);
    }
    SUBCASE("lambda 0 reduces to contrastive only") {
        auto a = embed({random_vec(rng, 4), random_vec(rng, 4)});
        auto v = embed({random_vec(rng, 4), random_vec(rng, 4)});
        auto t = embed({random_vec(rng, 4), random_vec(rng, 4)});
        const LossBreakdown l = total_loss(BatchEmbeddings{a, v, t}, LossOptions{0.0, 1.0});
        CHECK(l.total == l.con_symmetric);
    }
}

TEST_CASE("loss error contracts") {
    Rng rng(32);
    auto a = embed({random_vec(rng, 4), random_vec(rng, 4)});
    auto v = embed({random_vec(rng, 4), random_vec(rng, 4)});
    CHECK(code_of([&] { total_loss(BatchEmbeddings{a, v, std::nullopt}, LossOptions{1.0, 1.0}); }) ==
          ErrorCode::MissingTeacher);
    CHECK_NOTHROW(total_loss(BatchEmbeddings{a, v, std::nullopt}, LossOptions{0.0, 1.0}));
    CHECK(code_of([&] { total_loss(BatchEmbeddings{{}, {}, std::nullopt}, LossOptions{0.0, 1.0}); }) ==
          ErrorCode::EmptyBatch);
    auto short_v = embed({random_vec(rng, 4)});
    CHECK(code_of([&] { contrastive_loss_directional(a, short_v); }) == ErrorCode::DimensionMismatch);
    auto wide = embed({random_vec(rng, 5), random_vec(rng, 5)});
    CHECK(code_of([&] { contrastive_loss_directional(a, wide); }) == ErrorCode::DimensionMismatch);
    CHECK(code_of([&] { total_loss(BatchEmbeddings{a, v, std::nullopt}, LossOptions{-1.0, 1.0}); }) ==
          ErrorCode::InvalidConfig);
    CHECK(code_of([&] { total_loss(BatchEmbeddings{a, v, std::nullopt}, LossOptions{0.0, 0.0}); }) ==
          ErrorCode::InvalidConfig);
}

TEST_CASE("log-sum-exp stays finite at small temperatures") {
    Rng rng(33);
    std::vector<std::vector<double>> a, v;
    for (int i = 0; i < 8; ++i) {
        a.push_back(random_vec(rng, 6));
        v.push_back(random_vec(rng, 6));
    }
    const double l = contrastive_loss_directional(embed(a), embed(v), 1e-3);
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
}

TEST_CASE("loss gradient: lambda 0 equals the contrastive-only gradient") {
    Rng rng(34);
    std::vector<std::vector<double>> raw;
    std::vector<Embedding> v, t;
    for (int i = 0; i < 5; ++i) {
        raw.push_back(random_vec(rng, 6));
        v.push_back(l2_normalize(random_vec(rng, 6)));
        t.push_back(l2_normalize(random_vec(rng, 6)));
    }
    const LossGradient with_text = total_loss_gradient(raw, v, t, LossOptions{0.0, 1.0});
    const LossGradient without = total_loss_gradient(raw, v, {}, LossOptions{0.0, 1.0});
    for (std::size_t i = 0; i < raw.size(); ++i)
        for (std::size_t k = 0; k < 6; ++k)
            CHECK(std::abs(with_text.d_raw_audio[i][k] - without.d_raw_audio[i][k]) <= 1e-12);
}

TEST_CASE("loss gradient is orthogonal to the raw embedding and scales as 1/|r|") {
    Rng rng(35);
    std::vector<std::vector<double>> raw;
    std::vector<Embedding> v, t;
    for (int i = 0; i < 4; ++i) {
        raw.push_back(random_vec(rng, 5));
        v.push_back(l2_normalize(random_vec(rng, 5)));
        t.push_back(l2_normalize(random_vec(rng, 5)));
    }
    const LossGradient g = total_loss_gradient(raw, v, t, LossOptions{1.0, 1.0});
    auto scaled = raw;
    for (auto& r : scaled)
        for (double& x : r) x *= 4.0;
    const LossGradient gs = total_loss_gradient(scaled, v, t, LossOptions{1.0, 1.0});
    CHECK(gs.loss.total == doctest::Approx(g.loss.total).epsilon(1e-13));
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double radial = 0.0;
        for (std::size_t k = 0; k < 5; ++k) {
            radial += g.d_raw_audio[i][k] * raw[i][k];
            CHECK(gs.d_raw_audio[i][k] == doctest::Approx(g.d_raw_audio[i][k] / 4.0).epsilon(1e-12));
        }
        CHECK(std::abs(radial) < 1e-12);
    }
}
