#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "voxalign/error.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/windowing.hpp"

using namespace voxalign;

namespace {
std::vector<std::size_t> starts_of(const WindowPlan& p) {
    std::vector<std::size_t> s;
    for (const auto& w : p.windows) s.push_back(w.begin);
    return s;
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
}  // namespace

TEST_CASE("86 s at L=30, O=2 gives windows at 0, 28, 56") {
    const WindowPlan p = plan_windows(86, 1.0, 30.0, 2.0);
    REQUIRE(p.windows.size() == 3);
    CHECK(p.windows[0] == Window{0, 30});
    CHECK(p.windows[1] == Window{28, 58});
    CHECK(p.windows[2] == Window{56, 86});
}

TEST_CASE("short and exact-length signals get one window") {
    CHECK(plan_windows(10, 1.0, 30.0, 2.0).windows == std::vector<Window>{{0, 10}});
    CHECK(plan_windows(30, 1.0, 30.0, 2.0).windows == std::vector<Window>{{0, 30}});
    CHECK(plan_windows(1, 1.0, 30.0, 2.0).windows == std::vector<Window>{{0, 1}});
}

TEST_CASE("a tail that is not reached by the stride gets an end-anchored window") {
    // 100 s: 0, 28, 56 cover up to 86; the tail window starts at 70.
    CHECK(starts_of(plan_windows(100, 1.0, 30.0, 2.0)) == std::vector<std::size_t>{0, 28, 56, 70});
    // 58 s: exact fit, no extra window.
    CHECK(starts_of(plan_windows(58, 1.0, 30.0, 2.0)) == std::vector<std::size_t>{0, 28});
}

TEST_CASE("invalid window settings are rejected") {
    CHECK(code_of([] { plan_windows(86, 1.0, 30.0, 30.0); }) == ErrorCode::InvalidWindowConfig);
    CHECK(code_of([] { plan_windows(86, 1.0, 0.0, 0.0); }) == ErrorCode::InvalidWindowConfig);
    CHECK(code_of([] { plan_windows(86, 1.0, 30.0, -1.0); }) == ErrorCode::InvalidWindowConfig);
    CHECK(code_of([] { plan_windows(0, 1.0, 30.0, 2.0); }) == ErrorCode::EmptyInput);
}

TEST_CASE("window plans match direct enumeration and cover the signal") {
    Rng rng(20);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t total = 1 + rng.uniform_index(400);
        const std::size_t len = 1 + rng.uniform_index(60);
        const std::size_t overlap = rng.uniform_index(len);
        const WindowPlan p = plan_windows(total, 1.0, double(len), double(overlap));
        CHECK(starts_of(p) == oracle::window_starts(total, len, len - overlap));

        std::vector<int> covered(total, 0);
        for (const auto& w : p.windows) {
            CHECK(w.end <= total);
            CHECK(w.length() == std::min(len, total));
            for (std::size_t f = w.begin; f < w.end; ++f) covered[f] = 1;
        }
        for (int c : covered) CHECK(c == 1);
        for (std::size_t i = 1; i < p.windows.size(); ++i) CHECK(p.windows[i].begin > p.windows[i - 1].begin);
    }
}

TEST_CASE("frame rate scales window lengths") {
    const WindowPlan p = plan_windows(172, 2.0, 30.0, 2.0);
    CHECK(starts_of(p) == std::vector<std::size_t>{0, 56, 112});
    CHECK(p.windows[0].length() == 60);
}

TEST_CASE("pooling averages raw outputs and normalizes once") {
    const std::vector<std::vector<double>> raw{{3.0, 0.0}, {0.0, 1.0}};
    const Embedding e = pool_window_embeddings(raw);
    CHECK(e[0] == doctest::Approx(1.5 / std::sqrt(1.5 * 1.5 + 0.25)).epsilon(1e-15));
    CHECK(e[1] == doctest::Approx(0.5 / std::sqrt(1.5 * 1.5 + 0.25)).epsilon(1e-15));

    const std::vector<std::vector<double>> single{{2.0, 2.0, 1.0}};
    CHECK(pool_window_embeddings(single) == l2_normalize(single[0]));

    const std::vector<std::vector<double>> cancel{{1.0, -2.0}, {-1.0, 2.0}};
    CHECK(code_of([&] { pool_window_embeddings(cancel); }) == ErrorCode::ZeroVector);
    CHECK(code_of([] { pool_window_embeddings(std::span<const std::vector<double>>{}); }) == ErrorCode::EmptyInput);
    const std::vector<std::vector<double>> ragged{{1.0, 2.0}, {1.0}};
    CHECK(code_of([&] { pool_window_embeddings(ragged); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("long-audio encoding equals pooling of per-window student outputs") {
    StudentArchitecture arch{4, {6}, 3, Activation::Tanh};
    const StudentEncoderParams params = init_student(arch, 5);
    Rng rng(21);
    AudioSignal sig{4, 1.0, std::vector<double>(86 * 4)};
    for (double& x : sig.frames) x = rng.normal();

    const WindowSettings ws{30.0, 2.0};
    std::vector<std::vector<double>> outs;
    for (const auto& w : plan_windows(86, 1.0, 30.0, 2.0).windows)
        outs.push_back(student_forward(params, sig.window(w.begin, w.end)).raw);
    const Embedding expected = pool_window_embeddings(outs);
    const Embedding got = encode_long_audio(sig, params, ws);
    REQUIRE(got.dim() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-14));
}
