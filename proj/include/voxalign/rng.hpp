#pragma once

#include <cstdint>
#include <random>

namespace voxalign {

/// SplitMix64 finalizer. All derived seeds in the project go through this:
/// derive_seed(seed, stream) = mix64(seed ^ mix64(stream + 1)).
std::uint64_t mix64(std::uint64_t x) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

/// Stream identifiers for derive_seed. Changing these changes every artifact.
namespace seed_stream {
inline constexpr std::uint64_t generator_model = 0x100;
inline constexpr std::uint64_t prevalences = 0x101;
inline constexpr std::uint64_t split = 0x102;
inline constexpr std::uint64_t student_init = 0x200;
inline constexpr std::uint64_t batch_order = 0x201;
inline constexpr std::uint64_t example_base = 0x10000;
}  // namespace seed_stream

/// Portable random source: mt19937_64 bits with hand-written uniform/normal
/// transforms so draws are identical across standard library vendors.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    /// Uniform integer in [0, n); n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal();
    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace voxalign
