#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voxalign/embedding.hpp"

namespace voxalign {

enum class Activation : std::uint8_t { Tanh = 0, Relu = 1, Identity = 2 };

const char* to_string(Activation a) noexcept;
/// Accepts "tanh", "relu", "identity"; throws InvalidArchitecture otherwise.
Activation parse_activation(const std::string& name);

struct StudentArchitecture {
    std::size_t input_dim = 64;
    std::vector<std::size_t> hidden_dims{128};
    std::size_t output_dim = 32;
    Activation activation = Activation::Tanh;

    bool operator==(const StudentArchitecture&) const = default;
};

/// Throws InvalidArchitecture on zero-width layers.
void validate(const StudentArchitecture& arch);

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;  // out x in, row-major
    std::vector<double> bias;     // out

    bool operator==(const DenseLayer&) const = default;
};

/// Trainable speech-side encoder: frame mean-pool followed by an MLP whose
/// hidden layers use `arch.activation` and whose last layer is affine only.
struct StudentEncoderParams {
    StudentArchitecture arch;
    std::vector<DenseLayer> layers;

    std::size_t parameter_count() const;
    bool all_finite() const;
    /// Same architecture, every value zero. Used as a gradient accumulator.
    StudentEncoderParams zeros_like() const;

    bool operator==(const StudentEncoderParams&) const = default;
};

/// Weights ~ N(0, 1/fan_in), biases zero. Deterministic in `seed`.
StudentEncoderParams init_student(const StudentArchitecture& arch, std::uint64_t seed);

/// Read-only view of `frame_count` consecutive feature frames, row-major.
struct FrameWindow {
    std::span<const double> data;
    std::size_t frame_count = 0;
    std::size_t feature_dim = 0;

    std::span<const double> frame(std::size_t i) const { return data.subspan(i * feature_dim, feature_dim); }
};

struct ForwardCache {
    std::size_t frame_count = 0;
    /// layer_inputs[k] is the input to layer k; layer_inputs[0] is the pooled frame mean.
    std::vector<std::vector<double>> layer_inputs;
    /// Affine outputs of every layer before activation.
    std::vector<std::vector<double>> pre_activations;
};

struct StudentOutput {
    std::vector<double> raw;  // pre-normalization embedding
    ForwardCache cache;
};

/// Throws DimensionMismatch if the window feature dim differs from arch.input_dim
/// and EmptyInput for a window with no frames.
StudentOutput student_forward(const StudentEncoderParams& params, const FrameWindow& window);

/// Reverse-mode pass for one forward call. Returns a gradient with the same
/// layout as `params`. Throws StaleCache if the cache does not fit `params`.
StudentEncoderParams student_backward(const StudentEncoderParams& params, const ForwardCache& cache,
                                      std::span<const double> upstream);

/// As student_backward, adding into `grads` instead of returning a fresh buffer.
void student_backward_accumulate(const StudentEncoderParams& params, const ForwardCache& cache,
                                 std::span<const double> upstream, StudentEncoderParams& grads);

/// Frozen linear map followed by normalization; stands in for the pretrained
/// vision and text towers. Immutable after construction.
class FrozenProjector {
public:
    /// Empty placeholder; frozen_encode on it throws DimensionMismatch.
    FrozenProjector() : rows_(0), cols_(0), seed_(0) {}
    /// `matrix` is rows x cols, row-major. Throws DimensionMismatch on size mismatch.
    FrozenProjector(std::size_t rows, std::size_t cols, std::vector<double> matrix, std::uint64_t seed);

    /// Gaussian entries scaled by 1/sqrt(cols).
    static FrozenProjector random(std::size_t rows, std::size_t cols, std::uint64_t seed);

    std::size_t output_dim() const noexcept { return rows_; }
    std::size_t source_dim() const noexcept { return cols_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::span<const double> matrix() const noexcept { return matrix_; }
    /// CRC-32 of the little-endian matrix bytes.
    std::uint32_t fingerprint() const;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> matrix_;
    std::uint64_t seed_;
};

/// l2_normalize(matrix * features). Throws DimensionMismatch or ZeroVector.
Embedding frozen_encode(const FrozenProjector& projector, std::span<const double> features);

/// Checkpoint = sequence of tensor containers: architecture descriptor, then
/// (weights, bias) per layer.
void save_checkpoint(const StudentEncoderParams& params, const std::filesystem::path& path);
StudentEncoderParams load_checkpoint(const std::filesystem::path& path);
/// Also throws ShapeMismatch if the stored architecture differs from `expected`.
StudentEncoderParams load_checkpoint(const std::filesystem::path& path, const StudentArchitecture& expected);

}  // namespace voxalign
