#include "voxalign/encoders.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "voxalign/error.hpp"
#include "voxalign/kernels.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/tensor_io.hpp"

namespace voxalign {
namespace {

double activate(Activation a, double x) {
    switch (a) {
        case Activation::Tanh: return std::tanh(x);
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Identity: return x;
    }
    return x;
}

// Derivative expressed through the pre-activation value.
double activation_slope(Activation a, double pre) {
    switch (a) {
        case Activation::Tanh: {
            const double t = std::tanh(pre);
            return 1.0 - t * t;
        }
        case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

std::vector<std::size_t> layer_widths(const StudentArchitecture& arch) {
    std::vector<std::size_t> widths;
    widths.push_back(arch.input_dim);
    widths.insert(widths.end(), arch.hidden_dims.begin(), arch.hidden_dims.end());
    widths.push_back(arch.output_dim);
    return widths;
}

// Descriptor tensor: [input_dim, output_dim, activation, hidden_dims...]
Tensor architecture_tensor(const StudentArchitecture& arch) {
    Tensor t;
    t.data = {static_cast<double>(arch.input_dim), static_cast<double>(arch.output_dim),
              static_cast<double>(static_cast<std::uint8_t>(arch.activation))};
    for (auto h : arch.hidden_dims) t.data.push_back(static_cast<double>(h));
    t.dims = {t.data.size()};
    return t;
}

std::size_t as_dim(double v) {
    if (!(v >= 1.0) || v != std::floor(v) || v > 1e9) {
        throw Error(ErrorCode::FormatError, "checkpoint descriptor holds a non-integer or non-positive width");
    }
    return static_cast<std::size_t>(v);
}

StudentArchitecture architecture_from_tensor(const Tensor& t) {
    if (t.dims.size() != 1 || t.data.size() < 3) {
        throw Error(ErrorCode::FormatError, "checkpoint architecture descriptor malformed");
    }
    StudentArchitecture arch;
    arch.input_dim = as_dim(t.data[0]);
    arch.output_dim = as_dim(t.data[1]);
    const double act = t.data[2];
    if (act != 0.0 && act != 1.0 && act != 2.0) {
        throw Error(ErrorCode::FormatError, "checkpoint activation code out of range");
    }
    arch.activation = static_cast<Activation>(static_cast<std::uint8_t>(act));
    arch.hidden_dims.clear();
    for (std::size_t i = 3; i < t.data.size(); ++i) arch.hidden_dims.push_back(as_dim(t.data[i]));
    return arch;
}

}  // namespace

const char* to_string(Activation a) noexcept {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Relu: return "relu";
        case Activation::Identity: return "identity";
    }
    return "unknown";
}

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::Relu;
    if (name == "identity") return Activation::Identity;
    throw Error(ErrorCode::InvalidArchitecture, "unknown activation '" + name + "'");
}

void validate(const StudentArchitecture& arch) {
    if (arch.input_dim == 0 || arch.output_dim == 0) {
        throw Error(ErrorCode::InvalidArchitecture, "input and output widths must be positive");
    }
    for (auto h : arch.hidden_dims) {
        if (h == 0) throw Error(ErrorCode::InvalidArchitecture, "hidden layer of width 0");
    }
}

std::size_t StudentEncoderParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

bool StudentEncoderParams::all_finite() const {
    for (const auto& l : layers) {
        for (double w : l.weights)
            if (!std::isfinite(w)) return false;
        for (double b : l.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

StudentEncoderParams StudentEncoderParams::zeros_like() const {
    StudentEncoderParams z;
    z.arch = arch;
    z.layers.reserve(layers.size());
    for (const auto& l : layers) {
        z.layers.push_back(DenseLayer{l.in, l.out, std::vector<double>(l.weights.size(), 0.0),
                                      std::vector<double>(l.bias.size(), 0.0)});
    }
    return z;
}

StudentEncoderParams init_student(const StudentArchitecture& arch, std::uint64_t seed) {
    validate(arch);
    StudentEncoderParams params;
    params.arch = arch;
    Rng rng(seed);
    const auto widths = layer_widths(arch);
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        DenseLayer layer;
        layer.in = widths[k];
        layer.out = widths[k + 1];
        layer.weights.resize(layer.in * layer.out);
        const double stddev = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (double& w : layer.weights) w = stddev * rng.normal();
        layer.bias.assign(layer.out, 0.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

StudentOutput student_forward(const StudentEncoderParams& params, const FrameWindow& window) {
    const std::size_t f = params.arch.input_dim;
    if (window.feature_dim != f) {
        throw Error(ErrorCode::DimensionMismatch, "window has " + std::to_string(window.feature_dim) +
                                                      " features, encoder expects " + std::to_string(f));
    }
    if (window.frame_count == 0) throw Error(ErrorCode::EmptyInput, "window has no frames");
    if (window.data.size() != window.frame_count * f) {
        throw Error(ErrorCode::DimensionMismatch, "window buffer does not match frame_count x feature_dim");
    }

    StudentOutput out;
    out.cache.frame_count = window.frame_count;

    std::vector<double> pooled(f, 0.0);
    for (std::size_t t = 0; t < window.frame_count; ++t) kernels::axpy(1.0, window.frame(t), pooled);
    kernels::scale(1.0 / static_cast<double>(window.frame_count), pooled);

    std::vector<double> x = std::move(pooled);
    const std::size_t n_layers = params.layers.size();
    for (std::size_t k = 0; k < n_layers; ++k) {
        const DenseLayer& layer = params.layers[k];
        if (layer.in != x.size()) throw Error(ErrorCode::InvalidArchitecture, "layer widths do not chain");
        std::vector<double> pre(layer.out);
        kernels::gemv(layer.weights, layer.out, layer.in, x, layer.bias, pre);
        std::vector<double> next = pre;
        if (k + 1 < n_layers) {
            for (double& v : next) v = activate(params.arch.activation, v);
        }
        out.cache.layer_inputs.push_back(std::move(x));
        out.cache.pre_activations.push_back(std::move(pre));
        x = std::move(next);
    }
    out.raw = std::move(x);
    return out;
}

void student_backward_accumulate(const StudentEncoderParams& params, const ForwardCache& cache,
                                 std::span<const double> upstream, StudentEncoderParams& grads) {
    const std::size_t n_layers = params.layers.size();
    if (cache.layer_inputs.size() != n_layers || cache.pre_activations.size() != n_layers ||
        grads.layers.size() != n_layers) {
        throw Error(ErrorCode::StaleCache, "cache layer count does not match parameters");
    }
    for (std::size_t k = 0; k < n_layers; ++k) {
        const DenseLayer& layer = params.layers[k];
        if (cache.layer_inputs[k].size() != layer.in || cache.pre_activations[k].size() != layer.out ||
            grads.layers[k].weights.size() != layer.weights.size() ||
            grads.layers[k].bias.size() != layer.bias.size()) {
            throw Error(ErrorCode::StaleCache, "cache shapes do not match layer " + std::to_string(k));
        }
    }
    if (upstream.size() != params.layers.back().out) {
        throw Error(ErrorCode::StaleCache, "upstream gradient has wrong width");
    }

    // delta = dL/d(pre-activation of layer k)
    std::vector<double> delta(upstream.begin(), upstream.end());
    for (std::size_t k = n_layers; k-- > 0;) {
        const DenseLayer& layer = params.layers[k];
        DenseLayer& g = grads.layers[k];
        kernels::rank1_accumulate(delta, cache.layer_inputs[k], g.weights);
        kernels::axpy(1.0, delta, g.bias);
        if (k == 0) break;
        std::vector<double> below(layer.in, 0.0);
        kernels::gemv_transpose_accumulate(layer.weights, layer.out, layer.in, delta, below);
        const auto& pre_below = cache.pre_activations[k - 1];
        for (std::size_t i = 0; i < below.size(); ++i) below[i] *= activation_slope(params.arch.activation, pre_below[i]);
        delta = std::move(below);
    }
}

StudentEncoderParams student_backward(const StudentEncoderParams& params, const ForwardCache& cache,
                                      std::span<const double> upstream) {
    StudentEncoderParams grads = params.zeros_like();
    student_backward_accumulate(params, cache, upstream, grads);
    return grads;
}

FrozenProjector::FrozenProjector(std::size_t rows, std::size_t cols, std::vector<double> matrix, std::uint64_t seed)
    : rows_(rows), cols_(cols), matrix_(std::move(matrix)), seed_(seed) {
    if (rows_ == 0 || cols_ == 0 || matrix_.size() != rows_ * cols_) {
        throw Error(ErrorCode::DimensionMismatch, "projector matrix does not match rows x cols");
    }
}

FrozenProjector FrozenProjector::random(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> m(rows * cols);
    const double s = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : m) v = s * rng.normal();
    return FrozenProjector(rows, cols, std::move(m), seed);
}

std::uint32_t FrozenProjector::fingerprint() const {
    std::vector<unsigned char> bytes;
    bytes.reserve(matrix_.size() * 8);
    for (double v : matrix_) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(bits >> (8 * i)));
    }
    return crc32(bytes);
}

Embedding frozen_encode(const FrozenProjector& projector, std::span<const double> features) {
    if (features.size() != projector.source_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "projector expects " + std::to_string(projector.source_dim()) +
                                                      " features, got " + std::to_string(features.size()));
    }
    std::vector<double> out(projector.output_dim());
    kernels::gemv(projector.matrix(), projector.output_dim(), projector.source_dim(), features, {}, out);
    return l2_normalize(out);
}

void save_checkpoint(const StudentEncoderParams& params, const std::filesystem::path& path) {
    std::vector<Tensor> tensors;
    tensors.push_back(architecture_tensor(params.arch));
    for (const auto& l : params.layers) {
        tensors.push_back(Tensor{{l.out, l.in}, l.weights});
        tensors.push_back(Tensor{{l.out}, l.bias});
    }
    write_tensor_bundle(path, tensors);
}

StudentEncoderParams load_checkpoint(const std::filesystem::path& path) {
    const auto tensors = read_tensor_bundle(path);
    StudentEncoderParams params;
    params.arch = architecture_from_tensor(tensors.front());
    const auto widths = layer_widths(params.arch);
    const std::size_t n_layers = widths.size() - 1;
    if (tensors.size() != 1 + 2 * n_layers) {
        throw Error(ErrorCode::FormatError, "checkpoint holds " + std::to_string(tensors.size()) +
                                                " tensors, architecture needs " + std::to_string(1 + 2 * n_layers));
    }
    for (std::size_t k = 0; k < n_layers; ++k) {
        const Tensor& w = tensors[1 + 2 * k];
        const Tensor& b = tensors[2 + 2 * k];
        const std::vector<std::uint64_t> w_dims{widths[k + 1], widths[k]};
        const std::vector<std::uint64_t> b_dims{widths[k + 1]};
        if (w.dims != w_dims || b.dims != b_dims) {
            throw Error(ErrorCode::FormatError, "checkpoint layer " + std::to_string(k) + " has inconsistent shape");
        }
        params.layers.push_back(DenseLayer{widths[k], widths[k + 1], w.data, b.data});
    }
    return params;
}

StudentEncoderParams load_checkpoint(const std::filesystem::path& path, const StudentArchitecture& expected) {
    auto params = load_checkpoint(path);
    if (!(params.arch == expected)) {
        throw Error(ErrorCode::ShapeMismatch, "checkpoint architecture differs from the declared one");
    }
    return params;
}

}  // namespace voxalign
