#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "voxalign/embedding.hpp"
#include "voxalign/encoders.hpp"

namespace voxalign {

/// Long audio-side input as a sequence of fixed-width feature frames.
struct AudioSignal {
    std::size_t feature_dim = 0;
    double frame_rate_hz = 1.0;
    std::vector<double> frames;  // frame_count x feature_dim, row-major

    std::size_t frame_count() const noexcept { return feature_dim == 0 ? 0 : frames.size() / feature_dim; }
    FrameWindow window(std::size_t begin, std::size_t end) const;
    /// Throws EmptyInput / DimensionMismatch / InvalidConfig on a broken signal.
    void validate() const;
};

struct WindowSettings {
    double window_len_s = 30.0;
    double overlap_s = 2.0;
};

/// Half-open frame interval [begin, end).
struct Window {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t length() const noexcept { return end - begin; }
    bool operator==(const Window&) const = default;
};

struct WindowPlan {
    std::vector<Window> windows;
    double window_len_s = 0.0;
    double overlap_s = 0.0;
};

/// Frame counts implied by a duration at a given frame rate (rounded to nearest).
std::size_t window_frames(double frame_rate_hz, const WindowSettings& settings);
std::size_t stride_frames(double frame_rate_hz, const WindowSettings& settings);

/// Windows start at 0, stride, 2*stride, ... while they fit. If the last one
/// stops short of total_frames, a full-length window anchored at the end is
/// appended. A signal shorter than one window gets the single window [0, total).
/// Throws InvalidWindowConfig or EmptyInput.
WindowPlan plan_windows(std::size_t total_frames, double frame_rate_hz, double window_len_s, double overlap_s);

/// Arithmetic mean of raw window embeddings, then one l2_normalize.
/// Throws EmptyInput, DimensionMismatch, or ZeroVector if the mean vanishes.
Embedding pool_window_embeddings(std::span<const std::vector<double>> window_embeddings);
Embedding pool_window_embeddings(std::span<const Embedding> window_embeddings);

/// Raw pooled embedding plus everything needed to backpropagate into the student.
struct LongAudioTrace {
    WindowPlan plan;
    std::vector<ForwardCache> window_caches;
    std::vector<double> pooled_raw;  // mean of window outputs, before normalization
};

LongAudioTrace encode_long_audio_traced(const AudioSignal& signal, const StudentEncoderParams& encoder,
                                        const WindowSettings& settings);

/// Gradient of a loss w.r.t. pooled_raw pushed into every window's forward
/// cache and summed into `grads`.
void backward_long_audio(const StudentEncoderParams& encoder, const LongAudioTrace& trace,
                         std::span<const double> d_pooled_raw, StudentEncoderParams& grads);

Embedding encode_long_audio(const AudioSignal& signal, const StudentEncoderParams& encoder,
                            const WindowSettings& settings);

}  // namespace voxalign
