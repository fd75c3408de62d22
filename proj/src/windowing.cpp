#include "voxalign/windowing.hpp"

#include <cmath>
#include <string>

#include "voxalign/error.hpp"
#include "voxalign/kernels.hpp"

namespace voxalign {

FrameWindow AudioSignal::window(std::size_t begin, std::size_t end) const {
    if (begin >= end || end > frame_count()) {
        throw Error(ErrorCode::DimensionMismatch, "window [" + std::to_string(begin) + ", " + std::to_string(end) +
                                                      ") outside signal of " + std::to_string(frame_count()) +
                                                      " frames");
    }
    return FrameWindow{std::span<const double>(frames).subspan(begin * feature_dim, (end - begin) * feature_dim),
                       end - begin, feature_dim};
}

void AudioSignal::validate() const {
    if (feature_dim == 0) throw Error(ErrorCode::DimensionMismatch, "audio feature dimension is zero");
    if (frames.empty()) throw Error(ErrorCode::EmptyInput, "audio signal has no frames");
    if (frames.size() % feature_dim != 0) {
        throw Error(ErrorCode::DimensionMismatch, "audio buffer is not a whole number of frames");
    }
    if (!(frame_rate_hz > 0.0)) throw Error(ErrorCode::InvalidConfig, "frame rate must be positive");
}

std::size_t window_frames(double frame_rate_hz, const WindowSettings& s) {
    return static_cast<std::size_t>(std::llround(s.window_len_s * frame_rate_hz));
}

std::size_t stride_frames(double frame_rate_hz, const WindowSettings& s) {
    return static_cast<std::size_t>(std::llround((s.window_len_s - s.overlap_s) * frame_rate_hz));
}

WindowPlan plan_windows(std::size_t total_frames, double frame_rate_hz, double window_len_s, double overlap_s) {
    if (!(window_len_s > 0.0) || !(overlap_s >= 0.0) || !(overlap_s < window_len_s)) {
        throw Error(ErrorCode::InvalidWindowConfig, "need 0 <= overlap < window length, got L=" +
                                                        std::to_string(window_len_s) +
                                                        " O=" + std::to_string(overlap_s));
    }
    if (!(frame_rate_hz > 0.0)) throw Error(ErrorCode::InvalidWindowConfig, "frame rate must be positive");
    if (total_frames == 0) throw Error(ErrorCode::EmptyInput, "cannot window an empty signal");

    const WindowSettings s{window_len_s, overlap_s};
    const std::size_t width = window_frames(frame_rate_hz, s);
    const std::size_t stride = stride_frames(frame_rate_hz, s);
    if (width == 0 || stride == 0) {
        throw Error(ErrorCode::InvalidWindowConfig, "window or stride rounds to zero frames at this frame rate");
    }

    WindowPlan plan;
    plan.window_len_s = window_len_s;
    plan.overlap_s = overlap_s;
    if (total_frames <= width) {
        plan.windows.push_back({0, total_frames});
        return plan;
    }
    for (std::size_t start = 0; start + width <= total_frames; start += stride) {
        plan.windows.push_back({start, start + width});
    }
    if (plan.windows.back().end < total_frames) {
        plan.windows.push_back({total_frames - width, total_frames});
    }
    return plan;
}

Embedding pool_window_embeddings(std::span<const std::vector<double>> window_embeddings) {
    if (window_embeddings.empty()) throw Error(ErrorCode::EmptyInput, "no window embeddings to pool");
    const std::size_t d = window_embeddings.front().size();
    std::vector<double> mean(d, 0.0);
    for (const auto& e : window_embeddings) {
        if (e.size() != d) throw Error(ErrorCode::DimensionMismatch, "window embeddings differ in dimension");
        kernels::axpy(1.0, e, mean);
    }
    kernels::scale(1.0 / static_cast<double>(window_embeddings.size()), mean);
    return l2_normalize(mean);
}

Embedding pool_window_embeddings(std::span<const Embedding> window_embeddings) {
    std::vector<std::vector<double>> raw;
    raw.reserve(window_embeddings.size());
    for (const auto& e : window_embeddings) raw.emplace_back(e.values().begin(), e.values().end());
    return pool_window_embeddings(raw);
}

LongAudioTrace encode_long_audio_traced(const AudioSignal& signal, const StudentEncoderParams& encoder,
                                        const WindowSettings& settings) {
    signal.validate();
    LongAudioTrace trace;
    trace.plan = plan_windows(signal.frame_count(), signal.frame_rate_hz, settings.window_len_s, settings.overlap_s);
    trace.pooled_raw.assign(encoder.arch.output_dim, 0.0);
    trace.window_caches.reserve(trace.plan.windows.size());
    for (const Window& w : trace.plan.windows) {
        StudentOutput out = student_forward(encoder, signal.window(w.begin, w.end));
        kernels::axpy(1.0, out.raw, trace.pooled_raw);
        trace.window_caches.push_back(std::move(out.cache));
    }
    kernels::scale(1.0 / static_cast<double>(trace.plan.windows.size()), trace.pooled_raw);
    return trace;
}

void backward_long_audio(const StudentEncoderParams& encoder, const LongAudioTrace& trace,
                         std::span<const double> d_pooled_raw, StudentEncoderParams& grads) {
    std::vector<double> per_window(d_pooled_raw.begin(), d_pooled_raw.end());
    kernels::scale(1.0 / static_cast<double>(trace.window_caches.size()), per_window);
    for (const auto& cache : trace.window_caches) student_backward_accumulate(encoder, cache, per_window, grads);
}

Embedding encode_long_audio(const AudioSignal& signal, const StudentEncoderParams& encoder,
                            const WindowSettings& settings) {
    return l2_normalize(encode_long_audio_traced(signal, encoder, settings).pooled_raw);
}

}  // namespace voxalign
