#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "voxalign/embedding.hpp"

namespace voxalign {

/// Paired batch; index i ties audio[i], vision[i] and text[i] to one example.
/// `text` is absent on inference-only batches.
struct BatchEmbeddings {
    std::vector<Embedding> audio;
    std::vector<Embedding> vision;
    std::optional<std::vector<Embedding>> text;

    std::size_t batch_size() const noexcept { return audio.size(); }
};

struct LossOptions {
    /// Weight of the distillation term. 0 reproduces the contrastive-only variant.
    double lambda = 1.0;
    /// Logits are cos / temperature; 1 applies exp(cos) with no rescaling.
    double temperature = 1.0;
};

struct LossBreakdown {
    double con_audio_to_ct = 0.0;
    double con_ct_to_audio = 0.0;
    double con_symmetric = 0.0;
    /// 1 - cos batch mean; 0 when no teacher embeddings were supplied.
    double distill = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

/// -(1/N) sum_i log softmax_j(cos(q_i, k_j) / temperature)[i], via log-sum-exp.
/// Throws EmptyBatch or DimensionMismatch.
double contrastive_loss_directional(std::span<const Embedding> queries, std::span<const Embedding> keys,
                                    double temperature = 1.0);

/// audio->vision plus vision->audio (a sum, not a mean).
double contrastive_loss_symmetric(const BatchEmbeddings& batch, double temperature = 1.0);

/// (1/N) sum_i (1 - cos(a_i, t_i)), in [0, 2].
double distillation_loss(std::span<const Embedding> audio, std::span<const Embedding> teacher);

/// Throws MissingTeacher when lambda > 0 and the batch carries no text embeddings,
/// InvalidConfig for negative lambda or non-positive temperature.
LossBreakdown total_loss(const BatchEmbeddings& batch, const LossOptions& options);

struct LossGradient {
    LossBreakdown loss;
    /// d total / d raw_audio[i], including the normalization Jacobian.
    std::vector<std::vector<double>> d_raw_audio;
};

/// Loss and its gradient w.r.t. each raw (pre-normalization) audio embedding.
/// Vision and text are frozen; no gradient is produced for them. Pass an empty
/// `text` span when no teacher is available. Summation order is fixed.
LossGradient total_loss_gradient(std::span<const std::vector<double>> raw_audio, std::span<const Embedding> vision,
                                 std::span<const Embedding> text, const LossOptions& options);

}  // namespace voxalign
