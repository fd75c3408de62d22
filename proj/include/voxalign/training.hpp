#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voxalign/encoders.hpp"
#include "voxalign/losses.hpp"
#include "voxalign/rng.hpp"
#include "voxalign/synthdata.hpp"
#include "voxalign/windowing.hpp"

namespace voxalign {

struct AdamHyper {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First/second moments laid out as [W0, b0, W1, b1, ...] to mirror the params.
struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::uint64_t step = 0;

    static AdamState for_params(const StudentEncoderParams& params);
};

/// One bias-corrected Adam update; state.step is incremented before the
/// correction terms are formed. Throws ShapeMismatch or NonFiniteGradient
/// (params are left untouched in both cases).
void adam_step(StudentEncoderParams& params, const StudentEncoderParams& grads, AdamState& state,
               const AdamHyper& hyper);

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t steps = 2000;
    double learning_rate = 1e-3;
    double lambda = 1.0;
    double temperature = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    /// 0 disables periodic held-out evaluation.
    std::size_t eval_every = 0;
    /// false trains with contrastive loss only (lambda treated as 0).
    bool kd_enabled = true;
    std::vector<std::size_t> hidden_dims{128};
    Activation activation = Activation::Tanh;
    WindowSettings windows;

    double effective_lambda() const noexcept { return kd_enabled ? lambda : 0.0; }
    bool operator==(const TrainConfig&) const = default;
};

/// Throws InvalidConfig.
void validate(const TrainConfig& config);

/// Epoch-based sampling without replacement: each epoch is a fresh seeded
/// permutation of the pool, consumed in order. A batch that straddles an epoch
/// boundary takes the tail of one permutation and the head of the next.
class BatchSampler {
public:
    /// Throws EmptySplit if `pool` is empty.
    BatchSampler(std::vector<std::size_t> pool, std::uint64_t seed);

    std::vector<std::size_t> next(std::size_t batch_size);
    std::size_t epoch() const noexcept { return epoch_; }

private:
    void reshuffle();

    std::vector<std::size_t> pool_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t epoch_ = 0;
    Rng rng_;
};

/// Draws the next batch of examples from `split`.
std::vector<PairedExample> sample_batch(const Dataset& dataset, BatchSampler& sampler, std::size_t batch_size);

struct EvalSnapshot {
    std::size_t step = 0;  // number of updates applied when the snapshot was taken
    LossBreakdown held_out;
};

struct TrainReport {
    TrainConfig config;
    std::vector<LossBreakdown> loss_curve;  // one entry per step, measured before the update
    std::vector<EvalSnapshot> snapshots;
    std::vector<std::vector<std::size_t>> batch_order;
    std::uint32_t vision_fingerprint_before = 0;
    std::uint32_t vision_fingerprint_after = 0;
    std::uint32_t text_fingerprint_before = 0;
    std::uint32_t text_fingerprint_after = 0;
    std::optional<std::filesystem::path> checkpoint_path;
    double wall_clock_s = 0.0;
};

struct TrainResult {
    StudentEncoderParams params;
    TrainReport report;
};

/// Student architecture implied by a dataset and a training config.
StudentArchitecture student_architecture(const Dataset& dataset, const TrainConfig& config);

/// Adam over the student only; vision and text towers stay frozen.
/// Throws NonFiniteLoss (message carries the step index), EmptySplit, InvalidConfig.
/// Per-example encoding runs on `threads` workers; results do not depend on it.
TrainResult train(const TrainConfig& config, const Dataset& dataset, unsigned threads = 1);

/// Trains, then writes checkpoint.xmdt, loss_curve.csv and train_report.json to out_dir.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const std::filesystem::path& out_dir,
                  unsigned threads = 1);

/// Mean loss over `indices` in consecutive chunks of batch_size.
LossBreakdown held_out_loss(const StudentEncoderParams& params, const Dataset& dataset,
                            const std::vector<std::size_t>& indices, const TrainConfig& config, unsigned threads = 1);

void write_loss_curve_csv(const std::vector<LossBreakdown>& curve, const std::filesystem::path& path);

}  // namespace voxalign
