#pragma once

// KD vs no-KD replication: per seed, synthesize a dataset, train both student
// variants from the same initialization and batch order, and evaluate them
// next to the text-teacher reference path.

#include <cstdint>
#include <vector>

#include "voxalign/evaluation.hpp"
#include "voxalign/synthdata.hpp"
#include "voxalign/training.hpp"

namespace voxalign {

struct VariantScores {
    double macro_f1 = 0.0;
    double mean_auroc = 0.0;
    double recall_at_10 = 0.0;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    VariantScores teacher;
    VariantScores kd;
    VariantScores nkd;
    double kd_final_con = 0.0;
    double nkd_final_con = 0.0;
};

struct ReplicationSummary {
    std::vector<SeedOutcome> seeds;
    VariantScores teacher;  // means over seeds
    VariantScores kd;
    VariantScores nkd;
    /// (kd - nkd) / (teacher - nkd) on mean macro F1; NaN when the gap is not positive.
    double f1_gap_recovery = 0.0;
};

/// Seed s drives both the generator (generator.seed = s) and training (train.seed = s).
ReplicationSummary run_replication(const GeneratorConfig& generator, const TrainConfig& train,
                                   const EvalConfig& eval, const std::vector<std::uint64_t>& seeds,
                                   unsigned threads = 1);

}  // namespace voxalign
