#pragma once

// JSON views of run configurations and reports. apply_json starts from the
// struct passed in, so missing keys keep their current values; unknown keys
// are rejected with InvalidConfig.

#include "json.hpp"
#include "voxalign/evaluation.hpp"
#include "voxalign/synthdata.hpp"
#include "voxalign/training.hpp"

namespace voxalign {

using Json = nlohmann::ordered_json;

Json to_json(const GeneratorConfig& config);
void apply_json(const Json& j, GeneratorConfig& config);

Json to_json(const TrainConfig& config);
void apply_json(const Json& j, TrainConfig& config);

Json to_json(const EvalConfig& config);
void apply_json(const Json& j, EvalConfig& config);

Json to_json(const LossBreakdown& loss);
/// Persisted training record. Wall-clock time is deliberately left out so that
/// identical runs produce identical files.
Json to_json(const TrainReport& report);
Json to_json(const MetricsReport& report);
Json to_json(const RetrievalReport& report);

}  // namespace voxalign
