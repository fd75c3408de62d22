#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voxalign/embedding.hpp"
#include "voxalign/encoders.hpp"
#include "voxalign/synthdata.hpp"
#include "voxalign/windowing.hpp"

namespace voxalign {

/// Feature-space query pair for one label, fed to a query-side encoder.
struct PromptPair {
    std::string label;
    std::vector<double> positive;
    std::vector<double> negative;
};

/// Spoken prompts (speech path) and written prompts (teacher path).
std::vector<PromptPair> spoken_prompt_pairs(const PromptSet& prompts);
std::vector<PromptPair> written_prompt_pairs(const PromptSet& prompts);

/// Per-case inputs available to the speech-only inference path. There is no
/// text field: nothing downstream of a SpeechCase can reach transcripts.
struct SpeechCase {
    const AudioSignal* audio = nullptr;
    std::span<const double> vision_features;
};

/// Per-case inputs for the text-teacher reference path.
struct TextCase {
    std::span<const double> text_features;
    std::span<const double> vision_features;
};

std::vector<SpeechCase> speech_cases(const Dataset& dataset, std::span<const std::size_t> indices);
std::vector<TextCase> text_cases(const Dataset& dataset, std::span<const std::size_t> indices);

enum class QueryPath { Student, Teacher };
const char* to_string(QueryPath p) noexcept;
/// "student" or "teacher"; throws InvalidConfig otherwise.
QueryPath parse_query_path(const std::string& s);

/// Row-major cases x labels matrix of scores in (0, 1).
struct ScoreMatrix {
    std::size_t cases = 0;
    std::size_t labels = 0;
    std::vector<double> data;

    double operator()(std::size_t e, std::size_t l) const { return data[e * labels + l]; }
    std::vector<double> column(std::size_t l) const;
};

/// score(e, l) = exp(cos(v_e, q+_l)) / (exp(cos(v_e, q+_l)) + exp(cos(v_e, q-_l))).
/// Throws DimensionMismatch or EmptyInput.
ScoreMatrix zero_shot_scores(std::span<const Embedding> vision, std::span<const Embedding> positive_queries,
                             std::span<const Embedding> negative_queries);

/// P(score of random positive > random negative), ties count 1/2.
/// Throws DegenerateLabels if either class is absent, DimensionMismatch on length mismatch.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct ConfusionMetrics {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

/// Prediction is score >= threshold. Undefined ratios are reported as 0.
ConfusionMetrics thresholded_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                     double threshold);

struct LabelMetrics {
    std::string label;
    std::optional<double> auroc;  // absent when the split has a single class for this label
    ConfusionMetrics confusion;
    std::size_t support = 0;  // positives
};

struct MetricsReport {
    std::string query_path;
    double threshold = 0.5;
    std::size_t label_count = 0;
    std::size_t case_count = 0;
    std::vector<LabelMetrics> per_label;
    double mean_auroc = 0.0;            // over labels with a defined AUROC
    std::size_t auroc_label_count = 0;  // labels contributing to mean_auroc
    std::vector<std::string> excluded_from_auroc;
    double mean_f1 = 0.0;
    double mean_accuracy = 0.0;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double weighted_f1 = 0.0;  // weights = positive support
};

/// labels is cases x n_labels, row-major.
MetricsReport classification_report(const ScoreMatrix& scores, std::span<const std::uint8_t> labels,
                                    std::span<const std::string> label_names, double threshold);

inline const std::vector<std::size_t> kDefaultRecallKs{5, 10, 50, 100};

struct RetrievalReport {
    std::string query_path;
    std::vector<std::size_t> ks;
    std::vector<double> recall;  // recall[i] is recall@ks[i]
    std::size_t pool_size = 0;
    std::size_t query_count = 0;
};

/// Rank of the true match of query q among all candidates, 1-based, ordering by
/// cosine descending and breaking ties by lower candidate index.
std::size_t match_rank(const Embedding& query, std::span<const Embedding> candidates, std::size_t true_index);

/// true_match[q] is the candidate index paired with query q. Throws MissingPair
/// if the pairing is not an injection into the candidate pool.
RetrievalReport retrieval_recall_at_k(std::span<const Embedding> queries, std::span<const Embedding> candidates,
                                      std::span<const std::size_t> true_match,
                                      std::span<const std::size_t> ks = kDefaultRecallKs);

// ---------------------------------------------------------------------------
// End-to-end protocols.

struct EvalConfig {
    double threshold = 0.5;
    Split split = Split::Test;
    WindowSettings windows;
    std::vector<std::size_t> ks = kDefaultRecallKs;

    bool operator==(const EvalConfig&) const = default;
};

/// Speech path: spoken prompts through the student, matched against vision.
MetricsReport evaluate_zero_shot_student(const StudentEncoderParams& student, const FrozenProjector& vision_tower,
                                         std::span<const SpeechCase> cases, std::span<const PromptPair> spoken_prompts,
                                         std::span<const std::uint8_t> labels, const EvalConfig& config,
                                         unsigned threads = 1);

/// Teacher path: written prompts through the frozen text tower.
MetricsReport evaluate_zero_shot_teacher(const FrozenProjector& text_tower, const FrozenProjector& vision_tower,
                                         std::span<const TextCase> cases, std::span<const PromptPair> written_prompts,
                                         std::span<const std::uint8_t> labels, const EvalConfig& config,
                                         unsigned threads = 1);

/// Spoken reports (long audio through the student) retrieve vision embeddings.
RetrievalReport evaluate_retrieval_student(const StudentEncoderParams& student, const FrozenProjector& vision_tower,
                                           std::span<const SpeechCase> cases, const EvalConfig& config,
                                           unsigned threads = 1);

RetrievalReport evaluate_retrieval_teacher(const FrozenProjector& text_tower, const FrozenProjector& vision_tower,
                                           std::span<const TextCase> cases, const EvalConfig& config,
                                           unsigned threads = 1);

/// Dataset-level dispatch used by the CLI. `student` is required for the student path.
MetricsReport evaluate_zero_shot(const Dataset& dataset, QueryPath path, const StudentEncoderParams* student,
                                 const EvalConfig& config, unsigned threads = 1);
RetrievalReport evaluate_retrieval(const Dataset& dataset, QueryPath path, const StudentEncoderParams* student,
                                   const EvalConfig& config, unsigned threads = 1);

/// Labels of the given examples, flattened row-major.
std::vector<std::uint8_t> label_matrix(const Dataset& dataset, std::span<const std::size_t> indices);

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);
void write_retrieval_csv(const RetrievalReport& report, const std::filesystem::path& path);

}  // namespace voxalign
