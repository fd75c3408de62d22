#include "voxalign/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "voxalign/error.hpp"
#include "voxalign/parallel.hpp"

namespace voxalign {
namespace {

namespace fs = std::filesystem;

std::vector<PromptPair> prompt_pairs(const std::vector<std::string>& names, const Matrix& pos, const Matrix& neg) {
    if (pos.rows != names.size() || neg.rows != names.size() || pos.cols != neg.cols) {
        throw Error(ErrorCode::DimensionMismatch, "prompt matrices do not match the label set");
    }
    std::vector<PromptPair> out;
    for (std::size_t l = 0; l < names.size(); ++l) {
        const auto row = [&](const Matrix& m) {
            return std::vector<double>(m.data.begin() + static_cast<std::ptrdiff_t>(l * m.cols),
                                       m.data.begin() + static_cast<std::ptrdiff_t>((l + 1) * m.cols));
        };
        out.push_back(PromptPair{names[l], row(pos), row(neg)});
    }
    return out;
}

Embedding encode_spoken_prompt(const StudentEncoderParams& student, std::span<const double> features) {
    const FrameWindow single{features, 1, features.size()};
    return l2_normalize(student_forward(student, single).raw);
}

std::vector<Embedding> collect(std::vector<std::optional<Embedding>>& slots) {
    std::vector<Embedding> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

template <typename Case>
std::vector<Embedding> vision_embeddings(const FrozenProjector& tower, std::span<const Case> cases, unsigned threads) {
    std::vector<std::optional<Embedding>> slots(cases.size());
    parallel_for(cases.size(), threads, [&](std::size_t i) { slots[i] = frozen_encode(tower, cases[i].vision_features); });
    return collect(slots);
}

MetricsReport zero_shot_report(const std::vector<Embedding>& vision, std::span<const PromptPair> prompts,
                               const std::vector<Embedding>& pos, const std::vector<Embedding>& neg,
                               std::span<const std::uint8_t> labels, const EvalConfig& config, const char* path) {
    const ScoreMatrix scores = zero_shot_scores(vision, pos, neg);
    std::vector<std::string> names;
    for (const auto& p : prompts) names.push_back(p.label);
    MetricsReport report = classification_report(scores, labels, names, config.threshold);
    report.query_path = path;
    return report;
}

std::vector<std::size_t> identity_pairing(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

void check_prompt_count(std::span<const PromptPair> prompts, std::size_t n_cases, std::span<const std::uint8_t> labels) {
    if (prompts.empty()) throw Error(ErrorCode::EmptyInput, "no prompts");
    if (labels.size() != n_cases * prompts.size()) {
        throw Error(ErrorCode::DimensionMismatch, "label matrix is not cases x prompts");
    }
}

}  // namespace

std::vector<PromptPair> spoken_prompt_pairs(const PromptSet& prompts) {
    return prompt_pairs(prompts.label_names, prompts.audio_positive, prompts.audio_negative);
}

std::vector<PromptPair> written_prompt_pairs(const PromptSet& prompts) {
    return prompt_pairs(prompts.label_names, prompts.text_positive, prompts.text_negative);
}

std::vector<SpeechCase> speech_cases(const Dataset& dataset, std::span<const std::size_t> indices) {
    std::vector<SpeechCase> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        const PairedExample& ex = dataset.examples.at(i);
        out.push_back(SpeechCase{&ex.audio, ex.vision_features});
    }
    return out;
}

std::vector<TextCase> text_cases(const Dataset& dataset, std::span<const std::size_t> indices) {
    std::vector<TextCase> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        const PairedExample& ex = dataset.examples.at(i);
        out.push_back(TextCase{ex.text_features, ex.vision_features});
    }
    return out;
}

const char* to_string(QueryPath p) noexcept { return p == QueryPath::Student ? "student" : "teacher"; }

QueryPath parse_query_path(const std::string& s) {
    if (s == "student") return QueryPath::Student;
    if (s == "teacher") return QueryPath::Teacher;
    throw Error(ErrorCode::InvalidConfig, "query path must be 'student' or 'teacher', got '" + s + "'");
}

std::vector<double> ScoreMatrix::column(std::size_t l) const {
    std::vector<double> out(cases);
    for (std::size_t e = 0; e < cases; ++e) out[e] = (*this)(e, l);
    return out;
}

ScoreMatrix zero_shot_scores(std::span<const Embedding> vision, std::span<const Embedding> positive_queries,
                             std::span<const Embedding> negative_queries) {
    if (vision.empty() || positive_queries.empty()) throw Error(ErrorCode::EmptyInput, "zero-shot needs cases and prompts");
    if (positive_queries.size() != negative_queries.size()) {
        throw Error(ErrorCode::DimensionMismatch, "positive and negative prompt counts differ");
    }
    const SimilarityMatrix pos = similarity_matrix(vision, positive_queries);
    const SimilarityMatrix neg = similarity_matrix(vision, negative_queries);
    ScoreMatrix s{vision.size(), positive_queries.size(), std::vector<double>(vision.size() * positive_queries.size())};
    for (std::size_t e = 0; e < s.cases; ++e) {
        for (std::size_t l = 0; l < s.labels; ++l) {
            // Two-way softmax written as a logistic in the cosine gap.
            const double gap = pos(e, l) - neg(e, l);
            s.data[e * s.labels + l] = 1.0 / (1.0 + std::exp(-gap));
        }
    }
    return s;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "scores and labels differ in length");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (auto y : labels) n_pos += y ? 1 : 0;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw Error(ErrorCode::DegenerateLabels, "AUROC needs both classes present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Sum of mid-ranks of positives; tied groups share their average rank.
    // Every quantity is an integer or half-integer, so the sum is exact.
    double positive_rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]]) positive_rank_sum += mid_rank;
        i = j + 1;
    }
    const double p = static_cast<double>(n_pos);
    const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(n_neg));
}

ConfusionMetrics thresholded_metrics(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                     double threshold) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "scores and labels differ in length");
    ConfusionMetrics m;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= threshold;
        const bool actual = labels[i] != 0;
        if (predicted && actual) ++m.tp;
        else if (predicted) ++m.fp;
        else if (actual) ++m.fn;
        else ++m.tn;
    }
    const auto tp = static_cast<double>(m.tp);
    const auto fp = static_cast<double>(m.fp);
    const auto fn = static_cast<double>(m.fn);
    m.precision = m.tp + m.fp > 0 ? tp / (tp + fp) : 0.0;
    m.recall = m.tp + m.fn > 0 ? tp / (tp + fn) : 0.0;
    m.f1 = m.tp > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    m.accuracy = scores.empty() ? 0.0 : static_cast<double>(m.tp + m.tn) / static_cast<double>(scores.size());
    return m;
}

MetricsReport classification_report(const ScoreMatrix& scores, std::span<const std::uint8_t> labels,
                                     std::span<const std::string> label_names, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0, 1)");
    if (labels.size() != scores.cases * scores.labels || label_names.size() != scores.labels) {
        throw Error(ErrorCode::DimensionMismatch, "labels do not match the score matrix");
    }
    if (scores.cases == 0 || scores.labels == 0) throw Error(ErrorCode::EmptyInput, "empty score matrix");

    MetricsReport r;
    r.threshold = threshold;
    r.label_count = scores.labels;
    r.case_count = scores.cases;
    double support_total = 0.0;
    for (std::size_t l = 0; l < scores.labels; ++l) {
        const std::vector<double> s = scores.column(l);
        std::vector<std::uint8_t> y(scores.cases);
        for (std::size_t e = 0; e < scores.cases; ++e) y[e] = labels[e * scores.labels + l];

        LabelMetrics lm;
        lm.label = label_names[l];
        lm.confusion = thresholded_metrics(s, y, threshold);
        lm.support = lm.confusion.tp + lm.confusion.fn;
        try {
            lm.auroc = auroc(s, y);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateLabels) throw;
            r.excluded_from_auroc.push_back(lm.label);
        }
        if (lm.auroc) {
            r.mean_auroc += *lm.auroc;
            ++r.auroc_label_count;
        }
        r.mean_f1 += lm.confusion.f1;
        r.mean_accuracy += lm.confusion.accuracy;
        r.mean_precision += lm.confusion.precision;
        r.mean_recall += lm.confusion.recall;
        r.weighted_f1 += static_cast<double>(lm.support) * lm.confusion.f1;
        support_total += static_cast<double>(lm.support);
        r.per_label.push_back(std::move(lm));
    }
    const double n = static_cast<double>(scores.labels);
    r.mean_auroc = r.auroc_label_count > 0 ? r.mean_auroc / static_cast<double>(r.auroc_label_count) : 0.0;
    r.mean_f1 /= n;
    r.mean_accuracy /= n;
    r.mean_precision /= n;
    r.mean_recall /= n;
    r.weighted_f1 = support_total > 0.0 ? r.weighted_f1 / support_total : 0.0;
    return r;
}

std::size_t match_rank(const Embedding& query, std::span<const Embedding> candidates, std::size_t true_index) {
    const double target = cosine_similarity(query, candidates[true_index]);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < candidates.size(); ++j) {
        if (j == true_index) continue;
        const double c = cosine_similarity(query, candidates[j]);
        if (c > target || (c == target && j < true_index)) ++ahead;
    }
    return ahead + 1;
}

RetrievalReport retrieval_recall_at_k(std::span<const Embedding> queries, std::span<const Embedding> candidates,
                                      std::span<const std::size_t> true_match, std::span<const std::size_t> ks) {
    if (queries.empty() || candidates.empty()) throw Error(ErrorCode::EmptyInput, "retrieval needs queries and candidates");
    if (true_match.size() != queries.size()) {
        throw Error(ErrorCode::MissingPair, "every query needs exactly one paired candidate");
    }
    std::set<std::size_t> seen;
    for (std::size_t m : true_match) {
        if (m >= candidates.size()) throw Error(ErrorCode::MissingPair, "paired candidate index out of range");
        if (!seen.insert(m).second) throw Error(ErrorCode::MissingPair, "two queries share one candidate");
    }
    const std::size_t d = candidates.front().dim();
    for (const auto& q : queries)
        if (q.dim() != d) throw Error(ErrorCode::DimensionMismatch, "query and candidate dims differ");

    RetrievalReport r;
    r.ks.assign(ks.begin(), ks.end());
    r.pool_size = candidates.size();
    r.query_count = queries.size();
    std::vector<std::size_t> ranks(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) ranks[q] = match_rank(queries[q], candidates, true_match[q]);
    for (std::size_t k : r.ks) {
        std::size_t hits = 0;
        for (std::size_t rank : ranks) hits += rank <= k ? 1 : 0;
        r.recall.push_back(static_cast<double>(hits) / static_cast<double>(queries.size()));
    }
    return r;
}

MetricsReport evaluate_zero_shot_student(const StudentEncoderParams& student, const FrozenProjector& vision_tower,
                                         std::span<const SpeechCase> cases, std::span<const PromptPair> spoken_prompts,
                                         std::span<const std::uint8_t> labels, const EvalConfig& config,
                                         unsigned threads) {
    check_prompt_count(spoken_prompts, cases.size(), labels);
    const auto vision = vision_embeddings(vision_tower, cases, threads);
    std::vector<Embedding> pos;
    std::vector<Embedding> neg;
    for (const auto& p : spoken_prompts) {
        pos.push_back(encode_spoken_prompt(student, p.positive));
        neg.push_back(encode_spoken_prompt(student, p.negative));
    }
    return zero_shot_report(vision, spoken_prompts, pos, neg, labels, config, "student");
}

MetricsReport evaluate_zero_shot_teacher(const FrozenProjector& text_tower, const FrozenProjector& vision_tower,
                                         std::span<const TextCase> cases, std::span<const PromptPair> written_prompts,
                                         std::span<const std::uint8_t> labels, const EvalConfig& config,
                                         unsigned threads) {
    check_prompt_count(written_prompts, cases.size(), labels);
    const auto vision = vision_embeddings(vision_tower, cases, threads);
    std::vector<Embedding> pos;
    std::vector<Embedding> neg;
    for (const auto& p : written_prompts) {
        pos.push_back(frozen_encode(text_tower, p.positive));
        neg.push_back(frozen_encode(text_tower, p.negative));
    }
    return zero_shot_report(vision, written_prompts, pos, neg, labels, config, "teacher");
}

RetrievalReport evaluate_retrieval_student(const StudentEncoderParams& student, const FrozenProjector& vision_tower,
                                           std::span<const SpeechCase> cases, const EvalConfig& config,
                                           unsigned threads) {
    const auto vision = vision_embeddings(vision_tower, cases, threads);
    std::vector<std::optional<Embedding>> slots(cases.size());
    parallel_for(cases.size(), threads, [&](std::size_t i) {
        if (cases[i].audio == nullptr) throw Error(ErrorCode::EmptyInput, "speech case without audio");
        slots[i] = encode_long_audio(*cases[i].audio, student, config.windows);
    });
    const auto queries = collect(slots);
    RetrievalReport r = retrieval_recall_at_k(queries, vision, identity_pairing(cases.size()), config.ks);
    r.query_path = "student";
    return r;
}

RetrievalReport evaluate_retrieval_teacher(const FrozenProjector& text_tower, const FrozenProjector& vision_tower,
                                           std::span<const TextCase> cases, const EvalConfig& config,
                                           unsigned threads) {
    const auto vision = vision_embeddings(vision_tower, cases, threads);
    std::vector<std::optional<Embedding>> slots(cases.size());
    parallel_for(cases.size(), threads,
                 [&](std::size_t i) { slots[i] = frozen_encode(text_tower, cases[i].text_features); });
    const auto queries = collect(slots);
    RetrievalReport r = retrieval_recall_at_k(queries, vision, identity_pairing(cases.size()), config.ks);
    r.query_path = "teacher";
    return r;
}

std::vector<std::uint8_t> label_matrix(const Dataset& dataset, std::span<const std::size_t> indices) {
    std::vector<std::uint8_t> out;
    for (std::size_t i : indices) {
        const auto& y = dataset.examples.at(i).labels;
        out.insert(out.end(), y.begin(), y.end());
    }
    return out;
}

MetricsReport evaluate_zero_shot(const Dataset& dataset, QueryPath path, const StudentEncoderParams* student,
                                 const EvalConfig& config, unsigned threads) {
    const auto indices = dataset.manifest.indices_of(config.split);
    if (indices.empty()) throw Error(ErrorCode::EmptySplit, std::string("no examples in split ") + to_string(config.split));
    const auto labels = label_matrix(dataset, indices);
    if (path == QueryPath::Student) {
        if (student == nullptr) throw Error(ErrorCode::InvalidConfig, "student path needs a checkpoint");
        const auto cases = speech_cases(dataset, indices);
        return evaluate_zero_shot_student(*student, dataset.towers.vision, cases, spoken_prompt_pairs(dataset.prompts),
                                          labels, config, threads);
    }
    const auto cases = text_cases(dataset, indices);
    return evaluate_zero_shot_teacher(dataset.towers.text, dataset.towers.vision, cases,
                                      written_prompt_pairs(dataset.prompts), labels, config, threads);
}

RetrievalReport evaluate_retrieval(const Dataset& dataset, QueryPath path, const StudentEncoderParams* student,
                                   const EvalConfig& config, unsigned threads) {
    const auto indices = dataset.manifest.indices_of(config.split);
    if (indices.empty()) throw Error(ErrorCode::EmptySplit, std::string("no examples in split ") + to_string(config.split));
    if (path == QueryPath::Student) {
        if (student == nullptr) throw Error(ErrorCode::InvalidConfig, "student path needs a checkpoint");
        return evaluate_retrieval_student(*student, dataset.towers.vision, speech_cases(dataset, indices), config,
                                          threads);
    }
    return evaluate_retrieval_teacher(dataset.towers.text, dataset.towers.vision, text_cases(dataset, indices), config,
                                      threads);
}

void write_metrics_csv(const MetricsReport& report, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    out.precision(17);
    out << "label,support,auroc,f1,accuracy,precision,recall,tp,fp,fn,tn\n";
    for (const auto& l : report.per_label) {
        out << l.label << ',' << l.support << ',';
        if (l.auroc) out << *l.auroc;
        out << ',' << l.confusion.f1 << ',' << l.confusion.accuracy << ',' << l.confusion.precision << ','
            << l.confusion.recall << ',' << l.confusion.tp << ',' << l.confusion.fp << ',' << l.confusion.fn << ','
            << l.confusion.tn << '\n';
    }
    out << "mean," << ',' << report.mean_auroc << ',' << report.mean_f1 << ',' << report.mean_accuracy << ','
        << report.mean_precision << ',' << report.mean_recall << ",,,,\n";
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

void write_retrieval_csv(const RetrievalReport& report, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path.string());
    out.precision(17);
    out << "k,recall,pool_size,query_count\n";
    for (std::size_t i = 0; i < report.ks.size(); ++i) {
        out << report.ks[i] << ',' << report.recall[i] << ',' << report.pool_size << ',' << report.query_count << '\n';
    }
    if (!out) throw Error(ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace voxalign
