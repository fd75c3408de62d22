#include "voxalign/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voxalign/error.hpp"
#include "voxalign/kernels.hpp"

namespace voxalign {
namespace {

void check_pairing(std::span<const Embedding> a, std::span<const Embedding> b, const char* what) {
    if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyBatch, std::string(what) + ": empty batch");
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + ": batch sizes " + std::to_string(a.size()) +
                                                      " and " + std::to_string(b.size()));
    }
}

void check_options(const LossOptions& o) {
    if (!(o.lambda >= 0.0) || !std::isfinite(o.lambda)) {
        throw Error(ErrorCode::InvalidConfig, "lambda must be finite and >= 0");
    }
    if (!(o.temperature > 0.0) || !std::isfinite(o.temperature)) {
        throw Error(ErrorCode::InvalidConfig, "temperature must be finite and > 0");
    }
}

double log_sum_exp(std::span<const double> logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double x : logits) s += std::exp(x - m);
    return m + std::log(s);
}

// Mean over rows of (LSE(row) - row[i]) for a square matrix of cosines.
double directional_from_matrix(const SimilarityMatrix& s, double temperature) {
    const std::size_t n = s.rows();
    std::vector<double> logits(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) logits[j] = s(i, j) / temperature;
        total += log_sum_exp(logits) - logits[i];
    }
    return total / static_cast<double>(n);
}

}  // namespace

double contrastive_loss_directional(std::span<const Embedding> queries, std::span<const Embedding> keys,
                                    double temperature) {
    check_pairing(queries, keys, "contrastive loss");
    if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
    return directional_from_matrix(similarity_matrix(queries, keys), temperature);
}

double contrastive_loss_symmetric(const BatchEmbeddings& batch, double temperature) {
    check_pairing(batch.audio, batch.vision, "symmetric contrastive loss");
    if (!(temperature > 0.0)) throw Error(ErrorCode::InvalidConfig, "temperature must be > 0");
    const SimilarityMatrix s = similarity_matrix(batch.audio, batch.vision);
    return directional_from_matrix(s, temperature) + directional_from_matrix(s.transposed(), temperature);
}

double distillation_loss(std::span<const Embedding> audio, std::span<const Embedding> teacher) {
    check_pairing(audio, teacher, "distillation loss");
    double sum = 0.0;
    for (std::size_t i = 0; i < audio.size(); ++i) sum += 1.0 - cosine_similarity(audio[i], teacher[i]);
    return sum / static_cast<double>(audio.size());
}

LossBreakdown total_loss(const BatchEmbeddings& batch, const LossOptions& options) {
    check_options(options);
    check_pairing(batch.audio, batch.vision, "total loss");
    const bool has_teacher = batch.text.has_value();
    if (!has_teacher && options.lambda > 0.0) {
        throw Error(ErrorCode::MissingTeacher, "lambda > 0 requires teacher text embeddings");
    }

    LossBreakdown out;
    const SimilarityMatrix s = similarity_matrix(batch.audio, batch.vision);
    out.con_audio_to_ct = directional_from_matrix(s, options.temperature);
    out.con_ct_to_audio = directional_from_matrix(s.transposed(), options.temperature);
    out.con_symmetric = out.con_audio_to_ct + out.con_ct_to_audio;
    out.distill = has_teacher ? distillation_loss(batch.audio, *batch.text) : 0.0;
    out.lambda = options.lambda;
    out.total = out.con_symmetric + options.lambda * out.distill;
    return out;
}

LossGradient total_loss_gradient(std::span<const std::vector<double>> raw_audio, std::span<const Embedding> vision,
                                 std::span<const Embedding> text, const LossOptions& options) {
    check_options(options);
    const std::size_t n = raw_audio.size();
    if (n == 0) throw Error(ErrorCode::EmptyBatch, "loss gradient: empty batch");
    if (!text.empty() && text.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "teacher batch size does not match audio batch size");
    }
    if (text.empty() && options.lambda > 0.0) {
        throw Error(ErrorCode::MissingTeacher, "lambda > 0 requires teacher text embeddings");
    }

    BatchEmbeddings batch;
    batch.audio.reserve(n);
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        batch.audio.push_back(l2_normalize(raw_audio[i]));
        norms[i] = l2_norm(raw_audio[i]);
    }
    batch.vision.assign(vision.begin(), vision.end());
    if (!text.empty()) batch.text.emplace(text.begin(), text.end());

    LossGradient out;
    out.loss = total_loss(batch, options);

    const double tau = options.temperature;
    const SimilarityMatrix s = similarity_matrix(batch.audio, batch.vision);

    // Row softmax (audio queries) and column softmax (vision queries).
    SimilarityMatrix row_p(n, n);
    SimilarityMatrix col_p(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = s(i, 0);
        for (std::size_t j = 1; j < n; ++j) m = std::max(m, s(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (row_p(i, j) = std::exp((s(i, j) - m) / tau));
        for (std::size_t j = 0; j < n; ++j) row_p(i, j) /= z;
    }
    for (std::size_t j = 0; j < n; ++j) {
        double m = s(0, j);
        for (std::size_t i = 1; i < n; ++i) m = std::max(m, s(i, j));
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) z += (col_p(i, j) = std::exp((s(i, j) - m) / tau));
        for (std::size_t i = 0; i < n; ++i) col_p(i, j) /= z;
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    const std::size_t d = batch.audio.front().dim();
    out.d_raw_audio.assign(n, std::vector<double>(d, 0.0));
    std::vector<double> g(d);
    for (std::size_t i = 0; i < n; ++i) {
        std::fill(g.begin(), g.end(), 0.0);
        // d total / d cos(a_i, v_j) from both contrastive directions.
        for (std::size_t j = 0; j < n; ++j) {
            const double delta = (i == j) ? 2.0 : 0.0;
            const double coeff = (row_p(i, j) + col_p(i, j) - delta) * inv_n / tau;
            kernels::axpy(coeff, batch.vision[j].values(), g);
        }
        if (!text.empty() && options.lambda != 0.0) {
            kernels::axpy(-options.lambda * inv_n, text[i].values(), g);
        }
        // Project out the radial component and undo the normalization scale.
        const auto a = batch.audio[i].values();
        const double radial = kernels::dot(g, a);
        auto& dr = out.d_raw_audio[i];
        for (std::size_t k = 0; k < d; ++k) dr[k] = (g[k] - radial * a[k]) / norms[i];
    }
    return out;
}

}  // namespace voxalign
