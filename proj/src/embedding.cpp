#include "voxalign/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "voxalign/error.hpp"
#include "voxalign/kernels.hpp"

namespace voxalign {

double l2_norm(std::span<const double> v) { return std::sqrt(kernels::dot(v, v)); }

Embedding l2_normalize(std::span<const double> v) {
    const double norm = l2_norm(v);
    if (!(norm >= kZeroNormThreshold)) {
        throw Error(ErrorCode::ZeroVector, "vector norm " + std::to_string(norm) + " below threshold");
    }
    std::vector<double> out(v.begin(), v.end());
    // Divide rather than multiply by the reciprocal: one rounding per entry.
    for (double& x : out) x /= norm;
    return Embedding(std::move(out));
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::DimensionMismatch,
                    "cosine of " + std::to_string(a.size()) + "-d and " + std::to_string(b.size()) + "-d vectors");
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (!(na >= kZeroNormThreshold) || !(nb >= kZeroNormThreshold)) {
        throw Error(ErrorCode::ZeroVector, "cosine with a zero vector");
    }
    const double c = kernels::dot(a, b) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
    return cosine_similarity(a.values(), b.values());
}

SimilarityMatrix SimilarityMatrix::transposed() const {
    SimilarityMatrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

SimilarityMatrix similarity_matrix(std::span<const Embedding> queries, std::span<const Embedding> candidates) {
    if (queries.empty() || candidates.empty()) {
        throw Error(ErrorCode::EmptyInput, "similarity matrix needs at least one query and one candidate");
    }
    const std::size_t d = queries.front().dim();
    for (const auto& e : queries)
        if (e.dim() != d) throw Error(ErrorCode::DimensionMismatch, "queries do not share a dimension");
    for (const auto& e : candidates)
        if (e.dim() != d) throw Error(ErrorCode::DimensionMismatch, "candidates do not match query dimension");

    SimilarityMatrix s(queries.size(), candidates.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
        for (std::size_t j = 0; j < candidates.size(); ++j) s(i, j) = cosine_similarity(queries[i], candidates[j]);
    return s;
}

}  // namespace voxalign
