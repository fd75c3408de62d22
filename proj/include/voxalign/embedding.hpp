#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace voxalign {

/// Unit-norm vector in the shared latent space. Only l2_normalize creates one,
/// so every instance has Euclidean norm 1 to within rounding.
class Embedding {
public:
    std::span<const double> values() const noexcept { return values_; }
    std::size_t dim() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

    bool operator==(const Embedding&) const = default;

private:
    explicit Embedding(std::vector<double> values) : values_(std::move(values)) {}
    friend Embedding l2_normalize(std::span<const double> v);

    std::vector<double> values_;
};

/// Norms below this are treated as degenerate encoder output.
inline constexpr double kZeroNormThreshold = 1e-30;

double l2_norm(std::span<const double> v);

/// v / ||v||. Throws ZeroVector when ||v|| < kZeroNormThreshold.
Embedding l2_normalize(std::span<const double> v);

/// dot(a, b) / (||a|| ||b||), clamped to [-1, 1]. Throws DimensionMismatch,
/// or ZeroVector if either side has zero norm.
double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(const Embedding& a, const Embedding& b);

/// Dense row-major rows x cols matrix of cosines.
class SimilarityMatrix {
public:
    SimilarityMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
    SimilarityMatrix transposed() const;

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

/// entry(i, j) = cosine_similarity(queries[i], candidates[j]).
/// Throws EmptyInput or DimensionMismatch.
SimilarityMatrix similarity_matrix(std::span<const Embedding> queries, std::span<const Embedding> candidates);

}  // namespace voxalign
