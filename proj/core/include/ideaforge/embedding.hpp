#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ideaforge {

/// Fixed-length real vector; L2-normalized at every provider boundary so
/// Euclidean distance stays monotone in cosine distance.
struct EmbeddingVector {
    std::vector<double> values;

    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> v) : values(std::move(v)) {}

    std::size_t dim() const { return values.size(); }
    bool empty() const { return values.empty(); }

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

double dot(const EmbeddingVector& a, const EmbeddingVector& b);
double norm(const EmbeddingVector& a);
double euclidean(const EmbeddingVector& a, const EmbeddingVector& b);

/// Cosine similarity. Zero when either vector has zero norm.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// In-place L2 normalization; zero vectors are left untouched.
void l2_normalize(EmbeddingVector& v);

/// Normalized arithmetic mean of a non-empty set of vectors.
EmbeddingVector normalized_mean(std::span<const EmbeddingVector> vs);

/// Throws ValidationError on empty batch, dimension mismatch or non-finite
/// entries.
void validate_embedding_batch(std::span<const EmbeddingVector> vs);

} // namespace ideaforge
