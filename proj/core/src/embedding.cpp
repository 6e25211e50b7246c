#include "ideaforge/embedding.hpp"

#include "ideaforge/common.hpp"

#include <cmath>

namespace ideaforge {

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw ValidationError("embedding dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) s += a.values[i] * b.values[i];
    return s;
}

double norm(const EmbeddingVector& a) {
    double s = 0.0;
    for (double v : a.values) s += v * v;
    return std::sqrt(s);
}

double euclidean(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw ValidationError("embedding dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return std::sqrt(s);
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

void l2_normalize(EmbeddingVector& v) {
    const double n = norm(v);
    if (n <= 0.0) return;
    for (double& x : v.values) x /= n;
}

EmbeddingVector normalized_mean(std::span<const EmbeddingVector> vs) {
    if (vs.empty()) throw ValidationError("normalized_mean over empty set");
    EmbeddingVector out(std::vector<double>(vs.front().dim(), 0.0));
    for (const auto& v : vs) {
        if (v.dim() != out.dim()) throw ValidationError("embedding dimension mismatch");
        for (std::size_t i = 0; i < v.dim(); ++i) out.values[i] += v.values[i];
    }
    for (double& x : out.values) x /= static_cast<double>(vs.size());
    l2_normalize(out);
    return out;
}

void validate_embedding_batch(std::span<const EmbeddingVector> vs) {
    if (vs.empty()) throw ValidationError("empty embedding batch");
    const std::size_t d = vs.front().dim();
    if (d == 0) throw ValidationError("zero-dimensional embedding");
    for (const auto& v : vs) {
        if (v.dim() != d) throw ValidationError("embedding dimension mismatch within batch");
        for (double x : v.values) {
            if (!std::isfinite(x)) throw ValidationError("non-finite embedding entry");
        }
    }
}

} // namespace ideaforge
