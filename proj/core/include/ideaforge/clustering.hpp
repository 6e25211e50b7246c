#pragma once

#include "ideaforge/common.hpp"
#include "ideaforge/embedding.hpp"

#include <string>
#include <vector>

namespace ideaforge::clustering {

// =============================================================================
// Hierarchical density-based clustering (HDBSCAN), built from scratch:
// core distances -> mutual reachability -> MST -> single-linkage condensation
// -> excess-of-mass cluster extraction.
//
// Distances are Euclidean over L2-normalized vectors (monotone in cosine
// distance). All tie-breaking is by lowest point index so runs are
// bit-reproducible.
// =============================================================================

struct ClusterParams {
    int min_cluster_size = 5;
    int min_samples = 2;

    void validate() const {
        if (min_cluster_size < 2) throw ValidationError("min_cluster_size must be >= 2");
        if (min_samples < 1) throw ValidationError("min_samples must be >= 1");
    }
};

/// Lambda for a merge of weight w is 1/w; zero-weight merges (duplicate
/// points) are capped here instead of going non-finite.
inline constexpr double kLambdaCap = 1e12;

/// Distance from each point to its min_samples-th nearest neighbor.
std::vector<double> core_distances(const std::vector<EmbeddingVector>& points, int min_samples);

/// max(core_a, core_b, d_ab).
double mutual_reachability(double d_ab, double core_a, double core_b);

struct MstEdge {
    int u = 0;
    int v = 0; // u < v
    double weight = 0.0;
};

/// Prim over the implicit mutual-reachability graph, O(n^2).
/// Returns n-1 edges sorted by (weight, u, v).
std::vector<MstEdge> build_mst(const std::vector<EmbeddingVector>& points,
                               const std::vector<double>& core);

struct CondensedNode {
    int id = 0;
    int parent = -1; // -1 for the root
    double lambda_birth = 0.0;
    double lambda_death = 0.0;
    int size = 0; // member points at birth
    double stability = 0.0;
};

/// A point leaving cluster `cluster` at density level `lambda`.
struct PointFallout {
    int cluster = 0;
    int point = 0;
    double lambda = 0.0;
};

struct CondensedTree {
    std::vector<CondensedNode> nodes; // nodes[0] is the root
    std::vector<PointFallout> fallouts;
    int root = 0;
    int n_points = 0;
    int min_cluster_size = 0;

    const CondensedNode& node(int id) const { return nodes[static_cast<std::size_t>(id)]; }
    std::vector<int> children_of(int id) const;

    /// Structural invariants: child birth >= parent birth, split sizes,
    /// non-negative stabilities.
    void validate() const;

    std::string to_json() const;
};

/// Single-linkage condensation of an MST. Subtrees below min_cluster_size
/// become point fall-outs recorded with their lambda.
CondensedTree condense(const std::vector<MstEdge>& mst, int n_points, int min_cluster_size);

struct ClusterLabels {
    std::vector<int> labels; // -1 = noise
    int cluster_count = 0;
};

/// Excess-of-mass selection: the antichain of non-root clusters maximizing
/// total stability (parents win ties). Returns selected node ids.
std::vector<int> select_clusters(const CondensedTree& tree);

/// Selection + point labelling. A root with no child clusters is kept only
/// in the degenerate duplicate case (a min_cluster_size group persisting at
/// the density cap); otherwise everything is noise.
ClusterLabels extract_clusters(const CondensedTree& tree);

/// Full pipeline composition.
ClusterLabels hdbscan(const std::vector<EmbeddingVector>& points, const ClusterParams& params);

} // namespace ideaforge::clustering
