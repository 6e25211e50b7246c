#include "ideaforge/clustering.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stack>
#include <unordered_map>

namespace ideaforge::clustering {

namespace {

double lambda_of_weight(double w) {
    if (w <= 0.0) return kLambdaCap;
    return std::min(1.0 / w, kLambdaCap);
}

void check_points(const std::vector<EmbeddingVector>& points) {
    if (points.empty()) throw ValidationError("clustering: no points");
    const std::size_t d = points.front().dim();
    for (const auto& p : points) {
        if (p.dim() != d) throw ValidationError("clustering: dimension mismatch");
    }
}

} // namespace

std::vector<double> core_distances(const std::vector<EmbeddingVector>& points, int min_samples) {
    check_points(points);
    if (min_samples < 1) throw ValidationError("core_distances: min_samples must be >= 1");
    const int n = static_cast<int>(points.size());
    if (n < min_samples + 1)
        throw ValidationError("core_distances: need at least min_samples + 1 points");

    std::vector<double> core(static_cast<std::size_t>(n), 0.0);
    std::vector<double> row(static_cast<std::size_t>(n - 1), 0.0);
    for (int i = 0; i < n; ++i) {
        std::size_t k = 0;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            row[k++] = euclidean(points[static_cast<std::size_t>(i)],
                                 points[static_cast<std::size_t>(j)]);
        }
        auto nth = row.begin() + (min_samples - 1);
        std::nth_element(row.begin(), nth, row.end());
        core[static_cast<std::size_t>(i)] = *nth;
    }
    return core;
}

double mutual_reachability(double d_ab, double core_a, double core_b) {
    if (d_ab < 0 || core_a < 0 || core_b < 0)
        throw ValidationError("mutual_reachability: negative input");
    return std::max({d_ab, core_a, core_b});
}

std::vector<MstEdge> build_mst(const std::vector<EmbeddingVector>& points,
                               const std::vector<double>& core) {
    check_points(points);
    const int n = static_cast<int>(points.size());
    if (n < 2) throw ValidationError("build_mst: need at least 2 points");
    if (core.size() != points.size())
        throw ValidationError("build_mst: core distance count mismatch");

    // Prim over the implicit dense graph; ties go to the lowest point index.
    std::vector<double> dist(static_cast<std::size_t>(n),
                             std::numeric_limits<double>::infinity());
    std::vector<int> parent(static_cast<std::size_t>(n), -1);
    std::vector<char> in_tree(static_cast<std::size_t>(n), 0);

    std::vector<MstEdge> edges;
    edges.reserve(static_cast<std::size_t>(n - 1));

    int current = 0;
    in_tree[0] = 1;
    for (int step = 0; step < n - 1; ++step) {
        for (int j = 0; j < n; ++j) {
            if (in_tree[static_cast<std::size_t>(j)]) continue;
            const double d = euclidean(points[static_cast<std::size_t>(current)],
                                       points[static_cast<std::size_t>(j)]);
            const double w = mutual_reachability(d, core[static_cast<std::size_t>(current)],
                                                 core[static_cast<std::size_t>(j)]);
            if (w < dist[static_cast<std::size_t>(j)]) {
                dist[static_cast<std::size_t>(j)] = w;
                parent[static_cast<std::size_t>(j)] = current;
            }
        }
        int best = -1;
        for (int j = 0; j < n; ++j) {
            if (in_tree[static_cast<std::size_t>(j)]) continue;
            if (best < 0 ||
                dist[static_cast<std::size_t>(j)] < dist[static_cast<std::size_t>(best)]) {
                best = j;
            }
        }
        MstEdge e;
        e.u = std::min(parent[static_cast<std::size_t>(best)], best);
        e.v = std::max(parent[static_cast<std::size_t>(best)], best);
        e.weight = dist[static_cast<std::size_t>(best)];
        edges.push_back(e);
        in_tree[static_cast<std::size_t>(best)] = 1;
        current = best;
    }

    std::sort(edges.begin(), edges.end(), [](const MstEdge& a, const MstEdge& b) {
        return std::tie(a.weight, a.u, a.v) < std::tie(b.weight, b.u, b.v);
    });
    return edges;
}

// =============================================================================
// Condensation
// =============================================================================

namespace {

struct DendroNode {
    int left = -1;
    int right = -1;
    double weight = 0.0;
    int size = 1;
};

/// Union-find building the single-linkage merge tree. Leaves are 0..n-1,
/// internal nodes n..2n-2 in merge order.
struct SingleLinkage {
    std::vector<int> rep;          // component representative (dendro node id)
    std::vector<DendroNode> nodes; // indexed by dendro node id
    int n = 0;

    explicit SingleLinkage(int n_points) : n(n_points) {
        nodes.resize(static_cast<std::size_t>(2 * n - 1));
        rep.resize(static_cast<std::size_t>(2 * n - 1));
        std::iota(rep.begin(), rep.end(), 0);
    }

    int find(int x) {
        while (rep[static_cast<std::size_t>(x)] != x) {
            rep[static_cast<std::size_t>(x)] =
                rep[static_cast<std::size_t>(rep[static_cast<std::size_t>(x)])];
            x = rep[static_cast<std::size_t>(x)];
        }
        return x;
    }
};

void collect_leaves(const SingleLinkage& sl, int node, std::vector<int>& out) {
    std::stack<int> stack;
    stack.push(node);
    while (!stack.empty()) {
        const int d = stack.top();
        stack.pop();
        if (d < sl.n) {
            out.push_back(d);
        } else {
            stack.push(sl.nodes[static_cast<std::size_t>(d)].left);
            stack.push(sl.nodes[static_cast<std::size_t>(d)].right);
        }
    }
}

} // namespace

std::vector<int> CondensedTree::children_of(int id) const {
    std::vector<int> out;
    for (const auto& node : nodes) {
        if (node.parent == id) out.push_back(node.id);
    }
    return out;
}

void CondensedTree::validate() const {
    for (const auto& node : nodes) {
        if (node.parent >= 0) {
            const auto& par = nodes[static_cast<std::size_t>(node.parent)];
            if (node.lambda_birth + 1e-12 < par.lambda_birth)
                throw ValidationError("condensed tree: child born before parent");
        }
        if (node.stability < -1e-9)
            throw ValidationError("condensed tree: negative stability");
        int child_sum = 0;
        for (int c : children_of(node.id)) child_sum += nodes[static_cast<std::size_t>(c)].size;
        if (child_sum > node.size)
            throw ValidationError("condensed tree: children larger than parent at split");
    }
}

std::string CondensedTree::to_json() const {
    nlohmann::json j;
    j["n_points"] = n_points;
    j["root"] = root;
    j["min_cluster_size"] = min_cluster_size;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : nodes) {
        j["nodes"].push_back({{"id", n.id},
                              {"parent", n.parent},
                              {"lambda_birth", n.lambda_birth},
                              {"lambda_death", n.lambda_death},
                              {"size", n.size},
                              {"stability", n.stability}});
    }
    j["fallouts"] = nlohmann::json::array();
    for (const auto& f : fallouts) {
        j["fallouts"].push_back(
            {{"cluster", f.cluster}, {"point", f.point}, {"lambda", f.lambda}});
    }
    return j.dump(2);
}

CondensedTree condense(const std::vector<MstEdge>& mst, int n_points, int min_cluster_size) {
    if (n_points < 2) throw ValidationError("condense: need at least 2 points");
    if (static_cast<int>(mst.size()) != n_points - 1)
        throw ValidationError("condense: MST edge count must be n - 1");
    if (min_cluster_size < 2) throw ValidationError("condense: min_cluster_size must be >= 2");

    // Single-linkage dendrogram, merging in ascending weight order.
    SingleLinkage sl(n_points);
    int next_id = n_points;
    for (const auto& e : mst) {
        const int ra = sl.find(e.u);
        const int rb = sl.find(e.v);
        if (ra == rb) throw ValidationError("condense: MST contains a cycle");
        DendroNode& node = sl.nodes[static_cast<std::size_t>(next_id)];
        node.left = ra;
        node.right = rb;
        node.weight = e.weight;
        node.size = (ra < n_points ? 1 : sl.nodes[static_cast<std::size_t>(ra)].size) +
                    (rb < n_points ? 1 : sl.nodes[static_cast<std::size_t>(rb)].size);
        sl.rep[static_cast<std::size_t>(ra)] = next_id;
        sl.rep[static_cast<std::size_t>(rb)] = next_id;
        ++next_id;
    }
    const int dendro_root = next_id - 1;

    CondensedTree tree;
    tree.n_points = n_points;
    tree.min_cluster_size = min_cluster_size;
    tree.root = 0;
    tree.nodes.push_back(CondensedNode{0, -1, 0.0, 0.0, n_points, 0.0});

    auto size_of = [&](int d) {
        return d < n_points ? 1 : sl.nodes[static_cast<std::size_t>(d)].size;
    };
    auto drop_points = [&](int dendro, int cluster, double lambda) {
        std::vector<int> leaves;
        collect_leaves(sl, dendro, leaves);
        for (int p : leaves) tree.fallouts.push_back(PointFallout{cluster, p, lambda});
    };

    // Top-down walk. Splits where both sides reach min_cluster_size create
    // child clusters; smaller sides fall out as points.
    std::stack<std::pair<int, int>> work; // (dendrogram node, condensed cluster)
    work.push({dendro_root, 0});
    while (!work.empty()) {
        auto [d, cluster] = work.top();
        work.pop();
        const DendroNode& node = sl.nodes[static_cast<std::size_t>(d)];
        const double lambda = lambda_of_weight(node.weight);
        const int left_size = size_of(node.left);
        const int right_size = size_of(node.right);
        const bool left_big = left_size >= min_cluster_size;
        const bool right_big = right_size >= min_cluster_size;

        if (left_big && right_big) {
            tree.nodes[static_cast<std::size_t>(cluster)].lambda_death = lambda;
            for (int child_dendro : {node.left, node.right}) {
                const int child_id = static_cast<int>(tree.nodes.size());
                tree.nodes.push_back(CondensedNode{child_id, cluster, lambda, lambda,
                                                   size_of(child_dendro), 0.0});
                work.push({child_dendro, child_id});
            }
        } else if (left_big || right_big) {
            const int big = left_big ? node.left : node.right;
            const int small = left_big ? node.right : node.left;
            drop_points(small, cluster, lambda);
            work.push({big, cluster});
        } else {
            drop_points(node.left, cluster, lambda);
            drop_points(node.right, cluster, lambda);
            tree.nodes[static_cast<std::size_t>(cluster)].lambda_death = lambda;
        }
    }

    // Stability: excess of mass relative to each cluster's birth level.
    for (const auto& f : tree.fallouts) {
        auto& c = tree.nodes[static_cast<std::size_t>(f.cluster)];
        c.stability += f.lambda - c.lambda_birth;
    }
    for (const auto& node : tree.nodes) {
        if (node.parent >= 0) {
            auto& par = tree.nodes[static_cast<std::size_t>(node.parent)];
            par.stability += (node.lambda_birth - par.lambda_birth) * node.size;
        }
    }
    return tree;
}

// =============================================================================
// Extraction
// =============================================================================

std::vector<int> select_clusters(const CondensedTree& tree) {
    const std::size_t n = tree.nodes.size();
    std::vector<double> best(n, 0.0);
    std::vector<char> selected(n, 0);
    std::vector<std::vector<int>> children(n);
    for (const auto& node : tree.nodes) {
        if (node.parent >= 0) children[static_cast<std::size_t>(node.parent)].push_back(node.id);
    }
    // Nodes are created parent-first, so reverse id order is children-first.
    for (std::size_t k = n; k-- > 1;) {
        const auto& node = tree.nodes[k];
        double child_sum = 0.0;
        for (int c : children[k]) child_sum += best[static_cast<std::size_t>(c)];
        if (!children[k].empty() && child_sum > node.stability) {
            best[k] = child_sum;
            selected[k] = 0;
        } else {
            best[k] = node.stability;
            selected[k] = 1;
        }
    }

    // Walk down from the root; stop descending at selected nodes.
    std::vector<int> out;
    std::stack<int> work;
    for (int c : children[static_cast<std::size_t>(tree.root)]) work.push(c);
    while (!work.empty()) {
        const int id = work.top();
        work.pop();
        if (selected[static_cast<std::size_t>(id)]) {
            out.push_back(id);
        } else {
            for (int c : children[static_cast<std::size_t>(id)]) work.push(c);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

ClusterLabels extract_clusters(const CondensedTree& tree) {
    ClusterLabels result;
    result.labels.assign(static_cast<std::size_t>(tree.n_points), -1);

    const auto root_children = tree.children_of(tree.root);
    if (root_children.empty()) {
        // Root-only tree: no split ever produced two min_cluster_size sides.
        // The root counts as the single cluster only in the degenerate
        // duplicate case, where a min_cluster_size group persists at the
        // density cap (zero diameter). Any positive-diameter remainder is
        // noise, matching the usual root-exclusion rule.
        std::vector<int> members;
        for (const auto& f : tree.fallouts) {
            if (f.lambda >= kLambdaCap) members.push_back(f.point);
        }
        if (static_cast<int>(members.size()) >= tree.min_cluster_size) {
            for (int p : members) result.labels[static_cast<std::size_t>(p)] = 0;
            result.cluster_count = 1;
        }
        return result;
    }

    const std::vector<int> chosen = select_clusters(tree);
    std::vector<char> is_selected(tree.nodes.size(), 0);
    for (int id : chosen) is_selected[static_cast<std::size_t>(id)] = 1;

    // A point belongs to the nearest selected ancestor-or-self of the cluster
    // it fell out of; noise otherwise.
    std::vector<int> owner(tree.nodes.size(), -1);
    for (const auto& node : tree.nodes) {
        int cur = node.id;
        while (cur >= 0 && !is_selected[static_cast<std::size_t>(cur)]) {
            cur = tree.nodes[static_cast<std::size_t>(cur)].parent;
        }
        owner[static_cast<std::size_t>(node.id)] = cur;
    }

    std::vector<int> min_point(chosen.size(), tree.n_points);
    std::vector<std::vector<int>> members(chosen.size());
    std::unordered_map<int, std::size_t> chosen_index;
    for (std::size_t i = 0; i < chosen.size(); ++i) chosen_index[chosen[i]] = i;

    for (const auto& f : tree.fallouts) {
        const int own = owner[static_cast<std::size_t>(f.cluster)];
        if (own < 0) continue;
        const std::size_t idx = chosen_index.at(own);
        members[idx].push_back(f.point);
        min_point[idx] = std::min(min_point[idx], f.point);
    }

    // Label ids ordered by lowest member point index.
    std::vector<std::size_t> order(chosen.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return min_point[a] < min_point[b]; });
    int label = 0;
    for (std::size_t idx : order) {
        if (members[idx].empty()) continue;
        for (int p : members[idx]) result.labels[static_cast<std::size_t>(p)] = label;
        ++label;
    }
    result.cluster_count = label;
    return result;
}

ClusterLabels hdbscan(const std::vector<EmbeddingVector>& points, const ClusterParams& params) {
    params.validate();
    check_points(points);
    const int n = static_cast<int>(points.size());
    if (n < params.min_cluster_size)
        throw ValidationError("hdbscan: need at least min_cluster_size points");

    const auto core = core_distances(points, params.min_samples);
    const auto mst = build_mst(points, core);
    const auto tree = condense(mst, n, params.min_cluster_size);
    return extract_clusters(tree);
}

} // namespace ideaforge::clustering
