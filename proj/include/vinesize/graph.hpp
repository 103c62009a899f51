#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vinesize/stats.hpp"

namespace vinesize {

struct PointRC {
    double row = 0.0;
    double col = 0.0;
};

/// Undirected adjacency between candidates, derived from the Voronoi
/// diagram of their centers (equivalently the Delaunay triangulation),
/// with overly long edges pruned.
struct NeighborGraph {
    int node_count = 0;
    std::vector<std::pair<int, int>> edges;     // a < b
    std::vector<std::vector<int>> neighbors;
    bool had_duplicates = false;
};

namespace detail {

struct Triangle {
    int a, b, c;
};

inline double orient2d(const PointRC& a, const PointRC& b, const PointRC& c) {
    return (b.col - a.col) * (c.row - a.row) - (b.row - a.row) * (c.col - a.col);
}

/// Strictly-inside-circumcircle test; cocircular points count as outside,
/// which keeps the triangulation deterministic for degenerate inputs.
inline bool in_circumcircle(const PointRC& a, const PointRC& b, const PointRC& c,
                            const PointRC& d) {
    const double adx = a.col - d.col, ady = a.row - d.row;
    const double bdx = b.col - d.col, bdy = b.row - d.row;
    const double cdx = c.col - d.col, cdy = c.row - d.row;
    const double ad2 = adx * adx + ady * ady;
    const double bd2 = bdx * bdx + bdy * bdy;
    const double cd2 = cdx * cdx + cdy * cdy;
    const double det = adx * (bdy * cd2 - bd2 * cdy) - ady * (bdx * cd2 - bd2 * cdx) +
                       ad2 * (bdx * cdy - bdy * cdx);
    const double orientation = orient2d(a, b, c);
    const double scale = std::max({std::abs(ad2), std::abs(bd2), std::abs(cd2), 1.0});
    const double eps = 1e-10 * scale * scale;
    return orientation >= 0.0 ? det > eps : det < -eps;
}

/// Bowyer-Watson incremental Delaunay triangulation. Points must be
/// pairwise distinct. Returns edges between input points, including the
/// convex-hull edges contributed by triangles that touch the enclosing
/// super-triangle.
inline std::vector<std::pair<int, int>> delaunay_edges(std::span<const PointRC> points) {
    const int n = static_cast<int>(points.size());
    if (n < 2) return {};
    double min_r = points[0].row, max_r = points[0].row;
    double min_c = points[0].col, max_c = points[0].col;
    for (const auto& p : points) {
        min_r = std::min(min_r, p.row);
        max_r = std::max(max_r, p.row);
        min_c = std::min(min_c, p.col);
        max_c = std::max(max_c, p.col);
    }
    const double span = std::max({max_r - min_r, max_c - min_c, 1.0});
    const double mid_r = 0.5 * (min_r + max_r);
    const double mid_c = 0.5 * (min_c + max_c);
    const double big = 64.0 * span;

    std::vector<PointRC> pts(points.begin(), points.end());
    pts.push_back({mid_r - big, mid_c - big});       // n
    pts.push_back({mid_r - big, mid_c + 2 * big});   // n + 1
    pts.push_back({mid_r + 2 * big, mid_c});         // n + 2

    std::vector<Triangle> triangles{{n, n + 1, n + 2}};
    std::vector<Triangle> next;
    std::map<std::pair<int, int>, int> edge_count;
    for (int i = 0; i < n; ++i) {
        next.clear();
        edge_count.clear();
        for (const Triangle& t : triangles) {
            if (in_circumcircle(pts[t.a], pts[t.b], pts[t.c], pts[i])) {
                auto bump = [&](int u, int v) {
                    edge_count[{std::min(u, v), std::max(u, v)}] += 1;
                };
                bump(t.a, t.b);
                bump(t.b, t.c);
                bump(t.c, t.a);
            } else {
                next.push_back(t);
            }
        }
        for (const auto& [edge, count] : edge_count)
            if (count == 1) next.push_back({edge.first, edge.second, i});
        triangles.swap(next);
    }

    std::vector<std::pair<int, int>> edges;
    for (const Triangle& t : triangles) {
        auto add = [&](int u, int v) {
            if (u < n && v < n) edges.emplace_back(std::min(u, v), std::max(u, v));
        };
        add(t.a, t.b);
        add(t.b, t.c);
        add(t.c, t.a);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

}  // namespace detail

inline double point_distance(const PointRC& a, const PointRC& b) {
    const double dr = a.row - b.row, dc = a.col - b.col;
    return std::sqrt(dr * dr + dc * dc);
}

/// Builds the candidate neighborhood: Delaunay edges of the centers with
/// edges longer than prune_factor times the median edge length removed.
/// Exact duplicate centers are merged before triangulation; the
/// duplicates are then attached to their representative.
inline NeighborGraph build_neighbor_graph(std::span<const PointRC> centers,
                                          double prune_factor = 3.0) {
    if (centers.empty())
        throw std::invalid_argument("build_neighbor_graph: need at least one center");
    NeighborGraph g;
    g.node_count = static_cast<int>(centers.size());

    std::map<std::pair<double, double>, int> first_at;
    std::vector<PointRC> unique_points;
    std::vector<int> unique_to_original;
    std::vector<std::pair<int, int>> duplicate_links;  // (duplicate, representative)
    for (int i = 0; i < g.node_count; ++i) {
        const auto key = std::make_pair(centers[i].row, centers[i].col);
        auto [it, inserted] = first_at.try_emplace(key, i);
        if (inserted) {
            unique_points.push_back(centers[i]);
            unique_to_original.push_back(i);
        } else {
            g.had_duplicates = true;
            duplicate_links.emplace_back(i, it->second);
        }
    }

    const auto raw_edges = detail::delaunay_edges(unique_points);
    std::vector<double> lengths;
    lengths.reserve(raw_edges.size());
    for (const auto& [u, v] : raw_edges)
        lengths.push_back(point_distance(unique_points[u], unique_points[v]));
    const double cutoff =
        lengths.empty() ? 0.0 : prune_factor * median(lengths);

    for (size_t e = 0; e < raw_edges.size(); ++e) {
        if (lengths[e] > cutoff) continue;
        const int a = unique_to_original[raw_edges[e].first];
        const int b = unique_to_original[raw_edges[e].second];
        g.edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    for (const auto& [dup, rep] : duplicate_links)
        g.edges.emplace_back(std::min(dup, rep), std::max(dup, rep));
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

    g.neighbors.assign(g.node_count, {});
    for (const auto& [a, b] : g.edges) {
        g.neighbors[a].push_back(b);
        g.neighbors[b].push_back(a);
    }
    for (auto& adj : g.neighbors) std::sort(adj.begin(), adj.end());
    return g;
}

/// Mean Euclidean distance from each node to its graph neighbors.
/// Isolated nodes get +infinity (maximally isolated downstream).
inline std::vector<double> mean_neighbor_distance(const NeighborGraph& g,
                                                  std::span<const PointRC> centers) {
    std::vector<double> out(g.node_count, std::numeric_limits<double>::infinity());
    for (int i = 0; i < g.node_count; ++i) {
        if (g.neighbors[i].empty()) continue;
        double sum = 0.0;
        for (int j : g.neighbors[i]) sum += point_distance(centers[i], centers[j]);
        out[i] = sum / static_cast<double>(g.neighbors[i].size());
    }
    return out;
}

}  // namespace vinesize
