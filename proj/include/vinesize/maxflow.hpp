#pragma once

#include <cstdint>
#include <limits>
#include <queue>
#include <vector>

namespace vinesize {

/// Dinic max-flow on a small dense-ish graph with double capacities.
/// Deterministic for a fixed edge insertion order.
class MaxFlowGraph {
  public:
    explicit MaxFlowGraph(int node_count) : adjacency_(node_count) {}

    int node_count() const { return static_cast<int>(adjacency_.size()); }

    void add_edge(int from, int to, double capacity, double reverse_capacity) {
        adjacency_[from].push_back({to, capacity, static_cast<int>(adjacency_[to].size())});
        adjacency_[to].push_back(
            {from, reverse_capacity, static_cast<int>(adjacency_[from].size()) - 1});
    }

    double max_flow(int source, int sink) {
        double total = 0.0;
        while (build_levels(source, sink)) {
            iter_.assign(adjacency_.size(), 0);
            while (true) {
                const double pushed =
                    augment(source, sink, std::numeric_limits<double>::infinity());
                if (pushed <= kEps) break;
                total += pushed;
            }
        }
        return total;
    }

    /// Nodes reachable from source in the residual graph (the minimal
    /// source side of a minimum cut). Call after max_flow.
    std::vector<uint8_t> source_side(int source) const {
        std::vector<uint8_t> reached(adjacency_.size(), 0);
        std::queue<int> queue;
        reached[source] = 1;
        queue.push(source);
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop();
            for (const Edge& e : adjacency_[u]) {
                if (e.capacity > kEps && !reached[e.to]) {
                    reached[e.to] = 1;
                    queue.push(e.to);
                }
            }
        }
        return reached;
    }

  private:
    struct Edge {
        int to;
        double capacity;
        int reverse_index;
    };

    static constexpr double kEps = 1e-12;

    bool build_levels(int source, int sink) {
        level_.assign(adjacency_.size(), -1);
        std::queue<int> queue;
        level_[source] = 0;
        queue.push(source);
        while (!queue.empty()) {
            const int u = queue.front();
            queue.pop();
            for (const Edge& e : adjacency_[u]) {
                if (e.capacity > kEps && level_[e.to] < 0) {
                    level_[e.to] = level_[u] + 1;
                    queue.push(e.to);
                }
            }
        }
        return level_[sink] >= 0;
    }

    double augment(int u, int sink, double limit) {
        if (u == sink) return limit;
        for (int& i = iter_[u]; i < static_cast<int>(adjacency_[u].size()); ++i) {
            Edge& e = adjacency_[u][i];
            if (e.capacity <= kEps || level_[e.to] != level_[u] + 1) continue;
            const double pushed = augment(e.to, sink, std::min(limit, e.capacity));
            if (pushed > kEps) {
                e.capacity -= pushed;
                adjacency_[e.to][e.reverse_index].capacity += pushed;
                return pushed;
            }
        }
        return 0.0;
    }

    std::vector<std::vector<Edge>> adjacency_;
    std::vector<int> level_;
    std::vector<int> iter_;
};

}  // namespace vinesize
