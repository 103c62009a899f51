#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vinesize/common.hpp"
#include "vinesize/features.hpp"
#include "vinesize/graph.hpp"
#include "vinesize/hough.hpp"
#include "vinesize/maxflow.hpp"
#include "vinesize/stats.hpp"

namespace vinesize {

inline constexpr uint8_t kNonBerry = 0;
inline constexpr uint8_t kBerry = 1;

struct PosteriorPair {
    double berry = 0.5;
    double non_berry = 0.5;
};

/// Sigmoid posterior for one feature projection. Values above the
/// threshold favor 'berry'; probabilities are clamped away from 0/1 so
/// the log potentials stay finite, and the pair sums to exactly 1.
inline PosteriorPair unary_posterior(double l, double t, double sharpness) {
    if (sharpness <= 0.0) throw std::invalid_argument("unary_posterior: s must be > 0");
    double p_nb = 1.0 / (1.0 + std::exp(sharpness * (l - t)));
    p_nb = std::clamp(p_nb, 1e-9, 1.0 - 1e-9);
    return PosteriorPair{1.0 - p_nb, p_nb};
}

/// Cluster prior: isolated candidates (large mean neighbor distance) are
/// probably not berries, while tightly packed candidates are floored at
/// 0.5 so the remaining terms decide. The argument is scaled by t_dist to
/// keep the sharpness dimensionless.
inline PosteriorPair distance_posterior(double l_dist, double t_dist, double sharpness) {
    if (t_dist <= 0.0) throw std::invalid_argument("distance_posterior: t_dist must be > 0");
    if (sharpness <= 0.0)
        throw std::invalid_argument("distance_posterior: s must be > 0");
    const double u = sharpness * (l_dist - t_dist) / t_dist;
    double p_nb = std::isinf(l_dist) ? 1.0 : 1.0 / (1.0 + std::exp(-u));
    p_nb = std::clamp(std::max(p_nb, 0.5), 1e-9, 1.0 - 1e-9);
    return PosteriorPair{1.0 - p_nb, p_nb};
}

/// The four unary posteriors of every candidate.
struct UnaryTable {
    std::vector<PosteriorPair> rgb;
    std::vector<PosteriorPair> hog;
    std::vector<PosteriorPair> gist;
    std::vector<PosteriorPair> dist;

    size_t size() const { return rgb.size(); }
};

struct CrfWeights {
    double rgb = 0.5;
    double hog = 0.5;
    double gist = 1.0;
    double dist = 2.0;

    double spatial() const { return 0.5 * (rgb + hog + gist + dist); }
};

enum class PairwiseMode { potts, literal };

inline PairwiseMode pairwise_mode_from_string(const std::string& s) {
    if (s == "potts") return PairwiseMode::potts;
    if (s == "literal") return PairwiseMode::literal;
    throw config_error("unknown pairwise mode '" + s + "' (expected potts|literal)");
}

inline std::string to_string(PairwiseMode m) {
    return m == PairwiseMode::potts ? "potts" : "literal";
}

/// Feature-space distance between two concatenated descriptors (Euclidean
/// norm of the difference).
inline double pairwise_phi(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("pairwise_phi: dimension mismatch");
    double ss = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        ss += d * d;
    }
    return std::sqrt(ss);
}

/// Concatenated per-candidate feature vectors for the pairwise term:
/// [rgb (L2-normalized); hog; gist; (q/10) * x_dist], where x_dist is the
/// mean neighbor distance affinely mapped to [-1, 1] over the candidate
/// population (isolated nodes map to +1) and q is the median pairwise
/// distance between candidate centers.
inline std::vector<std::vector<double>> build_concat_features(
    std::span<const FeatureBundle> bundles, std::span<const double> mean_distances,
    double q) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double d : mean_distances) {
        if (!std::isfinite(d)) continue;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    const double range = hi - lo;
    std::vector<std::vector<double>> out;
    out.reserve(bundles.size());
    for (size_t i = 0; i < bundles.size(); ++i) {
        double x_dist = 0.0;
        if (std::isinf(mean_distances[i]))
            x_dist = 1.0;
        else if (std::isfinite(range) && range > 0.0)
            x_dist = 2.0 * (mean_distances[i] - lo) / range - 1.0;
        std::vector<double> v = detail::l2_normalized_or_zero(
            std::vector<double>(bundles[i].rgb.begin(), bundles[i].rgb.end()));
        v.insert(v.end(), bundles[i].hog.begin(), bundles[i].hog.end());
        v.insert(v.end(), bundles[i].gist.begin(), bundles[i].gist.end());
        v.push_back(q / 10.0 * x_dist);
        out.push_back(std::move(v));
    }
    return out;
}

struct CrfEdge {
    int a = 0;
    int b = 0;
    double phi = 0.0;
    double potts_weight = 0.0;  // w_spatial * exp(-phi / mean phi)
};

/// Binary labeling energy: weighted negative-log unaries plus a pairwise
/// term over the neighbor graph. In potts mode the pairwise term charges
/// potts_weight whenever neighbor labels disagree (submodular, solved
/// exactly by min-cut). In literal mode it charges w_spatial * phi when
/// they agree, which is not submodular and is solved by enumeration.
struct CrfEnergy {
    std::vector<std::array<double, 2>> node_cost;  // [non-berry, berry]
    std::vector<CrfEdge> edges;
    PairwiseMode mode = PairwiseMode::potts;
    double w_spatial = 0.0;

    int size() const { return static_cast<int>(node_cost.size()); }

    double energy(std::span<const uint8_t> labels) const {
        double e = 0.0;
        for (size_t i = 0; i < node_cost.size(); ++i) e += node_cost[i][labels[i]];
        for (const CrfEdge& edge : edges) {
            if (mode == PairwiseMode::potts) {
                if (labels[edge.a] != labels[edge.b]) e += edge.potts_weight;
            } else {
                if (labels[edge.a] == labels[edge.b]) e += w_spatial * edge.phi;
            }
        }
        return e;
    }

    bool submodular() const { return mode == PairwiseMode::potts; }
};

inline UnaryTable build_unary_table(std::span<const TransformedFeatures> tf,
                                    const std::array<double, 3>& thresholds,
                                    std::span<const double> mean_distances, double t_dist,
                                    double sharpness) {
    UnaryTable u;
    u.rgb.reserve(tf.size());
    for (size_t i = 0; i < tf.size(); ++i) {
        u.rgb.push_back(unary_posterior(tf[i].l_rgb, thresholds[0], sharpness));
        u.hog.push_back(unary_posterior(tf[i].l_hog, thresholds[1], sharpness));
        u.gist.push_back(unary_posterior(tf[i].l_gist, thresholds[2], sharpness));
        u.dist.push_back(distance_posterior(mean_distances[i], t_dist, sharpness));
    }
    return u;
}

/// Assembles the energy from unaries, the neighbor graph and per-edge
/// feature distances. The potts weight is contrast-sensitive:
/// w_spatial * exp(-phi / sigma_phi) with sigma_phi the mean edge phi, so
/// similar neighbors attract strongly.
inline CrfEnergy assemble_energy(const UnaryTable& unaries, const NeighborGraph& graph,
                                 std::span<const double> phis, const CrfWeights& weights,
                                 PairwiseMode mode = PairwiseMode::potts) {
    if (phis.size() != graph.edges.size())
        throw std::invalid_argument("assemble_energy: one phi per graph edge required");
    if (static_cast<int>(unaries.size()) != graph.node_count)
        throw std::invalid_argument("assemble_energy: unary/node count mismatch");

    CrfEnergy e;
    e.mode = mode;
    e.w_spatial = weights.spatial();
    e.node_cost.reserve(unaries.size());
    for (size_t i = 0; i < unaries.size(); ++i) {
        std::array<double, 2> cost{};
        cost[kNonBerry] = -weights.rgb * std::log(unaries.rgb[i].non_berry) -
                          weights.hog * std::log(unaries.hog[i].non_berry) -
                          weights.gist * std::log(unaries.gist[i].non_berry) -
                          weights.dist * std::log(unaries.dist[i].non_berry);
        cost[kBerry] = -weights.rgb * std::log(unaries.rgb[i].berry) -
                       weights.hog * std::log(unaries.hog[i].berry) -
                       weights.gist * std::log(unaries.gist[i].berry) -
                       weights.dist * std::log(unaries.dist[i].berry);
        if (!std::isfinite(cost[0]) || !std::isfinite(cost[1]))
            throw std::invalid_argument("assemble_energy: non-finite unary potential");
        e.node_cost.push_back(cost);
    }

    double sigma_phi = 0.0;
    for (double p : phis) sigma_phi += p;
    if (!phis.empty()) sigma_phi /= static_cast<double>(phis.size());
    for (size_t k = 0; k < phis.size(); ++k) {
        if (!std::isfinite(phis[k]))
            throw std::invalid_argument("assemble_energy: non-finite pairwise potential");
        const double weight =
            e.w_spatial * (sigma_phi > 1e-12 ? std::exp(-phis[k] / sigma_phi) : 1.0);
        e.edges.push_back(CrfEdge{graph.edges[k].first, graph.edges[k].second, phis[k], weight});
    }
    return e;
}

/// Exact minimum-energy labeling by min-cut (berry = source side). Ties
/// resolve toward non-berry: the minimal source side of the cut is taken.
inline std::vector<uint8_t> solve_graphcut(const CrfEnergy& e) {
    if (!e.submodular())
        throw std::invalid_argument(
            "solve_graphcut: literal pairwise mode is not submodular; "
            "use brute_force_solve or pairwise=potts");
    const int n = e.size();
    std::vector<uint8_t> labels(n, kNonBerry);
    if (n == 0) return labels;
    MaxFlowGraph flow(n + 2);
    const int source = n, sink = n + 1;
    for (int i = 0; i < n; ++i) {
        const double base = std::min(e.node_cost[i][kNonBerry], e.node_cost[i][kBerry]);
        const double cap_nonberry = e.node_cost[i][kNonBerry] - base;  // paid when i is sink-side
        const double cap_berry = e.node_cost[i][kBerry] - base;        // paid when i is source-side
        if (cap_nonberry > 0.0) flow.add_edge(source, i, cap_nonberry, 0.0);
        if (cap_berry > 0.0) flow.add_edge(i, sink, cap_berry, 0.0);
    }
    for (const CrfEdge& edge : e.edges)
        if (edge.potts_weight > 0.0)
            flow.add_edge(edge.a, edge.b, edge.potts_weight, edge.potts_weight);
    flow.max_flow(source, sink);
    const auto source_side = flow.source_side(source);
    for (int i = 0; i < n; ++i) labels[i] = source_side[i] ? kBerry : kNonBerry;
    return labels;
}

/// Exhaustive global minimizer over all 2^n labelings (n <= 20). Ties
/// resolve to the lexicographically smallest labeling with
/// non-berry < berry, so the all-non-berry labeling wins full ties.
inline std::vector<uint8_t> brute_force_solve(const CrfEnergy& e) {
    const int n = e.size();
    if (n > 20) throw std::invalid_argument("brute_force_solve: more than 20 nodes");
    std::vector<uint8_t> best(n, kNonBerry), current(n, kNonBerry);
    if (n == 0) return best;
    double best_energy = e.energy(best);
    for (uint32_t mask = 1; mask < (1u << n); ++mask) {
        for (int i = 0; i < n; ++i) current[i] = (mask >> (n - 1 - i)) & 1u;
        const double energy = e.energy(current);
        if (energy < best_energy) {
            best_energy = energy;
            best = current;
        }
    }
    return best;
}

/// Deterministic text dump of the energy for oracle cross-checks.
inline std::string dump_energy(const CrfEnergy& e) {
    std::ostringstream out;
    out.precision(17);
    out << "mode " << to_string(e.mode) << "\n";
    out << "w_spatial " << e.w_spatial << "\n";
    out << "nodes " << e.size() << "\n";
    for (int i = 0; i < e.size(); ++i)
        out << "node " << i << " " << e.node_cost[i][kNonBerry] << " "
            << e.node_cost[i][kBerry] << "\n";
    out << "edges " << e.edges.size() << "\n";
    for (const CrfEdge& edge : e.edges)
        out << "edge " << edge.a << " " << edge.b << " " << edge.phi << " "
            << edge.potts_weight << "\n";
    return out.str();
}

/// Feature-kind thresholds: the p-quantile of all pairwise correlations
/// between reference descriptors (r != r', unordered pairs).
inline std::array<double, 3> percentile_thresholds(std::span<const FeatureBundle> refs,
                                                   double p) {
    if (refs.size() < 2)
        throw classification_unavailable("percentile_thresholds: need >= 2 references");
    if (p <= 0.0 || p >= 1.0)
        throw std::invalid_argument("percentile_thresholds: p must be in (0,1)");
    std::vector<double> rho_rgb, rho_hog, rho_gist;
    for (size_t a = 0; a < refs.size(); ++a) {
        for (size_t b = a + 1; b < refs.size(); ++b) {
            rho_rgb.push_back(pearson_correlation(refs[a].rgb, refs[b].rgb));
            rho_hog.push_back(pearson_correlation(refs[a].hog, refs[b].hog));
            rho_gist.push_back(pearson_correlation(refs[a].gist, refs[b].gist));
        }
    }
    return {quantile(std::move(rho_rgb), p), quantile(std::move(rho_hog), p),
            quantile(std::move(rho_gist), p)};
}

struct ClassifyConfig {
    double p = 0.5;
    double p_fallback = 0.7;
    double sharpness = 40.0;
    CrfWeights weights;
    PairwiseMode mode = PairwiseMode::potts;
    double prune_factor = 3.0;
};

struct ClassifyResult {
    std::vector<uint8_t> labels;
    std::vector<int> berry_indices;
    double p_used = 0.5;
    bool fallback_engaged = false;
    std::array<double, 3> thresholds{0.0, 0.0, 0.0};
    double t_dist = 0.0;
    double energy = 0.0;
    NeighborGraph graph;
};

namespace detail {

inline std::vector<uint8_t> solve_energy(const CrfEnergy& e) {
    if (e.mode == PairwiseMode::potts) return solve_graphcut(e);
    if (e.size() > 20)
        throw std::invalid_argument(
            "literal pairwise mode is limited to 20 candidates (exhaustive solve)");
    return brute_force_solve(e);
}

}  // namespace detail

/// One-class labeling of the candidate set. References come either from
/// the detector's reference flags (bundles indexed by cands) or from an
/// externally supplied reference set. If nothing is labeled berry at
/// percentile p, a single rerun at p_fallback is performed.
inline ClassifyResult classify_candidates(const CandidateSet& cands,
                                          std::span<const FeatureBundle> bundles,
                                          std::span<const FeatureBundle> external_refs,
                                          const ClassifyConfig& cfg) {
    ClassifyResult result;
    result.p_used = cfg.p;
    const size_t n = cands.size();
    if (n == 0) return result;
    if (bundles.size() != n)
        throw std::invalid_argument("classify_candidates: one bundle per candidate required");

    std::vector<FeatureBundle> internal_refs;
    std::span<const FeatureBundle> refs;
    std::vector<double> ref_diameters;
    if (!external_refs.empty()) {
        refs = external_refs;
        for (const Circle& c : cands.candidates)
            ref_diameters.push_back(2.0 * c.radius);
    } else {
        for (size_t i = 0; i < n; ++i) {
            if (cands.reference_flags[i]) {
                internal_refs.push_back(bundles[i]);
                ref_diameters.push_back(2.0 * cands.candidates[i].radius);
            }
        }
        refs = internal_refs;
    }
    if (refs.size() < 2)
        throw classification_unavailable(
            "fewer than 2 reference circles and no external reference patches");

    const auto tf = transform_features(bundles, refs);

    std::vector<PointRC> centers;
    centers.reserve(n);
    for (const Circle& c : cands.candidates)
        centers.push_back({static_cast<double>(c.center_row),
                           static_cast<double>(c.center_col)});
    result.graph = build_neighbor_graph(centers, cfg.prune_factor);
    const auto l_dist = mean_neighbor_distance(result.graph, centers);
    result.t_dist = 3.0 * median(ref_diameters);

    double q = 0.0;
    if (n >= 2) {
        std::vector<double> pair_distances;
        pair_distances.reserve(n * (n - 1) / 2);
        for (size_t a = 0; a < n; ++a)
            for (size_t b = a + 1; b < n; ++b)
                pair_distances.push_back(point_distance(centers[a], centers[b]));
        q = median(std::move(pair_distances));
    }
    const auto concat = build_concat_features(bundles, l_dist, q);
    std::vector<double> phis;
    phis.reserve(result.graph.edges.size());
    for (const auto& [a, b] : result.graph.edges)
        phis.push_back(pairwise_phi(concat[a], concat[b]));

    auto run = [&](double p) {
        const auto thresholds = percentile_thresholds(refs, p);
        const auto unaries =
            build_unary_table(tf, thresholds, l_dist, result.t_dist, cfg.sharpness);
        const CrfEnergy e = assemble_energy(unaries, result.graph, phis, cfg.weights, cfg.mode);
        auto labels = detail::solve_energy(e);
        return std::make_tuple(std::move(labels), thresholds, e.energy(labels));
    };

    auto [labels, thresholds, energy] = run(cfg.p);
    result.p_used = cfg.p;
    if (std::none_of(labels.begin(), labels.end(), [](uint8_t l) { return l == kBerry; })) {
        std::tie(labels, thresholds, energy) = run(cfg.p_fallback);
        result.p_used = cfg.p_fallback;
        result.fallback_engaged = true;
    }
    result.labels = std::move(labels);
    result.thresholds = thresholds;
    result.energy = energy;
    for (size_t i = 0; i < n; ++i)
        if (result.labels[i] == kBerry) result.berry_indices.push_back(static_cast<int>(i));
    return result;
}

}  // namespace vinesize
