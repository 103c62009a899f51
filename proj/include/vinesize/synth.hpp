#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vinesize/geometry.hpp"
#include "vinesize/hough.hpp"
#include "vinesize/image.hpp"

namespace vinesize {

/// Deterministic generator parameters for a synthetic vineyard-like scene.
struct SceneSpec {
    int width = 1667;
    int height = 2500;
    int cluster_count = 4;
    int disks_per_cluster_min = 5;
    int disks_per_cluster_max = 10;
    double radius_min_px = 15.0;
    double radius_max_px = 45.0;
    double background_texture = 0.04;     // value-noise amplitude
    double illumination_gradient = 0.25;  // brightness ramp strength
    double occlusion_fraction = 0.15;     // disks placed overlapping a neighbor
    double low_contrast_fraction = 0.0;   // disks blended toward the background
    double odd_color_fraction = 0.2;      // berries from a second color family
    int clutter_count = 6;                // non-circular distractor blobs
    uint64_t seed = 1;
};

struct TrueCircle {
    double row = 0.0;
    double col = 0.0;
    double radius = 0.0;
    int cluster = 0;
    bool occluding = false;  // placed to overlap an earlier disk
};

struct GroundTruth {
    std::vector<TrueCircle> circles;
};

struct DetectionScore {
    int matched = 0;
    int detected = 0;
    int truth = 0;
    double precision = 1.0;
    double recall = 1.0;
    double diameter_mae_px = 0.0;
    bool empty_detections = false;
    bool empty_truth = false;
};

namespace detail {

/// Hand-rolled distributions on top of mt19937_64 keep scene generation
/// byte-stable across standard library implementations.
class SceneRng {
  public:
    explicit SceneRng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next() {
        // xorshift* variant; deterministic and plenty for scene jitter.
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545f4914f6cdd1dull;
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform() * (hi - lo + 1.0) * (1.0 - 1e-16));
    }
    double normal() {
        const double u1 = std::max(uniform(), 1e-12);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

  private:
    uint64_t state_;
};

/// Smooth value noise: a coarse random grid bilinearly upsampled.
inline Grid value_noise(int width, int height, int cell, SceneRng& rng) {
    const int gw = width / cell + 2, gh = height / cell + 2;
    std::vector<double> coarse(static_cast<size_t>(gw) * gh);
    for (double& v : coarse) v = rng.uniform(-1.0, 1.0);
    Grid out(width, height);
    for (int r = 0; r < height; ++r) {
        const double fy = static_cast<double>(r) / cell;
        const int y0 = static_cast<int>(fy);
        const double wy = fy - y0;
        for (int c = 0; c < width; ++c) {
            const double fx = static_cast<double>(c) / cell;
            const int x0 = static_cast<int>(fx);
            const double wx = fx - x0;
            const double v00 = coarse[static_cast<size_t>(y0) * gw + x0];
            const double v01 = coarse[static_cast<size_t>(y0) * gw + x0 + 1];
            const double v10 = coarse[static_cast<size_t>(y0 + 1) * gw + x0];
            const double v11 = coarse[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
            out.at(r, c) = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                           wy * ((1 - wx) * v10 + wx * v11);
        }
    }
    return out;
}

struct DiskStyle {
    double color[3];
    double ambient;      // shading floor
    double highlight;    // specular strength
    double highlight_offset;
    double mottle;       // fine surface texture amplitude
    double blotch;       // coarse surface blotch amplitude
    double mottle_row;   // per-disk offset into the shared noise fields
    double mottle_col;
    bool low_contrast;
};

inline void draw_disk(RasterImage& img, const TrueCircle& disk, const DiskStyle& style,
                      const Grid& mottle_noise, const Grid& blotch_noise, double light_row,
                      double light_col) {
    const int r0 = std::max(0, static_cast<int>(disk.row - disk.radius - 2));
    const int r1 = std::min(img.height - 1, static_cast<int>(disk.row + disk.radius + 2));
    const int c0 = std::max(0, static_cast<int>(disk.col - disk.radius - 2));
    const int c1 = std::min(img.width - 1, static_cast<int>(disk.col + disk.radius + 2));
    const double hl_row = disk.row + style.highlight_offset * disk.radius * light_row;
    const double hl_col = disk.col + style.highlight_offset * disk.radius * light_col;
    const double hl_sigma = 0.30 * disk.radius;
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double dr = r - disk.row, dc = c - disk.col;
            const double dist = std::sqrt(dr * dr + dc * dc);
            const double alpha = std::clamp(disk.radius + 0.5 - dist, 0.0, 1.0);
            if (alpha <= 0.0) continue;
            const double t = std::min(dist / disk.radius, 1.0);
            const double dome = std::sqrt(std::max(0.0, 1.0 - t * t));
            const double hr = r - hl_row, hc = c - hl_col;
            const double highlight =
                style.highlight * std::exp(-(hr * hr + hc * hc) / (2.0 * hl_sigma * hl_sigma));
            const int mr = static_cast<int>(std::abs(r + style.mottle_row)) % mottle_noise.height;
            const int mc = static_cast<int>(std::abs(c + style.mottle_col)) % mottle_noise.width;
            const double mottle = 1.0 + style.mottle * mottle_noise.at(mr, mc) +
                                  style.blotch * blotch_noise.at(mr, mc);
            for (int ch = 0; ch < 3; ++ch) {
                double v = style.color[ch] * mottle *
                               (style.ambient + (1.0 - style.ambient) * dome) +
                           highlight;
                if (style.low_contrast) {
                    const double bg = img.at(r, c, ch);
                    v = 0.6 * bg + 0.4 * v;
                }
                v = std::clamp(v, 0.0, 1.0);
                img.at(r, c, ch) =
                    static_cast<float>(alpha * v + (1.0 - alpha) * img.at(r, c, ch));
            }
        }
    }
}

/// Irregular bright blob with a sinusoidally modulated outline; clearly
/// non-circular clutter (leaf fragments, backlight speckle).
inline void draw_blob(RasterImage& img, double row, double col, double radius,
                      const double color[3], SceneRng& rng) {
    const double phase1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double m1 = rng.uniform(0.25, 0.45), m2 = rng.uniform(0.15, 0.35);
    const double stretch = rng.uniform(1.3, 2.2);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    const double ca = std::cos(angle), sa = std::sin(angle);
    const double reach = radius * (1 + m1 + m2) * stretch + 2;
    const int r0 = std::max(0, static_cast<int>(row - reach));
    const int r1 = std::min(img.height - 1, static_cast<int>(row + reach));
    const int c0 = std::max(0, static_cast<int>(col - reach));
    const int c1 = std::min(img.width - 1, static_cast<int>(col + reach));
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            const double dr = r - row, dc = c - col;
            const double ur = (ca * dr + sa * dc) / stretch;
            const double uc = -sa * dr + ca * dc;
            const double dist = std::sqrt(ur * ur + uc * uc);
            const double theta = std::atan2(ur, uc);
            const double boundary =
                radius * (1.0 + m1 * std::sin(3.0 * theta + phase1) +
                          m2 * std::sin(5.0 * theta + phase2));
            const double alpha = std::clamp(boundary + 0.5 - dist, 0.0, 1.0);
            if (alpha <= 0.0) continue;
            for (int ch = 0; ch < 3; ++ch) {
                const double v = std::clamp(color[ch], 0.0, 1.0);
                img.at(r, c, ch) =
                    static_cast<float>(alpha * v + (1.0 - alpha) * img.at(r, c, ch));
            }
        }
    }
}

}  // namespace detail

/// Renders clustered, shaded, anti-aliased disks over a textured,
/// unevenly lit background, with optional non-circular clutter, and
/// returns the exact geometry as ground truth. Deterministic per seed.
inline std::pair<RasterImage, GroundTruth> render_scene(const SceneSpec& spec) {
    if (spec.width < 32 || spec.height < 32)
        throw std::invalid_argument("render_scene: scene too small");
    if (spec.radius_min_px < 2 || spec.radius_max_px < spec.radius_min_px)
        throw std::invalid_argument("render_scene: bad radius range");

    detail::SceneRng rng(spec.seed);
    RasterImage img(spec.width, spec.height, 3);

    // Background: brownish green with two octaves of value noise and a
    // linear illumination ramp.
    const double base[3] = {0.17, 0.21, 0.13};
    Grid coarse = detail::value_noise(spec.width, spec.height, 48, rng);
    Grid fine = detail::value_noise(spec.width, spec.height, 9, rng);
    const double ramp_mix = rng.uniform(0.0, 1.0);
    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
            const double noise = spec.background_texture *
                                 (coarse.at(r, c) + 0.5 * fine.at(r, c));
            const double ramp_pos = ramp_mix * (static_cast<double>(r) / spec.height) +
                                    (1.0 - ramp_mix) * (static_cast<double>(c) / spec.width);
            const double light =
                1.0 + spec.illumination_gradient * (ramp_pos - 0.5);
            for (int ch = 0; ch < 3; ++ch)
                img.at(r, c, ch) = static_cast<float>(
                    std::clamp((base[ch] + noise) * light, 0.0, 1.0));
        }
    }

    // Clutter behind the berries.
    for (int i = 0; i < spec.clutter_count; ++i) {
        const double color[3] = {rng.uniform(0.25, 0.45), rng.uniform(0.35, 0.6),
                                 rng.uniform(0.15, 0.3)};
        detail::draw_blob(img, rng.uniform(0, spec.height - 1), rng.uniform(0, spec.width - 1),
                          rng.uniform(spec.radius_min_px * 0.8, spec.radius_max_px * 1.4),
                          color, rng);
    }

    GroundTruth truth;
    const double margin = spec.radius_max_px * 1.5 + 4;
    if (spec.cluster_count > 0 && spec.disks_per_cluster_min > 0 &&
        (2.0 * margin >= spec.height || 2.0 * margin >= spec.width))
        throw std::runtime_error("render_scene: infeasible packing (disks exceed scene)");
    const double light_angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double light_row = std::sin(light_angle), light_col = std::cos(light_angle);
    int failures = 0;
    for (int cluster = 0; cluster < spec.cluster_count; ++cluster) {
        const double cluster_row = rng.uniform(margin, spec.height - margin);
        const double cluster_col = rng.uniform(margin, spec.width - margin);
        const int disk_count =
            rng.uniform_int(spec.disks_per_cluster_min, spec.disks_per_cluster_max);
        const double spread = spec.radius_max_px * 1.9;
        for (int i = 0; i < disk_count; ++i) {
            const double radius = rng.uniform(spec.radius_min_px, spec.radius_max_px);
            const bool occluding =
                !truth.circles.empty() && rng.uniform() < spec.occlusion_fraction;
            bool placed = false;
            for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
                double row, col;
                if (occluding) {
                    // Partial overlap with a random earlier disk of this cluster.
                    const TrueCircle& target =
                        truth.circles[rng.uniform_int(0, static_cast<int>(truth.circles.size()) - 1)];
                    const double gap = (radius + target.radius) * rng.uniform(0.84, 0.97);
                    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
                    row = target.row + gap * std::sin(theta);
                    col = target.col + gap * std::cos(theta);
                } else {
                    row = cluster_row + spread * rng.normal() * 0.5;
                    col = cluster_col + spread * rng.normal() * 0.5;
                }
                if (row < margin || row > spec.height - margin || col < margin ||
                    col > spec.width - margin)
                    continue;
                bool ok = true;
                for (const TrueCircle& other : truth.circles) {
                    const double dr = row - other.row, dc = col - other.col;
                    const double dist = std::sqrt(dr * dr + dc * dc);
                    const double min_allowed =
                        occluding ? std::max(radius, other.radius) * 0.8
                                  : radius + other.radius + 3.0;
                    if (dist < min_allowed) {
                        ok = false;
                        break;
                    }
                }
                if (!ok) continue;
                truth.circles.push_back({row, col, radius, cluster, occluding});
                placed = true;
            }
            if (!placed) ++failures;
        }
    }
    if (!truth.circles.empty() && failures > static_cast<int>(truth.circles.size()))
        throw std::runtime_error("render_scene: infeasible packing (too many disks)");
    if (truth.circles.empty() && spec.cluster_count > 0 && spec.disks_per_cluster_min > 0)
        throw std::runtime_error("render_scene: infeasible packing (no disk fit)");

    // Shared noise fields for berry surface texture; each disk samples
    // them at its own offset, so no two berries carry the same pattern.
    const Grid mottle_noise = detail::value_noise(256, 256, 5, rng);
    const Grid blotch_noise = detail::value_noise(256, 256, 13, rng);
    // Disks placed as overlapping go underneath: the deliberately occluded
    // disk is the one that loses part of its face.
    std::vector<size_t> draw_order;
    for (size_t i = 0; i < truth.circles.size(); ++i)
        if (truth.circles[i].occluding) draw_order.push_back(i);
    for (size_t i = 0; i < truth.circles.size(); ++i)
        if (!truth.circles[i].occluding) draw_order.push_back(i);
    for (size_t i : draw_order) {
        // Real berries vary in hue, brightness, shading and surface
        // texture; per-disk jitter keeps the descriptor correlations
        // spread out instead of collapsing toward 1. A fraction of the
        // berries belongs to a second color family (mixed ripeness), so
        // the reference population is inhomogeneous the way field data is.
        const double u = rng.uniform();
        const bool odd = rng.uniform() < spec.odd_color_fraction;
        detail::DiskStyle style{
            {std::clamp((odd ? 0.52 : 0.40) + 0.14 * u + rng.uniform(-0.08, 0.08), 0.0, 1.0),
             std::clamp((odd ? 0.34 : 0.52) + 0.16 * u + rng.uniform(-0.10, 0.10), 0.0, 1.0),
             std::clamp((odd ? 0.38 : 0.28) + 0.10 * u + rng.uniform(-0.07, 0.07), 0.0, 1.0)},
            rng.uniform(0.20, 0.65),
            rng.uniform(0.0, 0.40),
            rng.uniform(0.10, 0.60),
            rng.uniform(0.10, 0.30),
            rng.uniform(0.10, 0.40),
            rng.uniform(0.0, 200.0),
            rng.uniform(0.0, 200.0),
            rng.uniform() < spec.low_contrast_fraction};
        detail::draw_disk(img, truth.circles[i], style, mottle_noise, blotch_noise,
                          light_row, light_col);
    }
    return {std::move(img), std::move(truth)};
}

/// Greedy one-to-one matching of detections to ground truth: pairs within
/// tol in both center distance and radius, matched nearest-first. The
/// matching is injective both ways by construction.
inline DetectionScore evaluate_detection(std::span<const Circle> detections,
                                         const GroundTruth& truth, double tol) {
    if (tol <= 0.0) throw std::invalid_argument("evaluate_detection: tol must be > 0");
    DetectionScore score;
    score.detected = static_cast<int>(detections.size());
    score.truth = static_cast<int>(truth.circles.size());
    score.empty_detections = detections.empty();
    score.empty_truth = truth.circles.empty();

    struct Pair {
        double dist;
        int det;
        int tru;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < score.detected; ++i) {
        for (int j = 0; j < score.truth; ++j) {
            const double dr = detections[i].center_row - truth.circles[j].row;
            const double dc = detections[i].center_col - truth.circles[j].col;
            const double dist = std::sqrt(dr * dr + dc * dc);
            if (dist > tol) continue;
            if (std::abs(detections[i].radius - truth.circles[j].radius) > tol) continue;
            pairs.push_back({dist, i, j});
        }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
        if (a.dist != b.dist) return a.dist < b.dist;
        if (a.det != b.det) return a.det < b.det;
        return a.tru < b.tru;
    });
    std::vector<uint8_t> det_used(score.detected, 0), tru_used(score.truth, 0);
    double abs_diameter_error = 0.0;
    for (const Pair& p : pairs) {
        if (det_used[p.det] || tru_used[p.tru]) continue;
        det_used[p.det] = tru_used[p.tru] = 1;
        ++score.matched;
        abs_diameter_error +=
            std::abs(2.0 * detections[p.det].radius - 2.0 * truth.circles[p.tru].radius);
    }
    score.precision =
        score.detected > 0 ? static_cast<double>(score.matched) / score.detected : 1.0;
    score.recall = score.truth > 0 ? static_cast<double>(score.matched) / score.truth : 1.0;
    score.diameter_mae_px = score.matched > 0 ? abs_diameter_error / score.matched : 0.0;
    return score;
}

}  // namespace vinesize
