#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <tuple>
#include <vector>

#include "vinesize/common.hpp"
#include "vinesize/filters.hpp"
#include "vinesize/geometry.hpp"
#include "vinesize/image.hpp"
#include "vinesize/stats.hpp"

namespace vinesize {

/// Hough vote grid, same dimensions as the source image.
struct Accumulator {
    Grid votes;
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> values;

    BinaryMask() = default;
    BinaryMask(int w, int h) : width(w), height(h), values(static_cast<size_t>(w) * h, 0) {}
    uint8_t at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
    uint8_t& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
};

struct Peak {
    int row = 0;
    int col = 0;
    double response = 0.0;
};

struct DetectConfig {
    int radius_min_px = 0;
    int radius_max_px = 0;
    double ref_peak_frac = 0.6;
    double cand_peak_frac = 0.3;
    int refine_shift = 5;
    int refine_scale = 5;
    double smoothing_sigma = 2.0;
    int threshold_grid_size = 20;
    int ridge_window = 5;
};

/// Candidate circles in detection order (descending peak response).
/// reference_flags marks membership in the high-confidence reference set;
/// a flagged circle is always also a candidate.
struct CandidateSet {
    std::vector<Circle> candidates;
    std::vector<uint8_t> reference_flags;
    std::vector<double> responses;

    size_t size() const { return candidates.size(); }
    std::vector<int> reference_indices() const {
        std::vector<int> idx;
        for (size_t i = 0; i < reference_flags.size(); ++i)
            if (reference_flags[i]) idx.push_back(static_cast<int>(i));
        return idx;
    }
};

inline BinaryMask make_gradient_mask(const GradientField& grad, double threshold) {
    BinaryMask mask(grad.magnitude.width, grad.magnitude.height);
    for (size_t i = 0; i < grad.magnitude.values.size(); ++i)
        mask.values[i] = grad.magnitude.values[i] >= threshold ? 1 : 0;
    return mask;
}

/// Picks the gradient-magnitude threshold whose binarization correlates
/// best with the ridge map. Candidates are grid_size quantiles of the
/// nonzero magnitudes between 50% and 99%; ties go to the largest
/// threshold. Returns nothing when the gradient field is identically zero.
inline std::optional<double> select_gradient_threshold(const GradientField& grad,
                                                       const RidgeMap& ridge,
                                                       int grid_size) {
    if (!grad.magnitude.same_shape(ridge.values))
        throw std::invalid_argument("select_gradient_threshold: shape mismatch");
    if (grid_size < 2)
        throw std::invalid_argument("select_gradient_threshold: grid_size must be >= 2");

    std::vector<double> nonzero;
    nonzero.reserve(grad.magnitude.values.size());
    for (double m : grad.magnitude.values)
        if (m > 0.0) nonzero.push_back(m);
    if (nonzero.empty()) return std::nullopt;
    std::sort(nonzero.begin(), nonzero.end());

    const size_t n = grad.magnitude.values.size();
    double sy = 0.0, syy = 0.0;
    for (double v : ridge.values.values) {
        sy += v;
        syy += v * v;
    }
    const double var_y = syy - sy * sy / static_cast<double>(n);

    double best_threshold = 0.0;
    double best_corr = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < grid_size; ++i) {
        const double frac = 0.50 + (0.99 - 0.50) * static_cast<double>(i) / (grid_size - 1);
        const double t = quantile_sorted(nonzero, frac);
        double n1 = 0.0, sy1 = 0.0;
        for (size_t j = 0; j < n; ++j) {
            if (grad.magnitude.values[j] >= t) {
                n1 += 1.0;
                sy1 += ridge.values.values[j];
            }
        }
        const double var_x = n1 - n1 * n1 / static_cast<double>(n);
        double corr = 0.0;
        if (var_x > 0.0 && var_y > 0.0)
            corr = (sy1 - n1 * sy / static_cast<double>(n)) / std::sqrt(var_x * var_y);
        if (corr >= best_corr) {  // >= so ties resolve to the largest threshold
            best_corr = corr;
            best_threshold = t;
        }
    }
    return best_threshold;
}

/// Weighted Hough voting: every mask pixel votes along +/- its gradient
/// direction at all radii in range, adding the ridge value at the source
/// pixel. The gradient sign is deliberately ignored (votes go both ways),
/// so an intensity negation leaves the accumulator unchanged.
inline Accumulator build_accumulator(const GradientField& grad, const BinaryMask& mask,
                                     const RidgeMap& ridge, int radius_min_px,
                                     int radius_max_px) {
    if (radius_min_px < 2 || radius_max_px < radius_min_px)
        throw std::invalid_argument("build_accumulator: bad radius range");
    const int w = grad.magnitude.width, h = grad.magnitude.height;
    Accumulator acc{Grid(w, h)};
    std::vector<std::pair<int, int>> targets;
    targets.reserve(2 * (radius_max_px - radius_min_px + 1));
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!mask.at(r, c)) continue;
            const double norm = grad.magnitude.at(r, c);
            if (norm <= 0.0) continue;
            const double ur = grad.iu.at(r, c) / norm;
            const double uc = grad.iv.at(r, c) / norm;
            const double weight = ridge.values.at(r, c);
            targets.clear();
            for (int d = radius_min_px; d <= radius_max_px; ++d) {
                for (int sign : {1, -1}) {
                    const int tr = static_cast<int>(std::lround(r + sign * d * ur));
                    const int tc = static_cast<int>(std::lround(c + sign * d * uc));
                    if (tr >= 0 && tr < h && tc >= 0 && tc < w) targets.emplace_back(tr, tc);
                }
            }
            std::sort(targets.begin(), targets.end());
            targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
            for (auto [tr, tc] : targets) acc.votes.at(tr, tc) += weight;
        }
    }
    return acc;
}

/// Strict 3x3 local maxima of a smoothed vote grid, thresholded at
/// frac * max, then greedily merged so no two kept peaks are closer than
/// min_separation_px (the stronger peak survives). Sorted by descending
/// response, ties by (row, col).
inline std::vector<Peak> find_peaks_in_smoothed(const Grid& smoothed, double frac,
                                                int min_separation_px) {
    if (frac <= 0.0 || frac > 1.0)
        throw std::invalid_argument("find_peaks_in_smoothed: frac must be in (0,1]");
    double max_value = 0.0;
    for (double v : smoothed.values) max_value = std::max(max_value, v);
    if (max_value <= 0.0) return {};
    const double threshold = frac * max_value;

    std::vector<Peak> raw;
    for (int r = 0; r < smoothed.height; ++r) {
        for (int c = 0; c < smoothed.width; ++c) {
            const double v = smoothed.at(r, c);
            if (v < threshold) continue;
            bool strict_max = true;
            for (int dr = -1; dr <= 1 && strict_max; ++dr) {
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= smoothed.height || nc < 0 || nc >= smoothed.width)
                        continue;
                    if (smoothed.at(nr, nc) >= v) {
                        strict_max = false;
                        break;
                    }
                }
            }
            if (strict_max) raw.push_back({r, c, v});
        }
    }
    std::sort(raw.begin(), raw.end(), [](const Peak& a, const Peak& b) {
        if (a.response != b.response) return a.response > b.response;
        return std::tie(a.row, a.col) < std::tie(b.row, b.col);
    });

    std::vector<Peak> kept;
    const double min_sep2 = static_cast<double>(min_separation_px) * min_separation_px;
    for (const Peak& p : raw) {
        bool suppressed = false;
        for (const Peak& q : kept) {
            const double dr = p.row - q.row, dc = p.col - q.col;
            if (dr * dr + dc * dc < min_sep2) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(p);
    }
    return kept;
}

inline std::vector<Peak> detect_peaks(const Accumulator& acc, double frac, double sigma,
                                      int min_separation_px) {
    return find_peaks_in_smoothed(gaussian_smooth(acc.votes, sigma), frac,
                                  min_separation_px);
}

/// Radius whose circle is best supported by radially aligned gradients.
/// signature(d) = mean over the rasterized circle of |gradient . radial|;
/// ties resolve to the smaller radius. Returns nothing when no radius in
/// range produces a positive response (flat image, or circle fully
/// outside the image).
inline std::optional<int> estimate_radius(int center_row, int center_col,
                                          const GradientField& grad, int radius_min_px,
                                          int radius_max_px) {
    const int w = grad.magnitude.width, h = grad.magnitude.height;
    int best_d = -1;
    double best_signature = 0.0;
    for (int d = radius_min_px; d <= radius_max_px; ++d) {
        double sum = 0.0;
        int count = 0;
        for (auto [pr, pc] : circle_points(center_row, center_col, d)) {
            if (pr < 0 || pr >= h || pc < 0 || pc >= w) continue;
            const double rr = pr - center_row, rc = pc - center_col;
            const double rnorm = std::sqrt(rr * rr + rc * rc);
            if (rnorm <= 0.0) continue;
            sum += std::abs(grad.iu.at(pr, pc) * rr + grad.iv.at(pr, pc) * rc) / rnorm;
            ++count;
        }
        if (count == 0) continue;
        const double signature = sum / count;
        if (signature > best_signature) {
            best_signature = signature;
            best_d = d;
        }
    }
    if (best_d < 0 || best_signature <= 0.0) return std::nullopt;
    return best_d;
}

/// Exhaustive local search over center shifts and radius scalings,
/// scoring the mean ridge value along the rasterized circle. Ties prefer
/// the smallest displacement, then lexicographic (drow, dcol, dradius).
/// The zero displacement is part of the search, so the returned score
/// never drops below the input's.
inline Circle refine_circle(const Circle& circle, const RidgeMap& ridge, int shift_range,
                            int scale_range, int radius_min_px, int radius_max_px) {
    const int w = ridge.values.width, h = ridge.values.height;
    Circle best = circle;
    double best_score = -std::numeric_limits<double>::infinity();
    auto tie_key = [](int dr, int dc, int dd) {
        return std::make_tuple(dr * dr + dc * dc + dd * dd, dr, dc, dd);
    };
    auto best_key = tie_key(0, 0, 0);
    bool found = false;
    for (int dd = -scale_range; dd <= scale_range; ++dd) {
        const int d = circle.radius + dd;
        if (d < radius_min_px || d > radius_max_px) continue;
        const auto pts = circle_points(0, 0, d);
        for (int dr = -shift_range; dr <= shift_range; ++dr) {
            const int nr = circle.center_row + dr;
            if (nr < 0 || nr >= h) continue;
            for (int dc = -shift_range; dc <= shift_range; ++dc) {
                const int nc = circle.center_col + dc;
                if (nc < 0 || nc >= w) continue;
                double sum = 0.0;
                int count = 0;
                for (auto [pr, pc] : pts) {
                    const int rr = nr + pr, cc = nc + pc;
                    if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
                    sum += ridge.values.at(rr, cc);
                    ++count;
                }
                if (count == 0) continue;
                const double score = sum / count;
                const auto key = tie_key(dr, dc, dd);
                if (!found || score > best_score ||
                    (score == best_score && key < best_key)) {
                    found = true;
                    best_score = score;
                    best_key = key;
                    best = Circle{nr, nc, d};
                }
            }
        }
    }
    return found ? best : circle;
}

/// Full coarse-to-fine detection chain. Peaks at cand_peak_frac form the
/// candidate set; those that also clear ref_peak_frac of the smoothed
/// maximum are flagged as reference circles, so R is a subset of C by
/// construction.
inline CandidateSet detect_circles(const RasterImage& img, const DetectConfig& cfg) {
    if (cfg.radius_min_px < 2 || cfg.radius_max_px < cfg.radius_min_px)
        throw std::invalid_argument("detect_circles: bad radius range");
    const RasterImage gray = to_gray(img);
    const GradientField grad = sobel_gradients(gray);
    const RidgeMap ridge = stddev_ridge(gray, cfg.ridge_window);

    CandidateSet result;
    const auto threshold = select_gradient_threshold(grad, ridge, cfg.threshold_grid_size);
    if (!threshold) return result;

    const BinaryMask mask = make_gradient_mask(grad, *threshold);
    const Accumulator acc =
        build_accumulator(grad, mask, ridge, cfg.radius_min_px, cfg.radius_max_px);
    const Grid smoothed = gaussian_smooth(acc.votes, cfg.smoothing_sigma);
    double smoothed_max = 0.0;
    for (double v : smoothed.values) smoothed_max = std::max(smoothed_max, v);
    const auto peaks =
        find_peaks_in_smoothed(smoothed, cfg.cand_peak_frac, cfg.radius_min_px);

    for (const Peak& p : peaks) {
        const auto radius =
            estimate_radius(p.row, p.col, grad, cfg.radius_min_px, cfg.radius_max_px);
        if (!radius) continue;
        const Circle refined =
            refine_circle(Circle{p.row, p.col, *radius}, ridge, cfg.refine_shift,
                          cfg.refine_scale, cfg.radius_min_px, cfg.radius_max_px);
        result.candidates.push_back(refined);
        result.responses.push_back(p.response);
        result.reference_flags.push_back(
            p.response >= cfg.ref_peak_frac * smoothed_max ? 1 : 0);
    }
    return result;
}

}  // namespace vinesize
