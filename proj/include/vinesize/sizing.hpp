#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "vinesize/geometry.hpp"
#include "vinesize/stats.hpp"

namespace vinesize {

/// Conversion between image pixels and millimetres, derived from a label
/// of known physical width measured in the image.
struct ScaleCalibration {
    double label_width_mm = 13.0;
    double label_width_px = 0.0;
    double mm_per_px = 0.0;
};

inline ScaleCalibration calibrate_scale(double label_width_px, double label_width_mm = 13.0) {
    if (label_width_px <= 0.0)
        throw std::invalid_argument("calibrate_scale: label width in px must be > 0");
    if (label_width_mm <= 0.0)
        throw std::invalid_argument("calibrate_scale: label width in mm must be > 0");
    return ScaleCalibration{label_width_mm, label_width_px, label_width_mm / label_width_px};
}

/// Berry diameters in millimetres: diameter_mm = a * 2 * radius_px.
inline std::vector<double> measure_berries(std::span<const Circle> berries,
                                           const ScaleCalibration& cal) {
    std::vector<double> out;
    out.reserve(berries.size());
    for (const Circle& c : berries) out.push_back(cal.mm_per_px * 2.0 * c.radius);
    return out;
}

/// Histogram bin index in 0.5 mm units, rounded half-up.
inline int histogram_bin(double diameter_mm) {
    return static_cast<int>(std::floor(diameter_mm / 0.5 + 0.5));
}

inline double histogram_bin_center(int bin) { return bin * 0.5; }

/// Counts per 0.5 mm bin; empty bins are omitted. The counts always sum
/// to the number of input diameters.
inline std::map<int, int> build_histogram(std::span<const double> diameters_mm) {
    std::map<int, int> hist;
    for (double d : diameters_mm) hist[histogram_bin(d)] += 1;
    return hist;
}

struct SummaryStats {
    size_t count = 0;
    double mean = 0.0;
    double std_dev = 0.0;
    bool std_degenerate = false;          // fewer than 2 diameters
    std::optional<double> md;             // framework mean - manual mean
    std::optional<double> mad;            // |md| for a single image
};

/// Mean and sample std of the unrounded diameters, plus MD/MAD against a
/// manual mean when one is supplied. An empty diameter list yields a
/// zero-count marker (sizing unavailable).
inline SummaryStats summarize(std::span<const double> diameters_mm,
                              std::optional<double> manual_mean_mm = std::nullopt) {
    SummaryStats s;
    s.count = diameters_mm.size();
    if (s.count == 0) return s;
    s.mean = mean(diameters_mm);
    s.std_dev = sample_std(diameters_mm);
    s.std_degenerate = s.count < 2;
    if (manual_mean_mm) {
        s.md = s.mean - *manual_mean_mm;
        s.mad = std::abs(*s.md);
    }
    return s;
}

/// Pearson correlation between framework and manual mean diameters across
/// a batch of images.
inline double batch_correlation(
    std::span<const std::pair<double, double>> framework_vs_manual) {
    if (framework_vs_manual.size() < 2)
        throw std::invalid_argument("batch_correlation: need at least 2 image pairs");
    std::vector<double> framework, manual;
    framework.reserve(framework_vs_manual.size());
    manual.reserve(framework_vs_manual.size());
    for (const auto& [f, m] : framework_vs_manual) {
        framework.push_back(f);
        manual.push_back(m);
    }
    return pearson_correlation(framework, manual);
}

}  // namespace vinesize
