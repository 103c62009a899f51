#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace vinesize {

inline double mean(std::span<const double> v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
inline double sample_std(std::span<const double> v) {
    const size_t n = v.size();
    if (n < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

/// p-quantile of a sorted sequence, linear interpolation between order
/// statistics (the "R-7" convention: h = (n-1)p).
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("quantile of empty sequence");
    if (p <= 0.0) return sorted.front();
    if (p >= 1.0) return sorted.back();
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const size_t lo = static_cast<size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    return quantile_sorted(v, p);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

/// Sample Pearson correlation coefficient. Zero-variance input on either
/// side yields 0 so the coefficient is total over all inputs.
inline double pearson_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: dimension mismatch");
    if (a.size() < 2) throw std::invalid_argument("pearson: need at least 2 elements");
    const double ma = mean(a);
    const double mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace vinesize
