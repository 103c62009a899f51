#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "vinesize/common.hpp"
#include "vinesize/image.hpp"

namespace vinesize {

/// Sobel derivatives of a single-channel image. iu is the derivative
/// along image rows (kernel rows [-1 -2 -1; 0 0 0; 1 2 1]), iv along
/// columns (the transposed kernel), magnitude = sqrt(iu^2 + iv^2).
struct GradientField {
    Grid iu;
    Grid iv;
    Grid magnitude;
};

/// Per-pixel local sample standard deviation over an odd square window.
struct RidgeMap {
    Grid values;
    int window = 0;
};

inline GradientField sobel_gradients(const RasterImage& img) {
    if (img.channels != 1)
        throw std::invalid_argument("sobel_gradients: single-channel input required");
    if (img.width < 3 || img.height < 3)
        throw std::invalid_argument("sobel_gradients: image smaller than kernel");
    const int w = img.width, h = img.height;
    GradientField g{Grid(w, h), Grid(w, h), Grid(w, h)};
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double p00 = img.at_clamped(r - 1, c - 1);
            const double p01 = img.at_clamped(r - 1, c);
            const double p02 = img.at_clamped(r - 1, c + 1);
            const double p10 = img.at_clamped(r, c - 1);
            const double p12 = img.at_clamped(r, c + 1);
            const double p20 = img.at_clamped(r + 1, c - 1);
            const double p21 = img.at_clamped(r + 1, c);
            const double p22 = img.at_clamped(r + 1, c + 1);
            const double du = (p20 + 2 * p21 + p22) - (p00 + 2 * p01 + p02);
            const double dv = (p02 + 2 * p12 + p22) - (p00 + 2 * p10 + p20);
            g.iu.at(r, c) = du;
            g.iv.at(r, c) = dv;
            g.magnitude.at(r, c) = std::sqrt(du * du + dv * dv);
        }
    }
    return g;
}

/// Local sample standard deviation with replicate padding, computed from
/// prefix sums so the cost is independent of the window size. Values are
/// centered on the global mean before accumulation to keep a constant
/// image at exactly zero up to rounding.
inline RidgeMap stddev_ridge(const RasterImage& img, int window) {
    if (img.channels != 1)
        throw std::invalid_argument("stddev_ridge: single-channel input required");
    if (window < 3 || window % 2 == 0)
        throw std::invalid_argument("stddev_ridge: window must be odd and >= 3");
    const int w = img.width, h = img.height;
    const int k = window / 2;
    const int pw = w + 2 * k, ph = h + 2 * k;

    double global_mean = 0.0;
    for (float v : img.pixels) global_mean += v;
    global_mean /= static_cast<double>(img.pixels.size());

    // Prefix sums over the replicate-padded image, (ph+1) x (pw+1).
    std::vector<double> s1(static_cast<size_t>(ph + 1) * (pw + 1), 0.0);
    std::vector<double> s2(static_cast<size_t>(ph + 1) * (pw + 1), 0.0);
    auto idx = [pw](int r, int c) { return static_cast<size_t>(r) * (pw + 1) + c; };
    for (int r = 0; r < ph; ++r) {
        for (int c = 0; c < pw; ++c) {
            const double v = img.at_clamped(r - k, c - k) - global_mean;
            s1[idx(r + 1, c + 1)] =
                v + s1[idx(r, c + 1)] + s1[idx(r + 1, c)] - s1[idx(r, c)];
            s2[idx(r + 1, c + 1)] =
                v * v + s2[idx(r, c + 1)] + s2[idx(r + 1, c)] - s2[idx(r, c)];
        }
    }

    RidgeMap ridge{Grid(w, h), window};
    const double n = static_cast<double>(window) * window;
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            // Window [r, r+window) x [c, c+window) in padded coordinates.
            const int r0 = r, c0 = c, r1 = r + window, c1 = c + window;
            const double sum = s1[idx(r1, c1)] - s1[idx(r0, c1)] - s1[idx(r1, c0)] + s1[idx(r0, c0)];
            const double sum2 = s2[idx(r1, c1)] - s2[idx(r0, c1)] - s2[idx(r1, c0)] + s2[idx(r0, c0)];
            const double var = std::max(0.0, (sum2 - sum * sum / n) / (n - 1.0));
            ridge.values.at(r, c) = std::sqrt(var);
        }
    }
    return ridge;
}

/// Separable Gaussian blur with replicate padding; kernel radius 3*sigma.
inline Grid gaussian_smooth(const Grid& in, double sigma) {
    if (sigma <= 0.0) return in;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        norm += kernel[i + radius];
    }
    for (double& kv : kernel) kv /= norm;

    Grid tmp(in.width, in.height);
    for (int r = 0; r < in.height; ++r) {
        for (int c = 0; c < in.width; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * in.at_clamped(r, c + i);
            tmp.at(r, c) = acc;
        }
    }
    Grid out(in.width, in.height);
    for (int r = 0; r < in.height; ++r) {
        for (int c = 0; c < in.width; ++c) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp.at_clamped(r + i, c);
            out.at(r, c) = acc;
        }
    }
    return out;
}

}  // namespace vinesize
