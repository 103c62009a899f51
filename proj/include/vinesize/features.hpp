#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include <fftw3.h>

#include "vinesize/common.hpp"
#include "vinesize/filters.hpp"
#include "vinesize/geometry.hpp"
#include "vinesize/image.hpp"
#include "vinesize/stats.hpp"

namespace vinesize {

/// Square RGB patch resampled to a uniform side length.
struct Patch {
    RasterImage image;       // n_p x n_p x 3
    int source_index = -1;   // index into the candidate set, -1 for external patches
};

/// Per-candidate descriptors. hog and gist are L2-normalized (or exactly
/// zero when the patch carries no structure); rgb is the raw vectorized
/// patch, since the correlation transform is shift/scale invariant.
struct FeatureBundle {
    std::vector<double> rgb;
    std::vector<double> hog;
    std::vector<double> gist;
};

/// Scalar projections of the descriptors: median correlation against the
/// reference set, one value per feature kind, each in [-1, 1].
struct TransformedFeatures {
    double l_rgb = 0.0;
    double l_hog = 0.0;
    double l_gist = 0.0;
};

struct FeatureParams {
    int patch_size = 32;   // N_p
    int hog_grid = 2;      // 2x2 cells
    int hog_bins = 8;      // unsigned orientation bins over [0, pi)
    int gist_grid = 4;     // 4x4 spatial pooling
    int gist_scales = 4;   // dyadic radial bands
    int gist_orients = 8;  // orientation wedges
};

/// Crops the square of side 2*radius around the circle center (replicate
/// padding beyond the image) and resamples it to n_p x n_p.
inline Patch extract_patch(const RasterImage& img, const Circle& circle, int n_p) {
    if (img.channels != 3)
        throw std::invalid_argument("extract_patch: 3-channel image required");
    if (n_p < 8) throw std::invalid_argument("extract_patch: n_p must be >= 8");
    const int side = std::max(2, 2 * circle.radius);
    RasterImage crop(side, side, 3);
    const int r0 = circle.center_row - circle.radius;
    const int c0 = circle.center_col - circle.radius;
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            for (int ch = 0; ch < 3; ++ch)
                crop.at(r, c, ch) = img.at_clamped(r0 + r, c0 + c, ch);
    return Patch{resize_bilinear(crop, n_p, n_p), -1};
}

/// Vectorized RGB values, row-major and channel-interleaved; dimension
/// 3 * n_p^2.
inline std::vector<double> rgb_descriptor(const Patch& p) {
    return std::vector<double>(p.image.pixels.begin(), p.image.pixels.end());
}

namespace detail {

inline std::vector<double> l2_normalized_or_zero(std::vector<double> v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    if (ss < 1e-24) {
        std::fill(v.begin(), v.end(), 0.0);
        return v;
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (double& x : v) x *= inv;
    return v;
}

}  // namespace detail

/// Histogram of unsigned gradient orientations: grid x grid cells, bins
/// over [0, pi) with linear interpolation between adjacent bin centers,
/// magnitude-weighted votes, L2-normalized as a whole.
inline std::vector<double> hog_descriptor(const Patch& p, int grid = 2, int bins = 8) {
    const RasterImage gray = to_gray(p.image);
    const GradientField grad = sobel_gradients(gray);
    const int n = gray.width;
    std::vector<double> hist(static_cast<size_t>(grid) * grid * bins, 0.0);
    const double bin_width = std::numbers::pi / bins;
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            const double mag = grad.magnitude.at(r, c);
            if (mag <= 0.0) continue;
            double theta = std::atan2(grad.iu.at(r, c), grad.iv.at(r, c));
            theta = std::fmod(theta + 2.0 * std::numbers::pi, std::numbers::pi);
            const int cell_r = std::min(grid - 1, r * grid / n);
            const int cell_c = std::min(grid - 1, c * grid / n);
            const size_t cell = (static_cast<size_t>(cell_r) * grid + cell_c) * bins;
            const double pos = theta / bin_width;
            const int b0 = static_cast<int>(pos) % bins;
            const double frac = pos - std::floor(pos);
            hist[cell + b0] += mag * (1.0 - frac);
            hist[cell + (b0 + 1) % bins] += mag * frac;
        }
    }
    return detail::l2_normalized_or_zero(std::move(hist));
}

namespace detail {

/// In-place complex 2-D FFT workspace; plans are cached per thread and
/// creation is serialized (the FFTW planner is not thread-safe).
class Fft2d {
  public:
    explicit Fft2d(int n) : n_(n) {
        std::lock_guard<std::mutex> lock(planner_mutex());
        buffer_ = fftw_alloc_complex(static_cast<size_t>(n) * n);
        forward_ = fftw_plan_dft_2d(n, n, buffer_, buffer_, FFTW_FORWARD, FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_2d(n, n, buffer_, buffer_, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    ~Fft2d() {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
        fftw_free(buffer_);
    }
    Fft2d(const Fft2d&) = delete;
    Fft2d& operator=(const Fft2d&) = delete;

    fftw_complex* buffer() { return buffer_; }
    void forward() { fftw_execute(forward_); }
    void inverse() { fftw_execute(inverse_); }
    int size() const { return n_; }

    static std::mutex& planner_mutex() {
        static std::mutex m;
        return m;
    }

  private:
    int n_;
    fftw_complex* buffer_;
    fftw_plan forward_;
    fftw_plan inverse_;
};

inline Fft2d& fft_workspace(int n) {
    thread_local std::map<int, std::unique_ptr<Fft2d>> cache;
    auto& slot = cache[n];
    if (!slot) slot = std::make_unique<Fft2d>(n);
    return *slot;
}

/// Gaussian-profiled band-pass transfer functions: dyadic radial bands
/// centered at 0.25/2^s cycles/px and orientation wedges at o*pi/orients,
/// symmetric under f -> -f so filtered outputs stay real.
inline const std::vector<std::vector<double>>& gist_filter_bank(int n, int scales,
                                                                int orients) {
    thread_local std::map<std::tuple<int, int, int>, std::vector<std::vector<double>>> cache;
    auto& bank = cache[{n, scales, orients}];
    if (!bank.empty()) return bank;

    constexpr double sigma_log_radius = 0.425;  // ~1 octave FWHM
    const double sigma_theta = std::numbers::pi / (2.0 * orients);
    bank.resize(static_cast<size_t>(scales) * orients,
                std::vector<double>(static_cast<size_t>(n) * n, 0.0));
    for (int s = 0; s < scales; ++s) {
        const double center_freq = 0.25 / std::pow(2.0, s);
        for (int o = 0; o < orients; ++o) {
            const double theta0 = o * std::numbers::pi / orients;
            auto& h = bank[static_cast<size_t>(s) * orients + o];
            for (int i = 0; i < n; ++i) {
                const double fr = (i <= n / 2 ? i : i - n) / static_cast<double>(n);
                for (int j = 0; j < n; ++j) {
                    const double fc = (j <= n / 2 ? j : j - n) / static_cast<double>(n);
                    const double radius = std::sqrt(fr * fr + fc * fc);
                    if (radius <= 0.0) continue;  // DC stays zero
                    const double dlog = std::log2(radius / center_freq);
                    double dtheta = std::atan2(fr, fc) - theta0;
                    dtheta = std::fmod(dtheta + 2.5 * std::numbers::pi, std::numbers::pi) -
                             0.5 * std::numbers::pi;
                    h[static_cast<size_t>(i) * n + j] =
                        std::exp(-0.5 * dlog * dlog / (sigma_log_radius * sigma_log_radius)) *
                        std::exp(-0.5 * dtheta * dtheta / (sigma_theta * sigma_theta));
                }
            }
        }
    }
    return bank;
}

}  // namespace detail

/// Localized spectral-energy descriptor: the patch spectrum is filtered by
/// scales x orients band-pass filters and each filtered image's squared
/// response is averaged over a grid x grid spatial layout, yielding
/// grid^2 * scales * orients values, L2-normalized.
inline std::vector<double> gist_descriptor(const Patch& p, int grid = 4, int scales = 4,
                                           int orients = 8) {
    const RasterImage gray = to_gray(p.image);
    const int n = gray.width;
    if (n < 16) throw std::invalid_argument("gist_descriptor: patch side must be >= 16");

    auto& fft = detail::fft_workspace(n);
    fftw_complex* buf = fft.buffer();
    for (int i = 0; i < n * n; ++i) {
        buf[i][0] = gray.pixels[i];
        buf[i][1] = 0.0;
    }
    fft.forward();
    std::vector<std::complex<double>> spectrum(static_cast<size_t>(n) * n);
    for (int i = 0; i < n * n; ++i) spectrum[i] = {buf[i][0], buf[i][1]};

    const auto& bank = detail::gist_filter_bank(n, scales, orients);
    std::vector<double> descriptor;
    descriptor.reserve(static_cast<size_t>(grid) * grid * scales * orients);
    const double inv_nn = 1.0 / (static_cast<double>(n) * n);
    for (const auto& h : bank) {
        for (int i = 0; i < n * n; ++i) {
            buf[i][0] = spectrum[i].real() * h[i];
            buf[i][1] = spectrum[i].imag() * h[i];
        }
        fft.inverse();
        // Block means of the squared filtered response (response is real
        // up to rounding; the imaginary part is discarded).
        for (int gy = 0; gy < grid; ++gy) {
            const int r0 = gy * n / grid, r1 = (gy + 1) * n / grid;
            for (int gx = 0; gx < grid; ++gx) {
                const int c0 = gx * n / grid, c1 = (gx + 1) * n / grid;
                double acc = 0.0;
                for (int r = r0; r < r1; ++r) {
                    for (int c = c0; c < c1; ++c) {
                        const double v = buf[static_cast<size_t>(r) * n + c][0] * inv_nn;
                        acc += v * v;
                    }
                }
                descriptor.push_back(acc / ((r1 - r0) * (c1 - c0)));
            }
        }
    }
    return detail::l2_normalized_or_zero(std::move(descriptor));
}

inline FeatureBundle compute_feature_bundle(const Patch& p, const FeatureParams& params) {
    return FeatureBundle{
        rgb_descriptor(p),
        hog_descriptor(p, params.hog_grid, params.hog_bins),
        gist_descriptor(p, params.gist_grid, params.gist_scales, params.gist_orients),
    };
}

inline FeatureBundle compute_feature_bundle(const RasterImage& img, const Circle& circle,
                                            const FeatureParams& params) {
    return compute_feature_bundle(extract_patch(img, circle, params.patch_size), params);
}

/// Median correlation of each candidate descriptor against the reference
/// descriptors (per feature kind). The median of an even count is the
/// mean of the two central values.
inline std::vector<TransformedFeatures> transform_features(
    std::span<const FeatureBundle> candidates, std::span<const FeatureBundle> references) {
    if (references.empty())
        throw classification_unavailable("transform_features: empty reference set");
    std::vector<TransformedFeatures> out;
    out.reserve(candidates.size());
    std::vector<double> corr_rgb(references.size());
    std::vector<double> corr_hog(references.size());
    std::vector<double> corr_gist(references.size());
    for (const FeatureBundle& cand : candidates) {
        for (size_t r = 0; r < references.size(); ++r) {
            corr_rgb[r] = pearson_correlation(cand.rgb, references[r].rgb);
            corr_hog[r] = pearson_correlation(cand.hog, references[r].hog);
            corr_gist[r] = pearson_correlation(cand.gist, references[r].gist);
        }
        out.push_back(TransformedFeatures{median(corr_rgb), median(corr_hog),
                                          median(corr_gist)});
    }
    return out;
}

}  // namespace vinesize
