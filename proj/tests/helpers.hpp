#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "vinesize/image.hpp"

namespace testutil {

/// Deterministic uniform helpers on top of mt19937_64 (the std
/// distributions are implementation-defined, these are not).
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform() * (hi - lo + 1.0) * (1.0 - 1e-16));
    }

  private:
    std::mt19937_64 gen_;
};

/// Anti-aliased bright disk on a dark background, single channel.
inline vinesize::RasterImage disk_image(int width, int height, double center_row,
                                        double center_col, double radius,
                                        float foreground = 0.9f, float background = 0.1f) {
    vinesize::RasterImage img(width, height, 1, background);
    for (int r = 0; r < height; ++r) {
        for (int c = 0; c < width; ++c) {
            const double dr = r - center_row, dc = c - center_col;
            const double dist = std::sqrt(dr * dr + dc * dc);
            const double coverage = std::clamp(radius + 0.5 - dist, 0.0, 1.0);
            img.at(r, c) = static_cast<float>(background + (foreground - background) * coverage);
        }
    }
    return img;
}

/// Fresh scratch directory under the system temp path.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() /
                     ("vinesize_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
