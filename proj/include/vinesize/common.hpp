#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vinesize {

/// File could not be opened or read.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// File content is not a supported raster format or is malformed.
struct format_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Configuration file or option set is invalid.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// No reference circles were detected and no external reference
/// patches were supplied, so candidates cannot be labeled.
struct classification_unavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Single-channel double-precision grid, row-major.
struct Grid {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<size_t>(w) * h, fill) {}

    double& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }

    /// Value at (r, c) with coordinates clamped into the grid (replicate padding).
    double at_clamped(int r, int c) const {
        if (r < 0) r = 0;
        if (r >= height) r = height - 1;
        if (c < 0) c = 0;
        if (c >= width) c = width - 1;
        return at(r, c);
    }

    bool same_shape(const Grid& other) const {
        return width == other.width && height == other.height;
    }

    size_t size() const { return values.size(); }
};

}  // namespace vinesize
