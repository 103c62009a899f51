#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

namespace vinesize {

/// Detected circle hypothesis; center in pixel coordinates, radius in px.
struct Circle {
    int center_row = 0;
    int center_col = 0;
    int radius = 0;
};

/// Integer perimeter pixels of a circle (midpoint algorithm), deduplicated
/// and sorted row-major.
inline std::vector<std::pair<int, int>> circle_points(int center_row, int center_col,
                                                      int radius) {
    std::vector<std::pair<int, int>> pts;
    if (radius < 1) {
        pts.emplace_back(center_row, center_col);
        return pts;
    }
    pts.reserve(static_cast<size_t>(8) * radius);
    int x = radius, y = 0;
    int err = 1 - radius;
    while (x >= y) {
        pts.emplace_back(center_row + y, center_col + x);
        pts.emplace_back(center_row + y, center_col - x);
        pts.emplace_back(center_row - y, center_col + x);
        pts.emplace_back(center_row - y, center_col - x);
        pts.emplace_back(center_row + x, center_col + y);
        pts.emplace_back(center_row + x, center_col - y);
        pts.emplace_back(center_row - x, center_col + y);
        pts.emplace_back(center_row - x, center_col - y);
        ++y;
        if (err < 0) {
            err += 2 * y + 1;
        } else {
            --x;
            err += 2 * (y - x) + 1;
        }
    }
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    return pts;
}

}  // namespace vinesize
