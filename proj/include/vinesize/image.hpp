#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <png.h>

#include "vinesize/common.hpp"
#include "vinesize/stats.hpp"

namespace vinesize {

/// Row-major, channel-interleaved raster with intensities normalized to
/// [0,1] per channel. Working buffers in other color spaces (YIQ) reuse
/// this container; their chrominance channels may leave [0,1].
struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> pixels;

    RasterImage() = default;
    RasterImage(int w, int h, int ch, float fill = 0.0f)
        : width(w), height(h), channels(ch),
          pixels(static_cast<size_t>(w) * h * ch, fill) {}

    float& at(int r, int c, int ch = 0) {
        return pixels[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    float at(int r, int c, int ch = 0) const {
        return pixels[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    float at_clamped(int r, int c, int ch = 0) const {
        r = std::clamp(r, 0, height - 1);
        c = std::clamp(c, 0, width - 1);
        return at(r, c, ch);
    }
    bool empty() const { return width <= 0 || height <= 0; }
};

namespace detail {

inline uint8_t to_byte(float v) {
    const float scaled = std::round(std::clamp(v, 0.0f, 1.0f) * 255.0f);
    return static_cast<uint8_t>(scaled);
}

// NTSC RGB -> YIQ transform. Rows of I and Q sum to zero, so gray
// pixels carry no chrominance.
inline constexpr std::array<std::array<double, 3>, 3> kRgbToYiq = {{
    {0.299, 0.587, 0.114},
    {0.595716, -0.274453, -0.321263},
    {0.211456, -0.522591, 0.311135},
}};

inline std::array<std::array<double, 3>, 3> invert3x3(
    const std::array<std::array<double, 3>, 3>& m) {
    const double det =
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
        m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
        m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    std::array<std::array<double, 3>, 3> inv;
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
    return inv;
}

inline const std::array<std::array<double, 3>, 3>& yiq_to_rgb_matrix() {
    static const auto inv = invert3x3(kRgbToYiq);
    return inv;
}

inline RasterImage apply_color_matrix(const RasterImage& img,
                                      const std::array<std::array<double, 3>, 3>& m,
                                      bool clip) {
    RasterImage out(img.width, img.height, 3);
    const size_t n = static_cast<size_t>(img.width) * img.height;
    for (size_t i = 0; i < n; ++i) {
        const double a = img.pixels[i * 3 + 0];
        const double b = img.pixels[i * 3 + 1];
        const double c = img.pixels[i * 3 + 2];
        for (int k = 0; k < 3; ++k) {
            double v = m[k][0] * a + m[k][1] * b + m[k][2] * c;
            if (clip) v = std::clamp(v, 0.0, 1.0);
            out.pixels[i * 3 + k] = static_cast<float>(v);
        }
    }
    return out;
}

}  // namespace detail

inline RasterImage rgb_to_yiq(const RasterImage& img) {
    if (img.channels != 3)
        throw std::invalid_argument("rgb_to_yiq: 3-channel input required");
    return detail::apply_color_matrix(img, detail::kRgbToYiq, false);
}

inline RasterImage yiq_to_rgb(const RasterImage& img) {
    if (img.channels != 3)
        throw std::invalid_argument("yiq_to_rgb: 3-channel input required");
    return detail::apply_color_matrix(img, detail::yiq_to_rgb_matrix(), false);
}

/// Luminance (Y of YIQ) as a single-channel image. Single-channel input
/// is returned as-is.
inline RasterImage to_gray(const RasterImage& img) {
    if (img.channels == 1) return img;
    if (img.channels != 3)
        throw std::invalid_argument("to_gray: 1- or 3-channel input required");
    RasterImage out(img.width, img.height, 1);
    const size_t n = static_cast<size_t>(img.width) * img.height;
    for (size_t i = 0; i < n; ++i) {
        const auto& m = detail::kRgbToYiq[0];
        out.pixels[i] = static_cast<float>(m[0] * img.pixels[i * 3 + 0] +
                                           m[1] * img.pixels[i * 3 + 1] +
                                           m[2] * img.pixels[i * 3 + 2]);
    }
    return out;
}

inline RasterImage gray_to_rgb(const RasterImage& img) {
    if (img.channels == 3) return img;
    if (img.channels != 1)
        throw std::invalid_argument("gray_to_rgb: 1- or 3-channel input required");
    RasterImage out(img.width, img.height, 3);
    const size_t n = static_cast<size_t>(img.width) * img.height;
    for (size_t i = 0; i < n; ++i)
        out.pixels[i * 3 + 0] = out.pixels[i * 3 + 1] = out.pixels[i * 3 + 2] =
            img.pixels[i];
    return out;
}

/// Brightness/contrast adjustment: linear stretch of the Y channel so the
/// 1st/99th percentiles map to 0/1, chrominance untouched. A flat image
/// (percentile range below 1e-6) is returned unchanged.
inline RasterImage enhance(const RasterImage& img) {
    if (img.channels != 3)
        throw std::invalid_argument("enhance: 3-channel input required");
    RasterImage yiq = rgb_to_yiq(img);
    const size_t n = static_cast<size_t>(img.width) * img.height;
    std::vector<double> luma(n);
    for (size_t i = 0; i < n; ++i) luma[i] = yiq.pixels[i * 3];
    std::sort(luma.begin(), luma.end());
    // Nearest-rank percentiles: with interpolation the restretched image
    // would come out one order statistic short of its own 1st percentile,
    // and the operation would not be idempotent.
    const double p1 = luma[static_cast<size_t>(0.01 * (n - 1))];
    const double p99 = luma[static_cast<size_t>(std::ceil(0.99 * (n - 1)))];
    const double range = p99 - p1;
    if (range < 1e-6) return img;
    // Out-of-gamut results are brought back by scaling the chrominance at
    // constant luminance rather than clipping channels; clipping would
    // shift Y and break the operation's idempotence.
    const auto& inv = detail::yiq_to_rgb_matrix();
    RasterImage out(img.width, img.height, 3);
    for (size_t i = 0; i < n; ++i) {
        const double y =
            std::clamp((static_cast<double>(yiq.pixels[i * 3]) - p1) / range, 0.0, 1.0);
        const double ci = yiq.pixels[i * 3 + 1];
        const double cq = yiq.pixels[i * 3 + 2];
        double scale = 1.0;
        for (int ch = 0; ch < 3; ++ch) {
            const double d = inv[ch][1] * ci + inv[ch][2] * cq;
            if (d > 1e-12) scale = std::min(scale, (1.0 - y) / d);
            else if (d < -1e-12) scale = std::min(scale, -y / d);
        }
        scale = std::max(scale, 0.0);
        for (int ch = 0; ch < 3; ++ch) {
            const double v = y + scale * (inv[ch][1] * ci + inv[ch][2] * cq);
            out.pixels[i * 3 + ch] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

/// Bilinear resampling with corner-aligned sampling. An identity resize
/// is bit-identical to the input.
inline RasterImage resize_bilinear(const RasterImage& img, int new_width, int new_height) {
    if (new_width < 1 || new_height < 1)
        throw std::invalid_argument("resize_bilinear: target dimensions must be >= 1");
    RasterImage out(new_width, new_height, img.channels);
    const double sy = new_height > 1
                          ? static_cast<double>(img.height - 1) / (new_height - 1)
                          : 0.0;
    const double sx = new_width > 1
                          ? static_cast<double>(img.width - 1) / (new_width - 1)
                          : 0.0;
    for (int r = 0; r < new_height; ++r) {
        const double fy = r * sy;
        const int y0 = std::min(static_cast<int>(fy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int c = 0; c < new_width; ++c) {
            const double fx = c * sx;
            const int x0 = std::min(static_cast<int>(fx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < img.channels; ++ch) {
                const double v00 = img.at(y0, x0, ch);
                const double v01 = img.at(y0, x1, ch);
                const double v10 = img.at(y1, x0, ch);
                const double v11 = img.at(y1, x1, ch);
                const double v = (1 - wy) * ((1 - wx) * v00 + wx * v01) +
                                 wy * ((1 - wx) * v10 + wx * v11);
                out.at(r, c, ch) = static_cast<float>(v);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// File I/O: PNG via libpng, binary PPM (P6) / PGM (P5), 8-bit.

namespace detail {

inline RasterImage load_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        std::string msg = image.message;
        png_image_free(&image);
        throw format_error("PNG read failed for '" + path + "': " + msg);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    const int channels = color ? 3 : 1;
    if (image.width == 0 || image.height == 0) {
        png_image_free(&image);
        throw format_error("PNG with zero area: '" + path + "'");
    }
    std::vector<uint8_t> buffer(PNG_IMAGE_SIZE(image));
    png_color background{0, 0, 0};
    if (!png_image_finish_read(&image, &background, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw format_error("PNG decode failed for '" + path + "': " + msg);
    }
    RasterImage out(static_cast<int>(image.width), static_cast<int>(image.height), channels);
    for (size_t i = 0; i < buffer.size(); ++i)
        out.pixels[i] = static_cast<float>(buffer[i]) / 255.0f;
    return out;
}

inline int pnm_next_value(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments between header tokens.
    while (true) {
        const int ch = in.peek();
        if (ch == EOF) throw format_error("truncated PNM header: '" + path + "'");
        if (std::isspace(ch)) {
            in.get();
            continue;
        }
        if (ch == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        break;
    }
    int value = 0;
    if (!(in >> value)) throw format_error("malformed PNM header: '" + path + "'");
    return value;
}

inline RasterImage load_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open '" + path + "'");
    char magic[2] = {0, 0};
    in.read(magic, 2);
    const bool color = magic[1] == '6';
    if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
        throw format_error("not a binary PPM/PGM: '" + path + "'");
    const int width = pnm_next_value(in, path);
    const int height = pnm_next_value(in, path);
    const int maxval = pnm_next_value(in, path);
    if (width <= 0 || height <= 0)
        throw format_error("PNM with zero area: '" + path + "'");
    if (maxval <= 0 || maxval > 255)
        throw format_error("only 8-bit PNM supported: '" + path + "'");
    in.get();  // single whitespace separating header from raster
    const int channels = color ? 3 : 1;
    std::vector<uint8_t> buffer(static_cast<size_t>(width) * height * channels);
    in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    if (static_cast<size_t>(in.gcount()) != buffer.size())
        throw format_error("truncated PNM data: '" + path + "'");
    RasterImage out(width, height, channels);
    for (size_t i = 0; i < buffer.size(); ++i)
        out.pixels[i] = static_cast<float>(buffer[i]) / static_cast<float>(maxval);
    return out;
}

}  // namespace detail

/// Loads an 8-bit PNG, binary PPM (P6) or binary PGM (P5), normalized to
/// [0,1]. Color input yields 3 channels, grayscale input 1 channel.
inline RasterImage load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw io_error("cannot open '" + path + "'");
    unsigned char sig[2] = {0, 0};
    probe.read(reinterpret_cast<char*>(sig), 2);
    if (probe.gcount() < 2) throw format_error("truncated file: '" + path + "'");
    probe.close();
    if (sig[0] == 0x89 && sig[1] == 'P') return detail::load_png(path);
    if (sig[0] == 'P' && (sig[1] == '5' || sig[1] == '6')) return detail::load_pnm(path);
    throw format_error("unsupported image format: '" + path + "'");
}

inline void save_png(const RasterImage& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("save_png: 1- or 3-channel image required");
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<uint8_t> buffer(img.pixels.size());
    for (size_t i = 0; i < buffer.size(); ++i)
        buffer[i] = detail::to_byte(img.pixels[i]);
    if (!png_image_write_to_file(&image, path.c_str(), 0, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw io_error("PNG write failed for '" + path + "': " + msg);
    }
}

inline void save_pnm(const RasterImage& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("save_pnm: 1- or 3-channel image required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path + "' for writing");
    out << (img.channels == 3 ? "P6" : "P5") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> buffer(img.pixels.size());
    for (size_t i = 0; i < buffer.size(); ++i)
        buffer[i] = detail::to_byte(img.pixels[i]);
    out.write(reinterpret_cast<const char*>(buffer.data()),
              static_cast<std::streamsize>(buffer.size()));
    if (!out) throw io_error("write failed for '" + path + "'");
}

}  // namespace vinesize
