#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <numbers>
#include <vector>

#include "helpers.hpp"
#include "vinesize/filters.hpp"
#include "vinesize/image.hpp"

using namespace vinesize;

TEST_CASE("load_image reads binary PPM and PGM") {
    const auto dir = testutil::scratch_dir("img_io");

    SECTION("all-white 2x2 PPM maps to 1.0") {
        std::ofstream out(dir / "white.ppm", std::ios::binary);
        out << "P6\n2 2\n255\n";
        for (int i = 0; i < 12; ++i) out.put(static_cast<char>(0xFF));
        out.close();
        const RasterImage img = load_image((dir / "white.ppm").string());
        REQUIRE(img.width == 2);
        REQUIRE(img.height == 2);
        REQUIRE(img.channels == 3);
        for (float v : img.pixels) CHECK(v == 1.0f);
    }

    SECTION("PGM comment and maxval handling") {
        std::ofstream out(dir / "gray.pgm", std::ios::binary);
        out << "P5\n# comment\n2 1\n255\n";
        out.put(static_cast<char>(0));
        out.put(static_cast<char>(255));
        out.close();
        const RasterImage img = load_image((dir / "gray.pgm").string());
        REQUIRE(img.channels == 1);
        CHECK(img.at(0, 0) == 0.0f);
        CHECK(img.at(0, 1) == 1.0f);
    }

    SECTION("truncated PPM raises format_error") {
        std::ofstream out(dir / "trunc.ppm", std::ios::binary);
        out << "P6\n4 4\n255\n";
        out.put(static_cast<char>(1));
        out.close();
        CHECK_THROWS_AS(load_image((dir / "trunc.ppm").string()), format_error);
    }

    SECTION("missing file raises io_error") {
        CHECK_THROWS_AS(load_image((dir / "nope.ppm").string()), io_error);
    }

    SECTION("unsupported format raises format_error") {
        std::ofstream out(dir / "junk.bin", std::ios::binary);
        out << "not an image at all";
        out.close();
        CHECK_THROWS_AS(load_image((dir / "junk.bin").string()), format_error);
    }
}

TEST_CASE("PNG round trip") {
    const auto dir = testutil::scratch_dir("png_io");

    SECTION("all-black 2x2 PNG maps to 0.0") {
        RasterImage black(2, 2, 3, 0.0f);
        save_png(black, (dir / "black.png").string());
        const RasterImage img = load_image((dir / "black.png").string());
        REQUIRE(img.channels == 3);
        for (float v : img.pixels) CHECK(v == 0.0f);
    }

    SECTION("8-bit values survive a color round trip") {
        testutil::Rng rng(7);
        RasterImage img(5, 4, 3);
        for (float& v : img.pixels)
            v = static_cast<float>(rng.uniform_int(0, 255)) / 255.0f;
        save_png(img, (dir / "rt.png").string());
        const RasterImage back = load_image((dir / "rt.png").string());
        REQUIRE(back.width == img.width);
        REQUIRE(back.height == img.height);
        for (size_t i = 0; i < img.pixels.size(); ++i)
            CHECK(back.pixels[i] == Catch::Approx(img.pixels[i]).margin(1e-6));
    }

    SECTION("grayscale PNG loads as one channel") {
        RasterImage gray(3, 3, 1, 0.5f);
        save_png(gray, (dir / "gray.png").string());
        CHECK(load_image((dir / "gray.png").string()).channels == 1);
    }

    SECTION("truncated PNG raises format_error") {
        RasterImage img(16, 16, 3, 0.25f);
        save_png(img, (dir / "full.png").string());
        std::ifstream in(dir / "full.png", std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
        in.close();
        std::ofstream out(dir / "cut.png", std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        CHECK_THROWS_AS(load_image((dir / "cut.png").string()), format_error);
    }
}

TEST_CASE("YIQ conversion") {
    SECTION("gray carries no chrominance") {
        RasterImage white(1, 1, 3, 1.0f);
        const RasterImage yiq = rgb_to_yiq(white);
        CHECK(yiq.at(0, 0, 0) == Catch::Approx(1.0).margin(1e-9));
        CHECK(yiq.at(0, 0, 1) == Catch::Approx(0.0).margin(1e-9));
        CHECK(yiq.at(0, 0, 2) == Catch::Approx(0.0).margin(1e-9));
    }

    SECTION("black maps to zero") {
        RasterImage black(1, 1, 3, 0.0f);
        const RasterImage yiq = rgb_to_yiq(black);
        for (float v : yiq.pixels) CHECK(v == Catch::Approx(0.0).margin(1e-12));
    }

    SECTION("round trip within 1e-6 over random pixels") {
        testutil::Rng rng(11);
        RasterImage img(32, 32, 3);
        for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
        const RasterImage back = yiq_to_rgb(rgb_to_yiq(img));
        for (size_t i = 0; i < img.pixels.size(); ++i)
            CHECK(std::abs(back.pixels[i] - img.pixels[i]) < 1e-6f);
    }

    SECTION("single-channel input rejected") {
        RasterImage gray(4, 4, 1, 0.5f);
        CHECK_THROWS_AS(rgb_to_yiq(gray), std::invalid_argument);
    }
}

TEST_CASE("enhance") {
    SECTION("image already spanning the percentile targets is unchanged") {
        // 200 gray pixels with >=3 at 0 and >=3 at 1 pin the 1%/99%
        // percentiles to exactly 0 and 1, so the stretch is the identity.
        RasterImage img(20, 10, 3);
        for (int i = 0; i < 200; ++i) {
            float v;
            if (i < 3)
                v = 0.0f;
            else if (i >= 197)
                v = 1.0f;
            else
                v = static_cast<float>(i) / 200.0f;
            img.pixels[i * 3] = img.pixels[i * 3 + 1] = img.pixels[i * 3 + 2] = v;
        }
        const RasterImage out = enhance(img);
        for (size_t i = 0; i < img.pixels.size(); ++i)
            CHECK(std::abs(out.pixels[i] - img.pixels[i]) < 1e-6f);
    }

    SECTION("constant mid-gray is unchanged by the flat guard") {
        RasterImage img(8, 8, 3, 0.5f);
        const RasterImage out = enhance(img);
        CHECK(out.pixels == img.pixels);
    }

    SECTION("low-contrast ramp is stretched to the full range") {
        RasterImage img(100, 50, 3);
        for (int r = 0; r < 50; ++r) {
            for (int c = 0; c < 100; ++c) {
                const float v = 0.4f + 0.2f * static_cast<float>(r * 100 + c) / 4999.0f;
                img.at(r, c, 0) = img.at(r, c, 1) = img.at(r, c, 2) = v;
            }
        }
        const RasterImage out = enhance(img);
        std::vector<double> luma;
        const RasterImage yiq = rgb_to_yiq(out);
        for (size_t i = 0; i < yiq.pixels.size(); i += 3) luma.push_back(yiq.pixels[i]);
        CHECK(quantile(luma, 0.01) == Catch::Approx(0.0).margin(1.0 / 255.0));
        CHECK(quantile(luma, 0.99) == Catch::Approx(1.0).margin(1.0 / 255.0));
    }

    SECTION("enhance is idempotent within 1e-6") {
        testutil::Rng rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            RasterImage img(24, 24, 3);
            const double lo = rng.uniform(0.0, 0.4), hi = rng.uniform(0.6, 1.0);
            for (float& v : img.pixels) v = static_cast<float>(rng.uniform(lo, hi));
            const RasterImage once = enhance(img);
            const RasterImage twice = enhance(once);
            for (size_t i = 0; i < once.pixels.size(); ++i)
                REQUIRE(std::abs(twice.pixels[i] - once.pixels[i]) < 1e-6f);
        }
    }
}

TEST_CASE("sobel_gradients") {
    SECTION("constant image has zero magnitude") {
        RasterImage img(9, 9, 1, 0.7f);
        const GradientField g = sobel_gradients(img);
        for (double v : g.magnitude.values) CHECK(v == 0.0);
    }

    SECTION("step along rows responds in iu only, on rows adjacent to the step") {
        RasterImage img(11, 11, 1, 0.0f);
        for (int r = 6; r < 11; ++r)
            for (int c = 0; c < 11; ++c) img.at(r, c) = 1.0f;
        const GradientField g = sobel_gradients(img);
        for (int r = 1; r < 10; ++r)
            for (int c = 1; c < 10; ++c) CHECK(g.iv.at(r, c) == Catch::Approx(0.0).margin(1e-12));
        double best = 0.0;
        int best_row = -1;
        for (int r = 0; r < 11; ++r) {
            if (std::abs(g.iu.at(r, 5)) > best) {
                best = std::abs(g.iu.at(r, 5));
                best_row = r;
            }
        }
        CHECK((best_row == 5 || best_row == 6));
    }

    SECTION("linear ramp f(u,v)=u gives constant-sign iu and zero iv in the interior") {
        RasterImage img(12, 12, 1);
        for (int r = 0; r < 12; ++r)
            for (int c = 0; c < 12; ++c) img.at(r, c) = static_cast<float>(r) / 11.0f;
        const GradientField g = sobel_gradients(img);
        for (int r = 1; r < 11; ++r) {
            for (int c = 1; c < 11; ++c) {
                CHECK(g.iu.at(r, c) > 0.0);
                CHECK(g.iv.at(r, c) == Catch::Approx(0.0).margin(1e-12));
            }
        }
    }

    SECTION("magnitude squared equals iu^2 + iv^2") {
        testutil::Rng rng(5);
        RasterImage img(16, 16, 1);
        for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
        const GradientField g = sobel_gradients(img);
        for (size_t i = 0; i < g.magnitude.values.size(); ++i) {
            const double m2 = g.magnitude.values[i] * g.magnitude.values[i];
            CHECK(std::abs(m2 - (g.iu.values[i] * g.iu.values[i] +
                                 g.iv.values[i] * g.iv.values[i])) < 1e-9);
        }
    }

    SECTION("disk boundary gradients point radially") {
        const double cr = 30.5, cc = 32.5, radius = 18.0;
        const RasterImage img = testutil::disk_image(64, 64, cr, cc, radius);
        const GradientField g = sobel_gradients(img);
        int total = 0, aligned = 0;
        for (int r = 0; r < 64; ++r) {
            for (int c = 0; c < 64; ++c) {
                const double dist = std::hypot(r - cr, c - cc);
                if (std::abs(dist - radius) > 1.0) continue;
                if (g.magnitude.at(r, c) < 1e-6) continue;
                ++total;
                const double dot = (g.iu.at(r, c) * (r - cr) + g.iv.at(r, c) * (c - cc)) /
                                   (g.magnitude.at(r, c) * dist);
                const double angle = std::acos(std::clamp(std::abs(dot), 0.0, 1.0));
                if (angle < 15.0 * std::numbers::pi / 180.0) ++aligned;
            }
        }
        REQUIRE(total > 20);
        CHECK(static_cast<double>(aligned) / total >= 0.9);
    }

    SECTION("image smaller than the kernel is rejected") {
        RasterImage img(2, 2, 1, 0.0f);
        CHECK_THROWS_AS(sobel_gradients(img), std::invalid_argument);
    }
}

TEST_CASE("stddev_ridge") {
    SECTION("constant image yields zeros") {
        RasterImage img(10, 10, 1, 0.37f);
        const RidgeMap ridge = stddev_ridge(img, 5);
        for (double v : ridge.values.values) CHECK(std::abs(v) < 1e-12);
    }

    SECTION("checkerboard interior matches the 9-sample standard deviation") {
        RasterImage img(9, 9, 1);
        for (int r = 0; r < 9; ++r)
            for (int c = 0; c < 9; ++c) img.at(r, c) = static_cast<float>((r + c) % 2);
        const RidgeMap ridge = stddev_ridge(img, 3);
        // Five of one value and four of the other in every 3x3 window:
        // sqrt((5*(4/9)^2 + 4*(5/9)^2) / 8) = 0.52705.
        const double expected = std::sqrt((5.0 * std::pow(4.0 / 9.0, 2) +
                                           4.0 * std::pow(5.0 / 9.0, 2)) / 8.0);
        for (int r = 2; r < 7; ++r)
            for (int c = 2; c < 7; ++c)
                CHECK(ridge.values.at(r, c) == Catch::Approx(expected).margin(1e-3));
    }

    SECTION("step edge responds strongest next to the edge") {
        RasterImage img(12, 12, 1, 0.0f);
        for (int r = 0; r < 12; ++r)
            for (int c = 6; c < 12; ++c) img.at(r, c) = 1.0f;
        const RidgeMap ridge = stddev_ridge(img, 3);
        double edge_response = ridge.values.at(6, 5);
        double far_response = ridge.values.at(6, 1);
        CHECK(edge_response > far_response);
        CHECK(edge_response > 0.4);
        CHECK(far_response < 1e-9);
    }

    SECTION("even or tiny window is rejected") {
        RasterImage img(8, 8, 1, 0.0f);
        CHECK_THROWS_AS(stddev_ridge(img, 4), std::invalid_argument);
        CHECK_THROWS_AS(stddev_ridge(img, 1), std::invalid_argument);
    }
}

TEST_CASE("resize_bilinear") {
    SECTION("identity resize is bit-identical") {
        testutil::Rng rng(17);
        RasterImage img(13, 7, 3);
        for (float& v : img.pixels) v = static_cast<float>(rng.uniform());
        const RasterImage out = resize_bilinear(img, 13, 7);
        CHECK(out.pixels == img.pixels);
    }

    SECTION("constant image stays constant at any size") {
        RasterImage img(4, 6, 1, 0.42f);
        const RasterImage out = resize_bilinear(img, 9, 3);
        for (float v : out.pixels) CHECK(v == Catch::Approx(0.42f).margin(1e-7));
    }

    SECTION("2x1 ramp upsampled to 5x1 interpolates the corner-aligned grid") {
        RasterImage img(2, 1, 1);
        img.at(0, 0) = 0.0f;
        img.at(0, 1) = 1.0f;
        const RasterImage out = resize_bilinear(img, 5, 1);
        const float expected[5] = {0.0f, 0.25f, 0.5f, 0.75f, 1.0f};
        for (int c = 0; c < 5; ++c)
            CHECK(out.at(0, c) == Catch::Approx(expected[c]).margin(1e-7));
        for (int c = 1; c < 5; ++c) CHECK(out.at(0, c) >= out.at(0, c - 1));
    }

    SECTION("global min/max bounds are preserved") {
        testutil::Rng rng(23);
        RasterImage img(10, 10, 1);
        for (float& v : img.pixels) v = static_cast<float>(rng.uniform(0.2, 0.8));
        const RasterImage out = resize_bilinear(img, 23, 17);
        const auto [in_min, in_max] =
            std::minmax_element(img.pixels.begin(), img.pixels.end());
        for (float v : out.pixels) {
            CHECK(v >= *in_min - 1e-7f);
            CHECK(v <= *in_max + 1e-7f);
        }
    }

    SECTION("zero target dimension is rejected") {
        RasterImage img(4, 4, 1, 0.0f);
        CHECK_THROWS_AS(resize_bilinear(img, 0, 4), std::invalid_argument);
    }
}
