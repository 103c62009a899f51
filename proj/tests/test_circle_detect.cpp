#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "vinesize/hough.hpp"
#include "vinesize/synth.hpp"

using namespace vinesize;

namespace {

GradientField constant_gradient_field(int w, int h, double iu, double iv) {
    GradientField g{Grid(w, h, iu), Grid(w, h, iv), Grid(w, h, std::sqrt(iu * iu + iv * iv))};
    return g;
}

// Independent scoring of a circle against a ridge map, mirroring the
// refinement objective: mean ridge value over the rasterized circle.
double circle_ridge_score(const Circle& c, const RidgeMap& ridge) {
    double sum = 0.0;
    int count = 0;
    for (auto [r, cc] : circle_points(c.center_row, c.center_col, c.radius)) {
        if (r < 0 || r >= ridge.values.height || cc < 0 || cc >= ridge.values.width) continue;
        sum += ridge.values.at(r, cc);
        ++count;
    }
    return count > 0 ? sum / count : 0.0;
}

RidgeMap ring_ridge(int w, int h, double cr, double cc, double radius) {
    RidgeMap ridge{Grid(w, h), 5};
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double dist = std::hypot(r - cr, c - cc);
            ridge.values.at(r, c) = std::exp(-0.5 * std::pow((dist - radius) / 1.2, 2));
        }
    }
    return ridge;
}

double mask_ridge_correlation(const GradientField& grad, const RidgeMap& ridge, double t) {
    std::vector<double> mask(grad.magnitude.values.size());
    for (size_t i = 0; i < mask.size(); ++i)
        mask[i] = grad.magnitude.values[i] >= t ? 1.0 : 0.0;
    return pearson_correlation(mask, ridge.values.values);
}

}  // namespace

TEST_CASE("select_gradient_threshold") {
    SECTION("disk scene: the chosen mask hugs the true boundary") {
        const double cr = 60, cc = 64, radius = 25;
        const RasterImage img = testutil::disk_image(128, 128, cr, cc, radius);
        const GradientField grad = sobel_gradients(img);
        const RidgeMap ridge = stddev_ridge(img, 5);
        const auto t = select_gradient_threshold(grad, ridge, 20);
        REQUIRE(t.has_value());
        int on_boundary = 0, total = 0;
        for (int r = 0; r < 128; ++r) {
            for (int c = 0; c < 128; ++c) {
                if (grad.magnitude.at(r, c) < *t) continue;
                ++total;
                if (std::abs(std::hypot(r - cr, c - cc) - radius) <= 2.0) ++on_boundary;
            }
        }
        REQUIRE(total > 0);
        CHECK(static_cast<double>(on_boundary) / total >= 0.95);
    }

    SECTION("constant magnitude: degenerate ties resolve to the largest quantile") {
        const GradientField grad = constant_gradient_field(16, 16, 0.5, 0.0);
        const RidgeMap ridge{Grid(16, 16, 0.25), 5};
        const auto t = select_gradient_threshold(grad, ridge, 20);
        REQUIRE(t.has_value());
        CHECK(*t == Catch::Approx(0.5));
    }

    SECTION("a disk yields a strictly higher peak correlation than pure noise") {
        const RasterImage disk = testutil::disk_image(96, 96, 48, 48, 20);
        testutil::Rng rng(99);
        RasterImage noise(96, 96, 1);
        for (float& v : noise.pixels) v = static_cast<float>(rng.uniform());

        const GradientField disk_grad = sobel_gradients(disk);
        const RidgeMap disk_ridge = stddev_ridge(disk, 5);
        const auto disk_t = select_gradient_threshold(disk_grad, disk_ridge, 20);
        const GradientField noise_grad = sobel_gradients(noise);
        const RidgeMap noise_ridge = stddev_ridge(noise, 5);
        const auto noise_t = select_gradient_threshold(noise_grad, noise_ridge, 20);
        REQUIRE(disk_t.has_value());
        REQUIRE(noise_t.has_value());
        CHECK(mask_ridge_correlation(disk_grad, disk_ridge, *disk_t) >
              mask_ridge_correlation(noise_grad, noise_ridge, *noise_t));
    }

    SECTION("all-zero gradients signal the empty-detection condition") {
        const GradientField grad = constant_gradient_field(8, 8, 0.0, 0.0);
        const RidgeMap ridge{Grid(8, 8, 0.0), 5};
        CHECK_FALSE(select_gradient_threshold(grad, ridge, 20).has_value());
    }
}

TEST_CASE("build_accumulator") {
    SECTION("a single boundary pixel votes along both gradient directions") {
        GradientField grad = constant_gradient_field(101, 101, 0.0, 0.0);
        grad.iu.at(50, 50) = 1.0;
        grad.magnitude.at(50, 50) = 1.0;
        BinaryMask mask(101, 101);
        mask.at(50, 50) = 1;
        RidgeMap ridge{Grid(101, 101, 0.0), 5};
        ridge.values.at(50, 50) = 2.0;
        const Accumulator acc = build_accumulator(grad, mask, ridge, 15, 25);
        int nonzero = 0;
        for (int r = 0; r < 101; ++r) {
            for (int c = 0; c < 101; ++c) {
                if (acc.votes.at(r, c) == 0.0) continue;
                ++nonzero;
                CHECK(c == 50);
                CHECK((std::abs(r - 50) >= 15 && std::abs(r - 50) <= 25));
                CHECK(acc.votes.at(r, c) == 2.0);
            }
        }
        CHECK(nonzero == 22);
        // The vote at distance 20 lands on the center of the radius-20
        // circle this pixel would lie on.
        CHECK(acc.votes.at(30, 50) == 2.0);
        CHECK(acc.votes.at(70, 50) == 2.0);
    }

    SECTION("a full circle concentrates votes at its center") {
        const double cr = 50, cc = 52, radius = 20;
        const RasterImage img = testutil::disk_image(104, 104, cr, cc, radius);
        const GradientField grad = sobel_gradients(img);
        const RidgeMap ridge = stddev_ridge(img, 5);
        const auto t = select_gradient_threshold(grad, ridge, 20);
        REQUIRE(t.has_value());
        const Accumulator acc =
            build_accumulator(grad, make_gradient_mask(grad, *t), ridge, 15, 25);
        int best_r = -1, best_c = -1;
        double best = -1.0;
        for (int r = 0; r < 104; ++r)
            for (int c = 0; c < 104; ++c)
                if (acc.votes.at(r, c) > best) {
                    best = acc.votes.at(r, c);
                    best_r = r;
                    best_c = c;
                }
        CHECK(std::abs(best_r - cr) <= 1.0);
        CHECK(std::abs(best_c - cc) <= 1.0);
    }

    SECTION("two well-separated circles produce two local vote maxima") {
        RasterImage img(160, 160, 1, 0.1f);
        auto paint = [&](double cr, double cc, double radius) {
            for (int r = 0; r < 160; ++r) {
                for (int c = 0; c < 160; ++c) {
                    const double dist = std::hypot(r - cr, c - cc);
                    const double coverage = std::clamp(radius + 0.5 - dist, 0.0, 1.0);
                    img.at(r, c) = std::max(img.at(r, c),
                                            static_cast<float>(0.1 + 0.8 * coverage));
                }
            }
        };
        paint(45, 45, 20);
        paint(115, 110, 20);
        const GradientField grad = sobel_gradients(img);
        const RidgeMap ridge = stddev_ridge(img, 5);
        const auto t = select_gradient_threshold(grad, ridge, 20);
        REQUIRE(t.has_value());
        const Accumulator acc =
            build_accumulator(grad, make_gradient_mask(grad, *t), ridge, 15, 25);
        const auto peaks = detect_peaks(acc, 0.3, 2.0, 15);
        REQUIRE(peaks.size() == 2);
        const double d0 = std::min(std::hypot(peaks[0].row - 45.0, peaks[0].col - 45.0),
                                   std::hypot(peaks[0].row - 115.0, peaks[0].col - 110.0));
        const double d1 = std::min(std::hypot(peaks[1].row - 45.0, peaks[1].col - 45.0),
                                   std::hypot(peaks[1].row - 115.0, peaks[1].col - 110.0));
        CHECK(d0 <= 1.5);
        CHECK(d1 <= 1.5);
    }

    SECTION("empty mask yields a zero accumulator") {
        const GradientField grad = constant_gradient_field(32, 32, 0.3, 0.4);
        const BinaryMask mask(32, 32);
        const RidgeMap ridge{Grid(32, 32, 1.0), 5};
        const Accumulator acc = build_accumulator(grad, mask, ridge, 5, 10);
        for (double v : acc.votes.values) CHECK(v == 0.0);
    }
}

TEST_CASE("detect_peaks") {
    SECTION("zero accumulator yields no peaks") {
        const Accumulator acc{Grid(32, 32, 0.0)};
        CHECK(detect_peaks(acc, 0.3, 2.0, 5).empty());
    }

    SECTION("single sharp peak is found exactly") {
        Accumulator acc{Grid(32, 32, 0.0)};
        acc.votes.at(12, 20) = 5.0;
        const auto peaks = detect_peaks(acc, 0.5, 0.0, 3);
        REQUIRE(peaks.size() == 1);
        CHECK(peaks[0].row == 12);
        CHECK(peaks[0].col == 20);
    }

    SECTION("threshold fraction separates reference from candidate peaks") {
        Accumulator acc{Grid(64, 64, 0.0)};
        acc.votes.at(10, 10) = 1.0;
        acc.votes.at(40, 40) = 0.5;
        const auto refs = detect_peaks(acc, 0.6, 0.0, 3);
        const auto cands = detect_peaks(acc, 0.3, 0.0, 3);
        REQUIRE(refs.size() == 1);
        CHECK(refs[0].row == 10);
        REQUIRE(cands.size() == 2);
        CHECK(cands[0].response == 1.0);
        CHECK(cands[1].response == 0.5);
    }

    SECTION("high-threshold peaks are a subset of low-threshold peaks") {
        testutil::Rng rng(31);
        for (int trial = 0; trial < 25; ++trial) {
            Accumulator acc{Grid(48, 48, 0.0)};
            const int bumps = rng.uniform_int(1, 12);
            for (int b = 0; b < bumps; ++b)
                acc.votes.at(rng.uniform_int(0, 47), rng.uniform_int(0, 47)) +=
                    rng.uniform(0.1, 1.0);
            const Grid smoothed = gaussian_smooth(acc.votes, 1.0);
            const auto high = find_peaks_in_smoothed(smoothed, 0.6, 4);
            const auto low = find_peaks_in_smoothed(smoothed, 0.3, 4);
            std::set<std::pair<int, int>> low_set;
            for (const Peak& p : low) low_set.insert({p.row, p.col});
            for (const Peak& p : high) REQUIRE(low_set.count({p.row, p.col}) == 1);
        }
    }
}

TEST_CASE("estimate_radius") {
    SECTION("ideal circle radius is recovered within one pixel") {
        const RasterImage img = testutil::disk_image(104, 104, 50, 52, 20);
        const GradientField grad = sobel_gradients(img);
        const auto d = estimate_radius(50, 52, grad, 15, 25);
        REQUIRE(d.has_value());
        CHECK(std::abs(*d - 20) <= 1);
    }

    SECTION("constant image has zero signature and is discarded") {
        RasterImage img(64, 64, 1, 0.5f);
        const GradientField grad = sobel_gradients(img);
        CHECK_FALSE(estimate_radius(32, 32, grad, 10, 20).has_value());
    }

    SECTION("concentric rings: the global signature argmax wins") {
        RasterImage img(120, 120, 1, 0.1f);
        auto paint_ring = [&](double radius, float strength) {
            for (int r = 0; r < 120; ++r) {
                for (int c = 0; c < 120; ++c) {
                    const double dist = std::hypot(r - 60.0, c - 60.0);
                    const double w = std::clamp(1.5 - std::abs(dist - radius), 0.0, 1.0);
                    img.at(r, c) = std::max(img.at(r, c),
                                            static_cast<float>(0.1 + strength * w));
                }
            }
        };
        paint_ring(18, 0.4f);
        paint_ring(22, 0.8f);
        const GradientField grad = sobel_gradients(img);
        const auto inner = estimate_radius(60, 60, grad, 15, 19);
        const auto outer = estimate_radius(60, 60, grad, 20, 25);
        const auto global = estimate_radius(60, 60, grad, 15, 25);
        REQUIRE(inner.has_value());
        REQUIRE(outer.has_value());
        REQUIRE(global.has_value());
        CHECK(std::abs(*inner - 18) <= 1);
        CHECK(std::abs(*outer - 22) <= 1);
        CHECK(*global == *outer);
    }

    SECTION("circle outside the image for every radius is discarded") {
        RasterImage img = testutil::disk_image(20, 20, 10, 10, 6);
        const GradientField grad = sobel_gradients(img);
        CHECK_FALSE(estimate_radius(10, 10, grad, 50, 60).has_value());
    }
}

TEST_CASE("refine_circle") {
    SECTION("a circle already on the ridge ring is returned unchanged") {
        const RidgeMap ridge = ring_ridge(100, 100, 50, 50, 20);
        const Circle c{50, 50, 20};
        const Circle refined = refine_circle(c, ridge, 5, 5, 15, 25);
        CHECK(refined.center_row == 50);
        CHECK(refined.center_col == 50);
        CHECK(refined.radius == 20);
    }

    SECTION("an offset circle snaps back to the rendered ring") {
        const RidgeMap ridge = ring_ridge(100, 100, 50, 50, 20);
        const Circle offset{53, 48, 24};  // off by (3, -2), radius +4
        const Circle refined = refine_circle(offset, ridge, 5, 5, 15, 25);
        CHECK(std::abs(refined.center_row - 50) <= 1);
        CHECK(std::abs(refined.center_col - 50) <= 1);
        CHECK(std::abs(refined.radius - 20) <= 1);
    }

    SECTION("refinement never decreases the fit score") {
        testutil::Rng rng(41);
        for (int trial = 0; trial < 50; ++trial) {
            RidgeMap ridge{Grid(60, 60), 5};
            for (double& v : ridge.values.values) v = rng.uniform();
            const Circle c{rng.uniform_int(10, 49), rng.uniform_int(10, 49),
                           rng.uniform_int(5, 9)};
            const Circle refined = refine_circle(c, ridge, 5, 5, 4, 12);
            REQUIRE(circle_ridge_score(refined, ridge) >=
                    circle_ridge_score(c, ridge) - 1e-12);
        }
    }

    SECTION("no valid configuration returns the input unchanged") {
        const RidgeMap ridge{Grid(40, 40, 1.0), 5};
        const Circle c{20, 20, 30};  // every radius in +/-5 is outside [4, 10]
        const Circle refined = refine_circle(c, ridge, 5, 5, 4, 10);
        CHECK(refined.center_row == c.center_row);
        CHECK(refined.center_col == c.center_col);
        CHECK(refined.radius == c.radius);
    }
}

TEST_CASE("detect_circles") {
    SECTION("blank image yields a well-formed empty candidate set") {
        RasterImage img(64, 64, 3, 0.5f);
        DetectConfig cfg;
        cfg.radius_min_px = 10;
        cfg.radius_max_px = 20;
        const CandidateSet result = detect_circles(img, cfg);
        CHECK(result.size() == 0);
        CHECK(result.reference_flags.empty());
    }

    SECTION("synthetic clustered scene: most disks found, R subset of C") {
        SceneSpec spec;
        spec.width = 760;
        spec.height = 760;
        spec.cluster_count = 5;
        spec.disks_per_cluster_min = 6;
        spec.disks_per_cluster_max = 6;
        spec.radius_min_px = 16;
        spec.radius_max_px = 40;
        spec.occlusion_fraction = 0.0;
        spec.clutter_count = 3;
        spec.seed = 2024;
        const auto [img, truth] = render_scene(spec);
        REQUIRE(truth.circles.size() >= 25);

        DetectConfig cfg;
        cfg.radius_min_px = 13;
        cfg.radius_max_px = 50;
        const CandidateSet result = detect_circles(img, cfg);

        const auto score = evaluate_detection(result.candidates, truth, 2.0);
        INFO("matched " << score.matched << " of " << score.truth);
        CHECK(score.recall >= 0.899);

        for (size_t i = 0; i < result.size(); ++i) {
            CHECK(result.candidates[i].radius >= cfg.radius_min_px);
            CHECK(result.candidates[i].radius <= cfg.radius_max_px);
        }
    }

    SECTION("low-contrast disks keep R a subset of C") {
        SceneSpec spec;
        spec.width = 600;
        spec.height = 600;
        spec.cluster_count = 4;
        spec.disks_per_cluster_min = 5;
        spec.disks_per_cluster_max = 5;
        spec.radius_min_px = 16;
        spec.radius_max_px = 32;
        spec.low_contrast_fraction = 0.5;
        spec.occlusion_fraction = 0.0;
        spec.clutter_count = 2;
        spec.seed = 77;
        const auto [img, truth] = render_scene(spec);
        DetectConfig cfg;
        cfg.radius_min_px = 13;
        cfg.radius_max_px = 40;
        const CandidateSet result = detect_circles(img, cfg);
        CHECK(result.reference_indices().size() <= result.size());
        for (int idx : result.reference_indices()) CHECK(result.reference_flags[idx] == 1);
    }

    SECTION("identical inputs give identical candidate sets") {
        const RasterImage img = gray_to_rgb(testutil::disk_image(128, 128, 60, 64, 22));
        DetectConfig cfg;
        cfg.radius_min_px = 15;
        cfg.radius_max_px = 30;
        const CandidateSet a = detect_circles(img, cfg);
        const CandidateSet b = detect_circles(img, cfg);
        REQUIRE(a.size() == b.size());
        REQUIRE(a.size() >= 1);
        for (size_t i = 0; i < a.size(); ++i) {
            CHECK(a.candidates[i].center_row == b.candidates[i].center_row);
            CHECK(a.candidates[i].center_col == b.candidates[i].center_col);
            CHECK(a.candidates[i].radius == b.candidates[i].radius);
            CHECK(a.responses[i] == b.responses[i]);
            CHECK(a.reference_flags[i] == b.reference_flags[i]);
        }
    }

    SECTION("voting is symmetric under intensity negation") {
        testutil::Rng rng(7);
        for (int trial = 0; trial < 5; ++trial) {
            RasterImage img(96, 96, 1);
            for (float& v : img.pixels) v = static_cast<float>(rng.uniform(0.2, 0.8));
            for (int d = 0; d < 3; ++d) {
                const RasterImage disk = testutil::disk_image(
                    96, 96, rng.uniform(20, 76), rng.uniform(20, 76), rng.uniform(8, 14),
                    0.95f, 0.0f);
                for (size_t i = 0; i < img.pixels.size(); ++i)
                    img.pixels[i] = std::max(img.pixels[i], disk.pixels[i]);
            }
            RasterImage negated = img;
            for (float& v : negated.pixels) v = 1.0f - v;

            auto accumulate = [](const RasterImage& gray) {
                const GradientField grad = sobel_gradients(gray);
                const RidgeMap ridge = stddev_ridge(gray, 5);
                const auto t = select_gradient_threshold(grad, ridge, 20);
                REQUIRE(t.has_value());
                return build_accumulator(grad, make_gradient_mask(grad, *t), ridge, 6, 16);
            };
            const Accumulator a = accumulate(img);
            const Accumulator b = accumulate(negated);
            double max_vote = 0.0;
            for (double v : a.votes.values) max_vote = std::max(max_vote, v);
            REQUIRE(max_vote > 0.0);
            for (size_t i = 0; i < a.votes.values.size(); ++i)
                REQUIRE(std::abs(a.votes.values[i] - b.votes.values[i]) <=
                        1e-6 * max_vote);
        }
    }
}
