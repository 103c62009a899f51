#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vinesize/common.hpp"
#include "vinesize/crf.hpp"
#include "vinesize/features.hpp"
#include "vinesize/hough.hpp"
#include "vinesize/image.hpp"
#include "vinesize/sizing.hpp"
#include "vinesize/synth.hpp"

namespace vinesize {

/// Fully resolved pipeline parameters. Every default comes from the
/// method's fixed settings (weights, percentiles, peak fractions, patch
/// layout) or is documented in the README's configuration table.
struct PipelineConfig {
    int resize_width = 1667;   // 0 = keep native size
    int resize_height = 2500;  // 0 = keep native size

    double scale_label_px = 0.0;  // width of the 13 mm label in px; 0 = unset
    double label_width_mm = 13.0;
    double radius_mm_min = 5.0;
    double radius_mm_max = 20.0;
    int radius_px_min = 0;  // explicit px range; overrides the mm-derived one
    int radius_px_max = 0;

    double ref_peak_frac = 0.6;
    double cand_peak_frac = 0.3;
    int refine_shift = 5;
    int refine_scale = 5;
    double smoothing_sigma = 2.0;
    int threshold_grid_size = 20;
    int ridge_window = 5;

    int patch_size = 32;
    int hog_grid = 2;
    int hog_bins = 8;
    int gist_grid = 4;
    int gist_scales = 4;
    int gist_orients = 8;

    double w_rgb = 0.5;
    double w_hog = 0.5;
    double w_gist = 1.0;
    double w_dist = 2.0;
    double percentile_p = 0.5;
    double percentile_p_fallback = 0.7;
    double sharpness = 40.0;
    std::string pairwise = "potts";
    double graph_prune_factor = 3.0;

    uint64_t seed = 1;
    bool dump_accumulator = false;

    CrfWeights crf_weights() const { return CrfWeights{w_rgb, w_hog, w_gist, w_dist}; }
    FeatureParams feature_params() const {
        return FeatureParams{patch_size, hog_grid, hog_bins, gist_grid, gist_scales,
                             gist_orients};
    }
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename Fn>
inline void for_each_config_key(PipelineConfig& cfg, Fn&& fn) {
    fn("resize_width", cfg.resize_width);
    fn("resize_height", cfg.resize_height);
    fn("scale_label_px", cfg.scale_label_px);
    fn("label_width_mm", cfg.label_width_mm);
    fn("radius_mm_min", cfg.radius_mm_min);
    fn("radius_mm_max", cfg.radius_mm_max);
    fn("radius_px_min", cfg.radius_px_min);
    fn("radius_px_max", cfg.radius_px_max);
    fn("ref_peak_frac", cfg.ref_peak_frac);
    fn("cand_peak_frac", cfg.cand_peak_frac);
    fn("refine_shift", cfg.refine_shift);
    fn("refine_scale", cfg.refine_scale);
    fn("smoothing_sigma", cfg.smoothing_sigma);
    fn("threshold_grid_size", cfg.threshold_grid_size);
    fn("ridge_window", cfg.ridge_window);
    fn("patch_size", cfg.patch_size);
    fn("hog_grid", cfg.hog_grid);
    fn("hog_bins", cfg.hog_bins);
    fn("gist_grid", cfg.gist_grid);
    fn("gist_scales", cfg.gist_scales);
    fn("gist_orients", cfg.gist_orients);
    fn("w_rgb", cfg.w_rgb);
    fn("w_hog", cfg.w_hog);
    fn("w_gist", cfg.w_gist);
    fn("w_dist", cfg.w_dist);
    fn("percentile_p", cfg.percentile_p);
    fn("percentile_p_fallback", cfg.percentile_p_fallback);
    fn("sharpness", cfg.sharpness);
    fn("pairwise", cfg.pairwise);
    fn("graph_prune_factor", cfg.graph_prune_factor);
    fn("seed", cfg.seed);
    fn("dump_accumulator", cfg.dump_accumulator);
}

inline void assign_config_value(const std::string& key, const std::string& value, int& out) {
    try {
        out = std::stoi(value);
    } catch (const std::exception&) {
        throw config_error("bad integer for '" + key + "': " + value);
    }
}
inline void assign_config_value(const std::string& key, const std::string& value, double& out) {
    try {
        out = std::stod(value);
    } catch (const std::exception&) {
        throw config_error("bad number for '" + key + "': " + value);
    }
}
inline void assign_config_value(const std::string& key, const std::string& value,
                                uint64_t& out) {
    try {
        out = std::stoull(value);
    } catch (const std::exception&) {
        throw config_error("bad integer for '" + key + "': " + value);
    }
}
inline void assign_config_value(const std::string& key, const std::string& value, bool& out) {
    if (value == "true" || value == "1")
        out = true;
    else if (value == "false" || value == "0")
        out = false;
    else
        throw config_error("bad boolean for '" + key + "': " + value);
}
inline void assign_config_value(const std::string&, const std::string& value,
                                std::string& out) {
    out = value;
}

inline std::string config_value_to_string(int v) { return std::to_string(v); }
inline std::string config_value_to_string(uint64_t v) { return std::to_string(v); }
inline std::string config_value_to_string(double v) { return format_double(v); }
inline std::string config_value_to_string(bool v) { return v ? "true" : "false"; }
inline std::string config_value_to_string(const std::string& v) { return v; }

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace detail

/// Serializes the config as flat key=value lines; parse_config reads the
/// same format back losslessly. Unknown keys are rejected.
inline std::string dump_config(const PipelineConfig& config) {
    std::ostringstream out;
    PipelineConfig copy = config;
    detail::for_each_config_key(copy, [&](const char* key, auto& value) {
        out << key << "=" << detail::config_value_to_string(value) << "\n";
    });
    return out.str();
}

inline PipelineConfig parse_config(const std::string& text,
                                   PipelineConfig base = PipelineConfig{}) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw config_error("expected key=value, got: " + stripped);
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        bool known = false;
        detail::for_each_config_key(base, [&](const char* k, auto& slot) {
            if (key == k) {
                detail::assign_config_value(key, value, slot);
                known = true;
            }
        });
        if (!known) throw config_error("unknown config key: " + key);
    }
    pairwise_mode_from_string(base.pairwise);  // validate
    return base;
}

inline PipelineConfig load_config_file(const std::string& path,
                                       PipelineConfig base = PipelineConfig{}) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config '" + path + "'");
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), std::move(base));
}

/// Radius search range in pixels: the explicit px range when set,
/// otherwise round(radius_mm / a) from the scale label.
inline std::pair<int, int> resolve_radius_px_range(const PipelineConfig& cfg) {
    if (cfg.radius_px_min > 0 && cfg.radius_px_max > 0) {
        if (cfg.radius_px_max < cfg.radius_px_min)
            throw config_error("radius_px_max < radius_px_min");
        return {cfg.radius_px_min, cfg.radius_px_max};
    }
    if (cfg.scale_label_px <= 0.0)
        throw config_error(
            "no scale: set scale_label_px (label width in px) or an explicit "
            "radius_px_min/radius_px_max range");
    const double a = cfg.label_width_mm / cfg.scale_label_px;  // mm per px
    const int lo = std::max(2, static_cast<int>(std::lround(cfg.radius_mm_min / a)));
    const int hi = std::max(lo, static_cast<int>(std::lround(cfg.radius_mm_max / a)));
    return {lo, hi};
}

struct AnalysisResult {
    std::string image_name;
    int width = 0;
    int height = 0;
    CandidateSet candidates;
    ClassifyResult classify;
    std::vector<double> diameters_mm;  // empty when no scale is configured
    SummaryStats stats;
    std::map<int, int> histogram;
    std::optional<double> manual_mean_mm;
    bool scale_available = false;
    double mm_per_px = 0.0;
    int radius_px_min = 0;
    int radius_px_max = 0;
    PipelineConfig config;  // fully resolved echo, p reflects any fallback
    RasterImage overlay_source;  // resized input, for the overlay artifact
    Accumulator accumulator;     // only kept when dump_accumulator is set
};

/// Loads reference patches (PNG/PPM/PGM files, sorted by name) and turns
/// them into descriptor bundles; used when the detector's own reference
/// set is replaced by manually selected berries.
inline std::vector<FeatureBundle> load_reference_patches(const std::string& dir,
                                                         const FeatureParams& params) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw io_error("reference patch directory not found: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".png" || ext == ".ppm" || ext == ".pgm")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<FeatureBundle> bundles;
    for (const std::string& file : files) {
        RasterImage img = gray_to_rgb(load_image(file));
        Patch patch{resize_bilinear(img, params.patch_size, params.patch_size), -1};
        bundles.push_back(compute_feature_bundle(patch, params));
    }
    return bundles;
}

/// Runs the five pipeline steps on one image: enhancement, circle
/// detection, feature extraction, CRF classification, sizing. An empty
/// detection is a valid result, not an error; missing references raise
/// classification_unavailable.
inline AnalysisResult analyze_image(const RasterImage& input, const PipelineConfig& cfg,
                                    std::optional<double> manual_mean_mm = std::nullopt,
                                    std::span<const FeatureBundle> external_refs = {},
                                    const std::string& image_name = "image") {
    AnalysisResult result;
    result.image_name = image_name;
    result.config = cfg;
    result.manual_mean_mm = manual_mean_mm;

    RasterImage img = input.channels == 1 ? gray_to_rgb(input) : input;
    if (img.channels != 3) throw format_error("analyze_image: 1- or 3-channel input required");
    if (img.empty()) throw format_error("analyze_image: zero-area image");
    if (cfg.resize_width > 0 && cfg.resize_height > 0 &&
        (img.width != cfg.resize_width || img.height != cfg.resize_height))
        img = resize_bilinear(img, cfg.resize_width, cfg.resize_height);
    result.width = img.width;
    result.height = img.height;
    result.overlay_source = img;

    const auto [radius_px_min, radius_px_max] = resolve_radius_px_range(cfg);
    result.radius_px_min = radius_px_min;
    result.radius_px_max = radius_px_max;
    if (cfg.scale_label_px > 0.0) {
        result.scale_available = true;
        result.mm_per_px = calibrate_scale(cfg.scale_label_px, cfg.label_width_mm).mm_per_px;
    }

    const RasterImage enhanced = enhance(img);
    DetectConfig detect_cfg{radius_px_min,    radius_px_max,       cfg.ref_peak_frac,
                            cfg.cand_peak_frac, cfg.refine_shift,  cfg.refine_scale,
                            cfg.smoothing_sigma, cfg.threshold_grid_size, cfg.ridge_window};
    result.candidates = detect_circles(enhanced, detect_cfg);
    if (cfg.dump_accumulator) {
        const RasterImage gray = to_gray(enhanced);
        const GradientField grad = sobel_gradients(gray);
        const RidgeMap ridge = stddev_ridge(gray, cfg.ridge_window);
        const auto threshold =
            select_gradient_threshold(grad, ridge, cfg.threshold_grid_size);
        if (threshold)
            result.accumulator =
                build_accumulator(grad, make_gradient_mask(grad, *threshold), ridge,
                                  radius_px_min, radius_px_max);
    }

    if (result.candidates.size() > 0) {
        const FeatureParams feature_params = cfg.feature_params();
        std::vector<FeatureBundle> bundles;
        bundles.reserve(result.candidates.size());
        for (const Circle& c : result.candidates.candidates)
            bundles.push_back(compute_feature_bundle(enhanced, c, feature_params));

        ClassifyConfig classify_cfg{cfg.percentile_p, cfg.percentile_p_fallback,
                                    cfg.sharpness, cfg.crf_weights(),
                                    pairwise_mode_from_string(cfg.pairwise),
                                    cfg.graph_prune_factor};
        result.classify = classify_candidates(result.candidates, bundles, external_refs,
                                              classify_cfg);
        result.config.percentile_p = result.classify.p_used;
    } else {
        result.classify.p_used = cfg.percentile_p;
    }

    if (result.scale_available) {
        const ScaleCalibration cal =
            calibrate_scale(cfg.scale_label_px, cfg.label_width_mm);
        std::vector<Circle> berries;
        for (int idx : result.classify.berry_indices)
            berries.push_back(result.candidates.candidates[idx]);
        result.diameters_mm = measure_berries(berries, cal);
        result.histogram = build_histogram(result.diameters_mm);
    }
    result.stats = summarize(result.diameters_mm, manual_mean_mm);
    return result;
}

inline AnalysisResult analyze_file(const std::string& path, const PipelineConfig& cfg,
                                   std::optional<double> manual_mean_mm = std::nullopt,
                                   std::span<const FeatureBundle> external_refs = {}) {
    return analyze_image(load_image(path), cfg, manual_mean_mm, external_refs,
                         std::filesystem::path(path).filename().string());
}

// ---------------------------------------------------------------------------
// Artifact writers.

namespace detail {

inline void draw_circle_stroke(RasterImage& img, const Circle& c, const float color[3]) {
    for (int radius : {c.radius, c.radius - 1}) {
        if (radius < 1) continue;
        for (auto [r, cc] : circle_points(c.center_row, c.center_col, radius)) {
            if (r < 0 || r >= img.height || cc < 0 || cc >= img.width) continue;
            for (int ch = 0; ch < 3; ++ch) img.at(r, cc, ch) = color[ch];
        }
    }
}

}  // namespace detail

/// Resized input with candidate strokes: red for berry, blue for non-berry.
inline RasterImage render_overlay(const AnalysisResult& result) {
    RasterImage overlay = result.overlay_source;
    const float berry_color[3] = {0.92f, 0.10f, 0.10f};
    const float nonberry_color[3] = {0.15f, 0.25f, 0.95f};
    for (size_t i = 0; i < result.candidates.size(); ++i) {
        const bool is_berry =
            i < result.classify.labels.size() && result.classify.labels[i] == kBerry;
        detail::draw_circle_stroke(overlay, result.candidates.candidates[i],
                                   is_berry ? berry_color : nonberry_color);
    }
    return overlay;
}

inline std::string diameters_csv(const AnalysisResult& result) {
    std::ostringstream out;
    out << "candidate_id,center_row,center_col,radius_px,diameter_mm,label\n";
    for (size_t i = 0; i < result.candidates.size(); ++i) {
        const Circle& c = result.candidates.candidates[i];
        const bool is_berry =
            i < result.classify.labels.size() && result.classify.labels[i] == kBerry;
        out << i << "," << c.center_row << "," << c.center_col << "," << c.radius << ",";
        if (result.scale_available) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.4f", result.mm_per_px * 2.0 * c.radius);
            out << buf;
        }
        out << "," << (is_berry ? "berry" : "non-berry") << "\n";
    }
    return out.str();
}

inline std::string histogram_csv(const AnalysisResult& result) {
    std::ostringstream out;
    out << "bin_center_mm,count\n";
    for (const auto& [bin, count] : result.histogram) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", histogram_bin_center(bin));
        out << buf << "," << count << "\n";
    }
    return out.str();
}

inline nlohmann::ordered_json config_to_json(const PipelineConfig& config) {
    nlohmann::ordered_json j;
    PipelineConfig copy = config;
    detail::for_each_config_key(copy, [&](const char* key, auto& value) { j[key] = value; });
    j["w_spatial"] = config.crf_weights().spatial();
    return j;
}

inline nlohmann::ordered_json report_json(const AnalysisResult& result) {
    nlohmann::ordered_json j;
    j["image"] = result.image_name;
    j["width"] = result.width;
    j["height"] = result.height;
    j["radius_px_min"] = result.radius_px_min;
    j["radius_px_max"] = result.radius_px_max;
    j["n_candidates"] = result.candidates.size();
    j["n_reference"] = result.candidates.reference_indices().size();
    j["n_berries"] = result.classify.berry_indices.size();
    j["p_used"] = result.classify.p_used;
    j["fallback_engaged"] = result.classify.fallback_engaged;
    if (!result.classify.labels.empty()) {
        j["thresholds"] = {{"rgb", result.classify.thresholds[0]},
                           {"hog", result.classify.thresholds[1]},
                           {"gist", result.classify.thresholds[2]},
                           {"dist", result.classify.t_dist}};
    }
    if (result.scale_available) {
        j["scale"] = {{"label_width_px", result.config.scale_label_px},
                      {"label_width_mm", result.config.label_width_mm},
                      {"mm_per_px", result.mm_per_px}};
        j["sizing"] = {{"count", result.stats.count},
                       {"mean_mm", result.stats.mean},
                       {"std_mm", result.stats.std_dev},
                       {"std_degenerate", result.stats.std_degenerate},
                       {"available", result.stats.count > 0}};
        if (result.stats.md) (*(j.find("sizing")))["md_mm"] = *result.stats.md;
        if (result.stats.mad) (*(j.find("sizing")))["mad_mm"] = *result.stats.mad;
        nlohmann::ordered_json hist = nlohmann::ordered_json::array();
        for (const auto& [bin, count] : result.histogram)
            hist.push_back({{"bin_center_mm", histogram_bin_center(bin)}, {"count", count}});
        j["histogram"] = hist;
    }
    j["config"] = config_to_json(result.config);
    return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write '" + path.string() + "'");
    out << content;
}

/// Writes report.json, diameters.csv, histogram.csv and overlay.png (plus
/// accumulator.pgm when enabled) into out_dir.
inline void write_artifacts(const AnalysisResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_text_file(dir / "report.json", report_json(result).dump(2) + "\n");
    write_text_file(dir / "diameters.csv", diameters_csv(result));
    write_text_file(dir / "histogram.csv", histogram_csv(result));
    save_png(render_overlay(result), (dir / "overlay.png").string());
    if (result.config.dump_accumulator && result.accumulator.votes.size() > 0) {
        double max_vote = 0.0;
        for (double v : result.accumulator.votes.values) max_vote = std::max(max_vote, v);
        RasterImage heat(result.accumulator.votes.width, result.accumulator.votes.height, 1);
        if (max_vote > 0.0)
            for (size_t i = 0; i < heat.pixels.size(); ++i)
                heat.pixels[i] =
                    static_cast<float>(result.accumulator.votes.values[i] / max_vote);
        save_pnm(heat, (dir / "accumulator.pgm").string());
    }
}

// ---------------------------------------------------------------------------
// Batch processing.

/// Manual reference means: image name -> mean diameter in mm. A CSV with a
/// single data row and no image column applies to any image.
struct ManualMeasurements {
    std::map<std::string, double> by_image;
    std::optional<double> single;

    std::optional<double> lookup(const std::string& image_name) const {
        auto it = by_image.find(image_name);
        if (it != by_image.end()) return it->second;
        return single;
    }
};

inline ManualMeasurements load_manual_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manual CSV '" + path + "'");
    ManualMeasurements manual;
    std::string line;
    if (!std::getline(in, line)) throw format_error("empty manual CSV: " + path);
    auto split = [](const std::string& s) {
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ss(s);
        while (std::getline(ss, field, ',')) fields.push_back(detail::trim(field));
        return fields;
    };
    const auto header = split(line);
    int mean_col = -1, image_col = -1;
    for (size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "mean_diameter_mm") mean_col = static_cast<int>(i);
        if (header[i] == "image") image_col = static_cast<int>(i);
    }
    if (mean_col < 0)
        throw format_error("manual CSV needs a mean_diameter_mm column: " + path);
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto fields = split(line);
        if (static_cast<int>(fields.size()) <= mean_col)
            throw format_error("short row in manual CSV: " + line);
        const double value = std::stod(fields[mean_col]);
        if (image_col >= 0 && static_cast<int>(fields.size()) > image_col &&
            !fields[image_col].empty())
            manual.by_image[fields[image_col]] = value;
        else
            manual.single = value;
    }
    return manual;
}

struct BatchItem {
    std::string path;
    std::string out_dir;
    bool ok = false;
    std::string error_type;
    std::string error_message;
    AnalysisResult result;  // valid when ok
};

struct BatchResult {
    std::vector<BatchItem> items;
    std::optional<double> rho_res;
};

/// Analyzes a list of images concurrently (bounded by worker_count) and
/// writes per-image artifact directories plus batch.json. Per-image
/// failures are recorded and do not abort the batch.
inline BatchResult run_batch(const std::vector<std::string>& paths,
                             const PipelineConfig& cfg, const std::string& out_root,
                             int worker_count, const ManualMeasurements& manual = {},
                             std::span<const FeatureBundle> external_refs = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(out_root);
    BatchResult batch;
    batch.items.resize(paths.size());
    std::atomic<size_t> next{0};
    const int workers =
        std::max(1, std::min<int>(worker_count, static_cast<int>(paths.size())));

    auto work = [&]() {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= paths.size()) break;
            BatchItem& item = batch.items[i];
            item.path = paths[i];
            const std::string stem = fs::path(paths[i]).stem().string();
            item.out_dir = (fs::path(out_root) / stem).string();
            try {
                const std::string name = fs::path(paths[i]).filename().string();
                item.result = analyze_file(paths[i], cfg, manual.lookup(name), external_refs);
                write_artifacts(item.result, item.out_dir);
                item.ok = true;
            } catch (const classification_unavailable& e) {
                item.error_type = "classification_unavailable";
                item.error_message = e.what();
            } catch (const std::exception& e) {
                item.error_type = "bad_input";
                item.error_message = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();

    std::vector<std::pair<double, double>> pairs;
    for (const BatchItem& item : batch.items)
        if (item.ok && item.result.stats.count > 0 && item.result.manual_mean_mm)
            pairs.emplace_back(item.result.stats.mean, *item.result.manual_mean_mm);
    if (pairs.size() >= 2) batch.rho_res = batch_correlation(pairs);

    nlohmann::ordered_json j;
    j["images"] = nlohmann::ordered_json::array();
    for (const BatchItem& item : batch.items) {
        nlohmann::ordered_json entry;
        entry["path"] = item.path;
        entry["out_dir"] = item.out_dir;
        entry["status"] = item.ok ? "ok" : item.error_type;
        if (item.ok) {
            entry["n_candidates"] = item.result.candidates.size();
            entry["n_berries"] = item.result.classify.berry_indices.size();
            if (item.result.stats.count > 0) {
                entry["mean_mm"] = item.result.stats.mean;
                entry["std_mm"] = item.result.stats.std_dev;
            }
            if (item.result.manual_mean_mm) {
                entry["manual_mean_mm"] = *item.result.manual_mean_mm;
                if (item.result.stats.md) entry["md_mm"] = *item.result.stats.md;
                if (item.result.stats.mad) entry["mad_mm"] = *item.result.stats.mad;
            }
        } else {
            entry["error"] = item.error_message;
        }
        j["images"].push_back(entry);
    }
    if (batch.rho_res) j["rho_res"] = *batch.rho_res;
    j["config"] = config_to_json(cfg);
    write_text_file(fs::path(out_root) / "batch.json", j.dump(2) + "\n");
    return batch;
}

// ---------------------------------------------------------------------------
// Ground truth serialization (synth / eval interface).

inline nlohmann::ordered_json truth_to_json(const GroundTruth& truth) {
    nlohmann::ordered_json j;
    j["circles"] = nlohmann::ordered_json::array();
    for (const TrueCircle& c : truth.circles)
        j["circles"].push_back({{"row", c.row},
                                {"col", c.col},
                                {"radius", c.radius},
                                {"cluster", c.cluster},
                                {"occluding", c.occluding}});
    return j;
}

inline GroundTruth truth_from_json(const nlohmann::json& j) {
    GroundTruth truth;
    for (const auto& c : j.at("circles"))
        truth.circles.push_back({c.at("row").get<double>(), c.at("col").get<double>(),
                                 c.at("radius").get<double>(),
                                 c.value("cluster", 0), c.value("occluding", false)});
    return truth;
}

inline GroundTruth load_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open truth file '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
        return truth_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw format_error("bad truth JSON '" + path + "': " + e.what());
    }
}

/// Reads circles (and berry labels) back from a diameters.csv artifact.
inline std::pair<std::vector<Circle>, std::vector<uint8_t>> load_detections_csv(
    const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open detections CSV '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw format_error("empty detections CSV: " + path);
    std::vector<Circle> circles;
    std::vector<uint8_t> labels;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ss(line);
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() < 6) throw format_error("short row in detections CSV: " + line);
        circles.push_back(Circle{std::stoi(fields[1]), std::stoi(fields[2]),
                                 std::stoi(fields[3])});
        labels.push_back(detail::trim(fields[5]) == "berry" ? kBerry : kNonBerry);
    }
    return {circles, labels};
}

}  // namespace vinesize
