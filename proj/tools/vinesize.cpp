#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vinesize/pipeline.hpp"

namespace {

using vinesize::PipelineConfig;

struct CommonOpts {
    std::string config_file;
    double scale_px = 0.0;
    std::string radius_px;  // "min,max"
    std::string pairwise;
    uint64_t seed = 0;
    bool seed_set = false;

    void add_to(CLI::App& cmd) {
        cmd.add_option("--config", config_file, "config file (key=value lines)");
        cmd.add_option("--scale-px", scale_px,
                       "width of the 13 mm scale label in pixels");
        cmd.add_option("--radius-px", radius_px,
                       "explicit radius search range in px, as min,max");
        cmd.add_option("--pairwise", pairwise, "pairwise CRF term: potts|literal");
        cmd.add_option("--seed", seed, "rng seed echoed into outputs")
            ->each([this](const std::string&) { seed_set = true; });
    }

    PipelineConfig resolve() const {
        PipelineConfig cfg;
        if (!config_file.empty()) cfg = vinesize::load_config_file(config_file);
        if (scale_px > 0.0) cfg.scale_label_px = scale_px;
        if (!radius_px.empty()) {
            const auto comma = radius_px.find(',');
            if (comma == std::string::npos)
                throw vinesize::config_error("--radius-px expects min,max");
            try {
                cfg.radius_px_min = std::stoi(radius_px.substr(0, comma));
                cfg.radius_px_max = std::stoi(radius_px.substr(comma + 1));
            } catch (const std::exception&) {
                throw vinesize::config_error("--radius-px expects integers min,max");
            }
        }
        if (!pairwise.empty()) {
            vinesize::pairwise_mode_from_string(pairwise);
            cfg.pairwise = pairwise;
        }
        if (seed_set) cfg.seed = seed;
        return cfg;
    }
};

std::vector<vinesize::FeatureBundle> maybe_load_refs(const std::string& dir,
                                                     const PipelineConfig& cfg) {
    if (dir.empty()) return {};
    return vinesize::load_reference_patches(dir, cfg.feature_params());
}

void print_error_json(const std::string& type, const std::string& message) {
    nlohmann::ordered_json j;
    j["error"] = {{"type", type}, {"message", message}};
    std::cout << j.dump() << std::endl;
}

int run_analyze(const CommonOpts& common, const std::string& image,
                const std::string& out_dir, const std::string& manual_csv,
                const std::string& ref_dir) {
    const PipelineConfig cfg = common.resolve();
    vinesize::ManualMeasurements manual;
    if (!manual_csv.empty()) manual = vinesize::load_manual_csv(manual_csv);
    const auto refs = maybe_load_refs(ref_dir, cfg);
    const std::string name = std::filesystem::path(image).filename().string();
    const auto result =
        vinesize::analyze_file(image, cfg, manual.lookup(name), refs);
    vinesize::write_artifacts(result, out_dir);
    std::cout << "analyzed " << name << ": candidates=" << result.candidates.size()
              << " berries=" << result.classify.berry_indices.size();
    if (result.stats.count > 0) std::cout << " mean_mm=" << result.stats.mean;
    std::cout << " -> " << out_dir << std::endl;
    return 0;
}

int run_batch_cmd(const CommonOpts& common, const std::vector<std::string>& images,
                  const std::string& out_dir, const std::string& manual_csv,
                  const std::string& ref_dir, int workers) {
    const PipelineConfig cfg = common.resolve();
    vinesize::ManualMeasurements manual;
    if (!manual_csv.empty()) manual = vinesize::load_manual_csv(manual_csv);
    const auto refs = maybe_load_refs(ref_dir, cfg);
    const auto batch = vinesize::run_batch(images, cfg, out_dir, workers, manual, refs);
    int failed = 0;
    for (const auto& item : batch.items)
        if (!item.ok) ++failed;
    std::cout << "batch: " << batch.items.size() - failed << "/" << batch.items.size()
              << " images analyzed";
    if (batch.rho_res) std::cout << " rho_res=" << *batch.rho_res;
    std::cout << " -> " << out_dir << std::endl;
    return failed == 0 ? 0 : 2;
}

int run_synth(const vinesize::SceneSpec& spec, const std::string& out_dir) {
    const auto [image, truth] = vinesize::render_scene(spec);
    std::filesystem::create_directories(out_dir);
    const auto dir = std::filesystem::path(out_dir);
    vinesize::save_png(image, (dir / "scene.png").string());
    vinesize::write_text_file(dir / "truth.json",
                              vinesize::truth_to_json(truth).dump(2) + "\n");
    std::cout << "synth: " << truth.circles.size() << " disks -> " << out_dir
              << std::endl;
    return 0;
}

int run_eval(const std::string& truth_file, const std::string& detections_file,
             double tol, bool all_candidates) {
    const auto truth = vinesize::load_truth(truth_file);
    const auto [circles, labels] = vinesize::load_detections_csv(detections_file);
    std::vector<vinesize::Circle> selected;
    for (size_t i = 0; i < circles.size(); ++i)
        if (all_candidates || labels[i] == vinesize::kBerry) selected.push_back(circles[i]);
    const auto score = vinesize::evaluate_detection(selected, truth, tol);
    nlohmann::ordered_json j;
    j["detections"] = score.detected;
    j["truth"] = score.truth;
    j["matched"] = score.matched;
    j["precision"] = score.precision;
    j["recall"] = score.recall;
    j["diameter_mae_px"] = score.diameter_mae_px;
    j["empty_detections"] = score.empty_detections;
    j["all_candidates"] = all_candidates;
    std::cout << j.dump(2) << std::endl;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"grapevine berry detection and sizing from vineyard images"};
    app.require_subcommand(1);

    CommonOpts common;

    auto* analyze = app.add_subcommand("analyze", "analyze a single image");
    std::string image, out_dir = "out", manual_csv, ref_dir;
    analyze->add_option("image", image, "input image (PNG/PPM/PGM)")->required();
    analyze->add_option("--out", out_dir, "output directory");
    analyze->add_option("--manual", manual_csv, "manual measurements CSV");
    analyze->add_option("--ref-patches", ref_dir, "external reference patch directory");
    common.add_to(*analyze);

    auto* batch = app.add_subcommand("batch", "analyze a batch of images");
    std::vector<std::string> images;
    std::string batch_out = "out", batch_manual, batch_refs;
    int workers = 2;
    batch->add_option("images", images, "input images")->required();
    batch->add_option("--out", batch_out, "output root directory");
    batch->add_option("--manual", batch_manual, "manual measurements CSV");
    batch->add_option("--ref-patches", batch_refs, "external reference patch directory");
    batch->add_option("--workers", workers, "concurrent image workers");
    common.add_to(*batch);

    auto* synth = app.add_subcommand("synth", "render a synthetic scene with ground truth");
    vinesize::SceneSpec spec;
    std::string synth_out = "synth_out";
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--seed", spec.seed, "scene seed");
    synth->add_option("--width", spec.width, "scene width");
    synth->add_option("--height", spec.height, "scene height");
    synth->add_option("--clusters", spec.cluster_count, "berry cluster count");
    synth->add_option("--disks-min", spec.disks_per_cluster_min, "min disks per cluster");
    synth->add_option("--disks-max", spec.disks_per_cluster_max, "max disks per cluster");
    synth->add_option("--radius-min", spec.radius_min_px, "min disk radius px");
    synth->add_option("--radius-max", spec.radius_max_px, "max disk radius px");
    synth->add_option("--occlusion", spec.occlusion_fraction, "occluded disk fraction");
    synth->add_option("--clutter", spec.clutter_count, "distractor blob count");
    synth->add_option("--low-contrast", spec.low_contrast_fraction,
                      "low-contrast disk fraction");
    synth->add_option("--texture", spec.background_texture, "background noise amplitude");
    synth->add_option("--illum", spec.illumination_gradient, "illumination ramp strength");

    auto* eval = app.add_subcommand("eval", "score detections against ground truth");
    std::string truth_file, detections_file;
    double tol = 3.0;
    bool all_candidates = false;
    eval->add_option("--truth", truth_file, "truth JSON from synth")->required();
    eval->add_option("--detections", detections_file, "diameters.csv from analyze")
        ->required();
    eval->add_option("--tol", tol, "matching tolerance in px");
    eval->add_flag("--all-candidates", all_candidates,
                   "score all candidates, not only berry-labeled ones");

    auto* dump = app.add_subcommand("dump-config", "print the resolved configuration");
    common.add_to(*dump);

    try {
        app.parse(argc, argv);
        if (analyze->parsed())
            return run_analyze(common, image, out_dir, manual_csv, ref_dir);
        if (batch->parsed())
            return run_batch_cmd(common, images, batch_out, batch_manual, batch_refs,
                                 workers);
        if (synth->parsed()) return run_synth(spec, synth_out);
        if (eval->parsed())
            return run_eval(truth_file, detections_file, tol, all_candidates);
        if (dump->parsed()) {
            std::cout << vinesize::dump_config(common.resolve());
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        print_error_json("bad_arguments", e.what());
        return 2;
    } catch (const vinesize::classification_unavailable& e) {
        print_error_json("classification_unavailable", e.what());
        return 3;
    } catch (const vinesize::io_error& e) {
        print_error_json("io_error", e.what());
        return 2;
    } catch (const vinesize::format_error& e) {
        print_error_json("format_error", e.what());
        return 2;
    } catch (const vinesize::config_error& e) {
        print_error_json("config_error", e.what());
        return 2;
    } catch (const std::exception& e) {
        print_error_json("error", e.what());
        return 2;
    }
    return 0;
}
