#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "bdgd/phantoms.hpp"
#include "bdgd/tomo.hpp"

namespace bdgd::pipe {

// Resolved settings for one experiment directory. The defaults are the
// desk-scale preset (64x64 images, 500 train / 50 test samples); the
// full-scale preset from the original protocol is available via
// full_scale_preset().
struct ExperimentConfig {
    // geometry and data
    int image_size = 64;
    int num_dirs = 32;
    double angle_start = 0.0;
    double angle_end = 180.0;  // < 180 selects a limited-angle scan
    int train_count = 500;
    int test_count = 50;
    double noise_level = 0.01;

    // model and training
    std::string method = "bdgd+";  // fbp | tv | dgd | bdgd | bdgd+
    int num_blocks = 0;            // 0 -> preset default (see resolved_blocks)
    int epochs = 30;
    int batch_size = 16;
    double lr = 1e-3;

    // inference and evaluation
    int mc_samples = 100;   // posterior-predictive passes (T)
    double tv_lambda = 0.0; // 0 -> grid search during reconstruct

    // run
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    bool limited_angle() const { return angle_end - angle_start < 180.0; }
    Geometry geometry() const;

    // Cascade depth: explicit num_blocks wins, otherwise 5 for sparse-view
    // and 8 for limited-angle scans.
    int resolved_blocks() const;
};

// Full-scale protocol: 128x128, 4000 train / 100 test, 150 epochs per block,
// depth by difficulty (20 for 8/16 dirs, 10 for 32/64/128; 30 for limited
// ranges up to 120 degrees, 20 for 150 degrees).
ExperimentConfig full_scale_preset(int num_dirs, double angle_start,
                                   double angle_end);

// Line-oriented key=value config text; '#' starts a comment.
void apply_setting(ExperimentConfig& cfg, const std::string& key,
                   const std::string& value);
ExperimentConfig load_config(const std::string& path);
void save_config(const ExperimentConfig& cfg, const std::string& path);

// Canonical artifact locations inside cfg.out_dir. method_tag maps "bdgd+"
// to "bdgd_plus" for use in file names.
std::string method_tag(const std::string& method);
std::string train_manifest_path(const ExperimentConfig& cfg);
std::string test_manifest_path(const ExperimentConfig& cfg);
std::string checkpoint_path(const ExperimentConfig& cfg);
std::string recon_dir(const ExperimentConfig& cfg);

// Stages. Each writes its artifacts under cfg.out_dir and the resolved
// config next to them; missing prerequisites raise std::runtime_error
// naming the absent artifact and the stage that produces it.
void run_generate(const ExperimentConfig& cfg, std::ostream* log);
void run_train(const ExperimentConfig& cfg, std::ostream* log);
void run_reconstruct(const ExperimentConfig& cfg, std::ostream* log);

struct MethodRow {
    std::string method;
    double mean_test_psnr = 0.0;  // over stored test reconstructions
    double shepp_psnr = 0.0;      // on the held-out head phantom
};
struct EvalResult {
    std::vector<MethodRow> rows;  // one per method with stored artifacts
    std::string text_table;
    std::string csv;
};
// Scores every method whose reconstructions exist, writes results.txt and
// results.csv (same numbers in both), and returns the table.
EvalResult run_evaluate(const ExperimentConfig& cfg, std::ostream* log);

// Posterior-predictive uncertainty maps for one input: a test sample when
// sample_index >= 0, otherwise the out-of-distribution head phantom with a
// text overlay. Maps go to <out_dir>/decompose_<tag>/<name>_*.
void run_decompose(const ExperimentConfig& cfg, int sample_index,
                   std::ostream* log);

}  // namespace bdgd::pipe
