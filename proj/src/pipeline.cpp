#include "bdgd/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bdgd/baselines.hpp"
#include "bdgd/cascade.hpp"
#include "bdgd/inference.hpp"
#include "bdgd/metrics.hpp"
#include "bdgd/png_io.hpp"
#include "bdgd/training.hpp"

namespace fs = std::filesystem;

namespace bdgd::pipe {

namespace {

// Seed streams used by the pipeline (phantoms use 0-1, training 20-22,
// predictive sampling 30): 40 = dataset seeds, 41 = cascade init,
// 42 = optimizer/shuffle, 43 = per-sample predictive runs.
constexpr std::uint64_t kStreamData = 40;
constexpr std::uint64_t kStreamInit = 41;
constexpr std::uint64_t kStreamTrain = 42;
constexpr std::uint64_t kStreamPredict = 43;

const std::vector<std::string> kAllMethods = {"fbp", "tv", "dgd", "bdgd",
                                              "bdgd+"};

void require_file(const std::string& path, const std::string& what,
                  const std::string& stage) {
    if (!fs::exists(path))
        throw std::runtime_error("missing " + what + " '" + path + "'; run " +
                                 stage + " first");
}

bool is_learned(const std::string& method) {
    return method == "dgd" || method == "bdgd" || method == "bdgd+";
}

int mode_ordinal(const std::string& method) {
    return static_cast<int>(net::mode_from_name(method));
}

std::string sample_name(int index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "sample_%06d", index);
    return buf;
}

std::string shepp_record_path(const ExperimentConfig& cfg) {
    return cfg.out_dir + "/data/shepp.bin";
}

SampleRecord load_record(const std::string& path) {
    Container c = Container::load(path);
    Geometry g = read_geometry(c);
    SampleRecord r;
    int n = g.image_size;
    r.ground_truth = Image(n, c.get("image").values);
    r.clean = Sinogram(g);
    r.clean.v = c.get("sinogram_clean").values;
    r.noisy = Sinogram(g);
    r.noisy.v = c.get("sinogram_noisy").values;
    r.x0 = Image(n, c.get("x0").values);
    return r;
}

void save_record(const std::string& path, const SampleRecord& r,
                 const Geometry& g) {
    Container c;
    auto n = static_cast<std::uint64_t>(g.image_size);
    auto na = static_cast<std::uint64_t>(g.num_angles);
    auto nd = static_cast<std::uint64_t>(g.num_detectors);
    c.set("image", {n, n}, r.ground_truth.v);
    c.set("sinogram_clean", {na, nd}, r.clean.v);
    c.set("sinogram_noisy", {na, nd}, r.noisy.v);
    c.set("x0", {n, n}, r.x0.v);
    write_geometry(c, g);
    c.save(path);
}

void save_recon(const std::string& stem, const Image& img) {
    save_image(stem + ".bin", img);
    png::write_normalized(stem + ".png", img.v, img.n, img.n, 0.0, 1.0);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

Geometry ExperimentConfig::geometry() const {
    return Geometry::make(image_size, num_dirs, angle_start, angle_end);
}

int ExperimentConfig::resolved_blocks() const {
    if (num_blocks > 0) return num_blocks;
    return limited_angle() ? 8 : 5;
}

ExperimentConfig full_scale_preset(int num_dirs, double angle_start,
                                   double angle_end) {
    ExperimentConfig cfg;
    cfg.image_size = 128;
    cfg.num_dirs = num_dirs;
    cfg.angle_start = angle_start;
    cfg.angle_end = angle_end;
    cfg.train_count = 4000;
    cfg.test_count = 100;
    cfg.epochs = 150;
    if (cfg.limited_angle())
        cfg.num_blocks = (angle_end - angle_start <= 120.0) ? 30 : 20;
    else
        cfg.num_blocks = (num_dirs <= 16) ? 20 : 10;
    return cfg;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key,
                   const std::string& value) {
    try {
        if (key == "image_size") cfg.image_size = std::stoi(value);
        else if (key == "num_dirs") cfg.num_dirs = std::stoi(value);
        else if (key == "angle_start") cfg.angle_start = std::stod(value);
        else if (key == "angle_end") cfg.angle_end = std::stod(value);
        else if (key == "train_count") cfg.train_count = std::stoi(value);
        else if (key == "test_count") cfg.test_count = std::stoi(value);
        else if (key == "noise_level") cfg.noise_level = std::stod(value);
        else if (key == "method") cfg.method = value;
        else if (key == "num_blocks") cfg.num_blocks = std::stoi(value);
        else if (key == "epochs") cfg.epochs = std::stoi(value);
        else if (key == "batch_size") cfg.batch_size = std::stoi(value);
        else if (key == "lr") cfg.lr = std::stod(value);
        else if (key == "mc_samples") cfg.mc_samples = std::stoi(value);
        else if (key == "tv_lambda") cfg.tv_lambda = std::stod(value);
        else if (key == "seed") cfg.seed = std::stoull(value);
        else if (key == "out_dir") cfg.out_dir = value;
        else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const std::invalid_argument&) {
        throw;
    } catch (const std::exception&) {
        throw std::invalid_argument("bad value '" + value + "' for config key '" +
                                    key + "'");
    }
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t'))
            key.pop_back();
        auto vstart = value.find_first_not_of(" \t");
        value = vstart == std::string::npos ? "" : value.substr(vstart);
        apply_setting(cfg, key, value);
    }
    return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    out << "image_size=" << cfg.image_size << "\n"
        << "num_dirs=" << cfg.num_dirs << "\n"
        << "angle_start=" << num(cfg.angle_start) << "\n"
        << "angle_end=" << num(cfg.angle_end) << "\n"
        << "train_count=" << cfg.train_count << "\n"
        << "test_count=" << cfg.test_count << "\n"
        << "noise_level=" << num(cfg.noise_level) << "\n"
        << "method=" << cfg.method << "\n"
        << "num_blocks=" << cfg.resolved_blocks() << "\n"
        << "epochs=" << cfg.epochs << "\n"
        << "batch_size=" << cfg.batch_size << "\n"
        << "lr=" << num(cfg.lr) << "\n"
        << "mc_samples=" << cfg.mc_samples << "\n"
        << "tv_lambda=" << num(cfg.tv_lambda) << "\n"
        << "seed=" << cfg.seed << "\n"
        << "out_dir=" << cfg.out_dir << "\n";
    if (!out) throw std::runtime_error("failed writing config file '" + path + "'");
}

std::string method_tag(const std::string& method) {
    return method == "bdgd+" ? "bdgd_plus" : method;
}

std::string train_manifest_path(const ExperimentConfig& cfg) {
    return cfg.out_dir + "/data/train/manifest.txt";
}

std::string test_manifest_path(const ExperimentConfig& cfg) {
    return cfg.out_dir + "/data/test/manifest.txt";
}

std::string checkpoint_path(const ExperimentConfig& cfg) {
    return cfg.out_dir + "/" + method_tag(cfg.method) + "_checkpoint.bin";
}

std::string recon_dir(const ExperimentConfig& cfg) {
    return cfg.out_dir + "/recon_" + method_tag(cfg.method);
}

void run_generate(const ExperimentConfig& cfg, std::ostream* log) {
    Geometry geom = cfg.geometry();
    fs::create_directories(cfg.out_dir + "/data");
    save_config(cfg, cfg.out_dir + "/config.txt");

    generate_dataset(cfg.out_dir + "/data/train",
                     derive_seed(cfg.seed, 0, kStreamData), cfg.train_count,
                     cfg.image_size, geom, cfg.noise_level);
    generate_dataset(cfg.out_dir + "/data/test",
                     derive_seed(cfg.seed, 1, kStreamData), cfg.test_count,
                     cfg.image_size, geom, cfg.noise_level);

    // Held-out head phantom scored alongside the ellipse test set.
    SampleRecord shepp;
    shepp.ground_truth = shepp_logan(cfg.image_size);
    shepp.clean = radon_forward(shepp.ground_truth, geom);
    shepp.noisy = add_noise(shepp.clean, cfg.noise_level,
                            derive_seed(cfg.seed, 2, kStreamData));
    shepp.x0 = fbp(shepp.noisy, geom);
    save_record(shepp_record_path(cfg), shepp, geom);

    if (log)
        *log << "generated " << cfg.train_count << " train + " << cfg.test_count
             << " test samples at " << cfg.image_size << "x" << cfg.image_size
             << " under " << cfg.out_dir << "/data\n";
}

void run_train(const ExperimentConfig& cfg, std::ostream* log) {
    if (!is_learned(cfg.method))
        throw std::runtime_error("method '" + cfg.method +
                                 "' has no training stage");
    require_file(train_manifest_path(cfg), "dataset manifest",
                 "generate-data");
    DatasetManifest manifest = load_manifest(train_manifest_path(cfg));
    train::TrainingSet ts = train::load_training_set(manifest);

    net::Mode mode = net::mode_from_name(cfg.method);
    int ordinal = mode_ordinal(cfg.method);
    std::string ckpt = checkpoint_path(cfg);
    net::Cascade cascade =
        fs::exists(ckpt)
            ? net::Cascade::load(ckpt)
            : net::Cascade(mode, net::BlockArch::standard(),
                           cfg.resolved_blocks(),
                           derive_seed(cfg.seed, std::uint64_t(ordinal),
                                       kStreamInit));
    if (cascade.mode() != mode)
        throw std::runtime_error("checkpoint '" + ckpt +
                                 "' holds a different method");

    train::TrainConfig tcfg;
    tcfg.epochs = cfg.epochs;
    tcfg.batch_size = cfg.batch_size;
    tcfg.adam.lr = cfg.lr;
    tcfg.seed = derive_seed(cfg.seed, std::uint64_t(ordinal), kStreamTrain);

    std::string log_path =
        cfg.out_dir + "/" + method_tag(cfg.method) + "_train.log";
    std::ofstream train_log(log_path, std::ios::app);
    save_config(cfg, cfg.out_dir + "/config.txt");

    int start_block = cascade.trained_blocks;
    train::CascadeTrainResult res =
        train::train_cascade(cascade, ts, tcfg, ckpt, &train_log);
    if (res.diverged)
        throw std::runtime_error("training diverged (non-finite loss); see '" +
                                 log_path + "'");
    if (log)
        *log << "trained blocks " << start_block << ".."
             << cascade.trained_blocks << " of " << cascade.num_blocks()
             << " -> " << ckpt << "\n";
}

void run_reconstruct(const ExperimentConfig& cfg, std::ostream* log) {
    require_file(test_manifest_path(cfg), "dataset manifest", "generate-data");
    DatasetManifest manifest = load_manifest(test_manifest_path(cfg));
    require_file(shepp_record_path(cfg), "head-phantom record",
                 "generate-data");
    SampleRecord shepp = load_record(shepp_record_path(cfg));
    Geometry geom = manifest.geom;
    std::string dir = recon_dir(cfg);
    fs::create_directories(dir);
    save_config(cfg, cfg.out_dir + "/config.txt");

    auto reconstruct_all = [&](auto&& one) {
        for (int i = 0; i < manifest.count; ++i) {
            SampleRecord r = load_sample(manifest, i);
            save_recon(dir + "/" + sample_name(i), one(r, std::uint64_t(i)));
        }
        save_recon(dir + "/shepp", one(shepp, std::uint64_t(manifest.count)));
    };

    if (cfg.method == "fbp") {
        reconstruct_all([](const SampleRecord& r, std::uint64_t) {
            return r.x0;
        });
    } else if (cfg.method == "tv") {
        baseline::TVConfig tv;
        tv.lambda = cfg.tv_lambda;
        if (tv.lambda <= 0.0) {
            int val = std::min(5, manifest.count);
            std::vector<Sinogram> ys;
            std::vector<Image> truths;
            for (int i = 0; i < val; ++i) {
                SampleRecord r = load_sample(manifest, i);
                ys.push_back(r.noisy);
                truths.push_back(r.ground_truth);
            }
            baseline::LambdaSearch s = baseline::grid_search_lambda(
                ys, truths, geom, {0.003, 0.01, 0.03, 0.1, 0.3}, tv);
            tv.lambda = s.best_lambda;
            std::ofstream(cfg.out_dir + "/tv_lambda.txt")
                << fmt(tv.lambda) << "\n";
            if (log)
                *log << "tv grid search picked lambda=" << fmt(tv.lambda)
                     << " (validation psnr " << fmt(s.best_psnr) << ")\n";
        }
        reconstruct_all([&](const SampleRecord& r, std::uint64_t) {
            return baseline::tv_reconstruct(r.noisy, geom, tv);
        });
    } else if (is_learned(cfg.method)) {
        require_file(checkpoint_path(cfg), "checkpoint", "train");
        net::Cascade cascade = net::Cascade::load(checkpoint_path(cfg));
        if (net::mode_name(cascade.mode()) != cfg.method)
            throw std::runtime_error("checkpoint '" + checkpoint_path(cfg) +
                                     "' holds a different method");
        reconstruct_all([&](const SampleRecord& r, std::uint64_t i) {
            return infer::mc_predict(cascade, r.x0, r.noisy, geom,
                                     cfg.mc_samples,
                                     derive_seed(cfg.seed, i, kStreamPredict))
                .mean;
        });
    } else {
        throw std::runtime_error("unknown method '" + cfg.method + "'");
    }
    if (log)
        *log << "reconstructed " << manifest.count << " test samples + head "
             << "phantom with " << cfg.method << " -> " << dir << "\n";
}

EvalResult run_evaluate(const ExperimentConfig& cfg, std::ostream* log) {
    require_file(test_manifest_path(cfg), "dataset manifest", "generate-data");
    DatasetManifest manifest = load_manifest(test_manifest_path(cfg));
    require_file(shepp_record_path(cfg), "head-phantom record",
                 "generate-data");
    Image shepp_gt = load_record(shepp_record_path(cfg)).ground_truth;

    EvalResult res;
    for (const std::string& method : kAllMethods) {
        ExperimentConfig mcfg = cfg;
        mcfg.method = method;
        std::string dir = recon_dir(mcfg);
        if (!fs::exists(dir + "/shepp.bin")) continue;
        MethodRow row;
        row.method = method;
        double sum = 0.0;
        for (int i = 0; i < manifest.count; ++i) {
            std::string path = dir + "/" + sample_name(i) + ".bin";
            require_file(path, "reconstruction", "reconstruct");
            sum += psnr(load_image(path),
                        load_sample(manifest, i).ground_truth);
        }
        row.mean_test_psnr = sum / manifest.count;
        row.shepp_psnr = psnr(load_image(dir + "/shepp.bin"), shepp_gt);
        res.rows.push_back(row);
    }
    if (res.rows.empty())
        throw std::runtime_error("no reconstructions found under '" +
                                 cfg.out_dir + "'; run reconstruct first");

    // Both tables are assembled from the same formatted strings.
    std::ostringstream text, csv;
    csv << "method,test_psnr,shepp_psnr\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%-8s %12s %12s\n", "method",
                  "test_psnr", "shepp_psnr");
    text << line;
    for (const MethodRow& row : res.rows) {
        std::string a = fmt(row.mean_test_psnr), b = fmt(row.shepp_psnr);
        std::snprintf(line, sizeof(line), "%-8s %12s %12s\n",
                      row.method.c_str(), a.c_str(), b.c_str());
        text << line;
        csv << row.method << "," << a << "," << b << "\n";
    }
    res.text_table = text.str();
    res.csv = csv.str();

    std::ofstream(cfg.out_dir + "/results.txt") << res.text_table;
    std::ofstream(cfg.out_dir + "/results.csv") << res.csv;
    if (log) *log << res.text_table;
    return res;
}

void run_decompose(const ExperimentConfig& cfg, int sample_index,
                   std::ostream* log) {
    if (!is_learned(cfg.method))
        throw std::runtime_error("method '" + cfg.method +
                                 "' has no posterior to decompose");
    require_file(checkpoint_path(cfg), "checkpoint", "train");
    net::Cascade cascade = net::Cascade::load(checkpoint_path(cfg));
    if (net::mode_name(cascade.mode()) != cfg.method)
        throw std::runtime_error("checkpoint '" + checkpoint_path(cfg) +
                                 "' holds a different method");

    Geometry geom = cfg.geometry();
    SampleRecord r;
    std::string name;
    if (sample_index >= 0) {
        require_file(test_manifest_path(cfg), "dataset manifest",
                     "generate-data");
        DatasetManifest manifest = load_manifest(test_manifest_path(cfg));
        if (sample_index >= manifest.count)
            throw std::runtime_error("sample index out of range (test set has " +
                                     std::to_string(manifest.count) +
                                     " samples)");
        r = load_sample(manifest, sample_index);
        geom = manifest.geom;
        name = sample_name(sample_index);
    } else {
        // Out-of-distribution probe: head phantom with a text overlay.
        r.ground_truth = shepp_logan(cfg.image_size);
        add_text_overlay(r.ground_truth);
        r.clean = radon_forward(r.ground_truth, geom);
        r.noisy = add_noise(r.clean, cfg.noise_level,
                            derive_seed(cfg.seed, 3, kStreamData));
        r.x0 = fbp(r.noisy, geom);
        name = "ood_text";
    }

    std::string dir = cfg.out_dir + "/decompose_" + method_tag(cfg.method);
    fs::create_directories(dir);
    std::uint64_t pseed = derive_seed(
        cfg.seed, sample_index >= 0 ? std::uint64_t(sample_index) : 999999u,
        kStreamPredict + 1);
    infer::PredictiveResult pr = infer::mc_predict(cascade, r.x0, r.noisy, geom,
                                                   cfg.mc_samples, pseed);
    std::string prefix = dir + "/" + name;
    infer::save_uncertainty_maps(pr, prefix);
    png::write_normalized(prefix + "_input.png", r.ground_truth.v,
                          r.ground_truth.n, r.ground_truth.n, 0.0, 1.0);
    if (log)
        *log << "decomposed " << name << " with " << cfg.method << " (T="
             << pr.samples << ") -> " << prefix << "_*\n";
}

}  // namespace bdgd::pipe
