// Command-line front end for the reconstruction toolkit; drives the shared
// library through its C interface only.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bdgd.h"

namespace {

struct ConfigDeleter {
    void operator()(bdgd_config* cfg) const { bdgd_config_destroy(cfg); }
};
using ConfigPtr = std::unique_ptr<bdgd_config, ConfigDeleter>;

struct Options {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
    int sample_index = -1;  // decompose target; -1 = out-of-distribution probe
};

int fail(const std::string& what) {
    std::fprintf(stderr, "error: %s: %s\n", what.c_str(), bdgd_last_error());
    return 1;
}

// Builds the configuration: file first, then flag overrides.
ConfigPtr make_config(const Options& opt, std::string* failed) {
    ConfigPtr cfg(bdgd_config_create());
    if (!cfg) {
        *failed = "creating configuration";
        return nullptr;
    }
    if (!opt.config_path.empty() &&
        bdgd_config_load(cfg.get(), opt.config_path.c_str()) != BDGD_OK) {
        *failed = "loading " + opt.config_path;
        return nullptr;
    }
    for (const auto& [key, value] : opt.overrides)
        if (bdgd_config_set(cfg.get(), key.c_str(), value.c_str()) != BDGD_OK) {
            *failed = "setting " + key;
            return nullptr;
        }
    return cfg;
}

void add_common_flags(CLI::App* cmd, Options& opt) {
    cmd->add_option("--config", opt.config_path, "key=value config file")
        ->check(CLI::ExistingFile);
    auto override_of = [&opt](const std::string& key) {
        return [&opt, key](const std::string& value) {
            opt.overrides.emplace_back(key, value);
        };
    };
    cmd->add_option_function<std::string>("--seed", override_of("seed"),
                                          "base RNG seed");
    cmd->add_option_function<std::string>(
        "--method", override_of("method"),
        "reconstruction method: fbp | tv | dgd | bdgd | bdgd+");
    cmd->add_option_function<std::string>("--dirs", override_of("num_dirs"),
                                          "number of projection directions");
    cmd->add_option_function<std::string>(
           "--angle-range",
           [&opt](const std::string& value) {
               auto colon = value.find(':');
               if (colon == std::string::npos)
                   throw CLI::ValidationError("--angle-range",
                                              "expected A:B in degrees");
               opt.overrides.emplace_back("angle_start", value.substr(0, colon));
               opt.overrides.emplace_back("angle_end", value.substr(colon + 1));
           },
           "scan angle interval A:B in degrees (e.g. 0:90)")
        ->type_name("A:B");
    cmd->add_option_function<std::string>(
        "--T", override_of("mc_samples"),
        "posterior-predictive sample count");
    cmd->add_option_function<std::string>("--out", override_of("out_dir"),
                                          "output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unrolled Bayesian CT reconstruction pipeline"};
    app.require_subcommand(1);
    Options opt;

    CLI::App* generate =
        app.add_subcommand("generate-data", "synthesize phantom datasets");
    CLI::App* train = app.add_subcommand("train", "train the selected method");
    CLI::App* reconstruct =
        app.add_subcommand("reconstruct", "reconstruct the test set");
    CLI::App* evaluate =
        app.add_subcommand("evaluate", "score stored reconstructions");
    CLI::App* decompose =
        app.add_subcommand("decompose", "write uncertainty maps");
    for (CLI::App* cmd : {generate, train, reconstruct, evaluate, decompose})
        add_common_flags(cmd, opt);
    decompose->add_option("--sample", opt.sample_index,
                          "test sample index (omit for the "
                          "out-of-distribution probe)");

    CLI11_PARSE(app, argc, argv);

    std::string failed;
    ConfigPtr cfg = make_config(opt, &failed);
    if (!cfg) return fail(failed);

    if (generate->parsed()) {
        if (bdgd_generate_data(cfg.get()) != BDGD_OK)
            return fail("generate-data");
    } else if (train->parsed()) {
        if (bdgd_train(cfg.get()) != BDGD_OK) return fail("train");
    } else if (reconstruct->parsed()) {
        if (bdgd_reconstruct(cfg.get()) != BDGD_OK) return fail("reconstruct");
    } else if (evaluate->parsed()) {
        if (bdgd_evaluate(cfg.get(), nullptr, 0) != BDGD_OK)
            return fail("evaluate");
    } else if (decompose->parsed()) {
        if (bdgd_decompose(cfg.get(), opt.sample_index) != BDGD_OK)
            return fail("decompose");
    }
    return 0;
}
