#include "bdgd.h"

#include <cstring>
#include <iostream>
#include <stdexcept>
#include <string>

#include "bdgd/metrics.hpp"
#include "bdgd/pipeline.hpp"

namespace {

thread_local std::string g_last_error;

template <typename F>
int guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return BDGD_OK;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return BDGD_ERR_INVALID_ARGUMENT;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return BDGD_ERR_RUNTIME;
    } catch (...) {
        g_last_error = "unknown error";
        return BDGD_ERR_RUNTIME;
    }
}

void require(bool ok, const char* message) {
    if (!ok) throw std::invalid_argument(message);
}

}  // namespace

struct bdgd_config {
    bdgd::pipe::ExperimentConfig cfg;
};

extern "C" {

const char* bdgd_last_error(void) { return g_last_error.c_str(); }

bdgd_config* bdgd_config_create(void) {
    try {
        return new bdgd_config{};
    } catch (...) {
        g_last_error = "allocation failure";
        return nullptr;
    }
}

void bdgd_config_destroy(bdgd_config* cfg) { delete cfg; }

int bdgd_config_set(bdgd_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        require(cfg && key && value, "null argument");
        bdgd::pipe::apply_setting(cfg->cfg, key, value);
    });
}

int bdgd_config_load(bdgd_config* cfg, const char* path) {
    return guarded([&] {
        require(cfg && path, "null argument");
        cfg->cfg = bdgd::pipe::load_config(path);
    });
}

int bdgd_config_save(const bdgd_config* cfg, const char* path) {
    return guarded([&] {
        require(cfg && path, "null argument");
        bdgd::pipe::save_config(cfg->cfg, path);
    });
}

int bdgd_generate_data(const bdgd_config* cfg) {
    return guarded([&] {
        require(cfg != nullptr, "null argument");
        bdgd::pipe::run_generate(cfg->cfg, &std::cout);
    });
}

int bdgd_train(const bdgd_config* cfg) {
    return guarded([&] {
        require(cfg != nullptr, "null argument");
        bdgd::pipe::run_train(cfg->cfg, &std::cout);
    });
}

int bdgd_reconstruct(const bdgd_config* cfg) {
    return guarded([&] {
        require(cfg != nullptr, "null argument");
        bdgd::pipe::run_reconstruct(cfg->cfg, &std::cout);
    });
}

int bdgd_evaluate(const bdgd_config* cfg, char* table, size_t table_size) {
    return guarded([&] {
        require(cfg != nullptr, "null argument");
        bdgd::pipe::EvalResult res =
            bdgd::pipe::run_evaluate(cfg->cfg, &std::cout);
        if (table && table_size > 0) {
            std::size_t n = std::min(table_size - 1, res.text_table.size());
            std::memcpy(table, res.text_table.data(), n);
            table[n] = '\0';
        }
    });
}

int bdgd_decompose(const bdgd_config* cfg, int sample_index) {
    return guarded([&] {
        require(cfg != nullptr, "null argument");
        bdgd::pipe::run_decompose(cfg->cfg, sample_index, &std::cout);
    });
}

int bdgd_psnr(const double* x, const double* ref, int n_pixels, double peak,
              double* out_db) {
    return guarded([&] {
        require(x && ref && out_db, "null argument");
        require(n_pixels > 0, "n_pixels must be positive");
        *out_db = bdgd::psnr(x, ref, static_cast<std::size_t>(n_pixels), peak);
    });
}

}  // extern "C"
