#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "bdgd.h"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& leaf) {
    std::string dir = (fs::temp_directory_path() / "bdgd_capi" / leaf).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

struct Config {
    bdgd_config* h = bdgd_config_create();
    ~Config() { bdgd_config_destroy(h); }
    void set(const char* key, const std::string& value) {
        REQUIRE(bdgd_config_set(h, key, value.c_str()) == BDGD_OK);
    }
};

}  // namespace

TEST_CASE("status codes and last-error reporting") {
    Config cfg;
    REQUIRE(cfg.h != nullptr);

    CHECK(bdgd_config_set(cfg.h, "epochs", "3") == BDGD_OK);
    CHECK(std::strlen(bdgd_last_error()) == 0);

    CHECK(bdgd_config_set(cfg.h, "no_such_key", "1") ==
          BDGD_ERR_INVALID_ARGUMENT);
    CHECK(std::string(bdgd_last_error()).find("no_such_key") !=
          std::string::npos);
    CHECK(bdgd_config_set(nullptr, "epochs", "1") ==
          BDGD_ERR_INVALID_ARGUMENT);
    CHECK(bdgd_config_set(cfg.h, "epochs", nullptr) ==
          BDGD_ERR_INVALID_ARGUMENT);

    CHECK(bdgd_config_load(cfg.h, "/nonexistent/config.txt") ==
          BDGD_ERR_RUNTIME);
    CHECK(std::strlen(bdgd_last_error()) > 0);

    // A successful call clears the message again.
    CHECK(bdgd_config_set(cfg.h, "epochs", "2") == BDGD_OK);
    CHECK(std::strlen(bdgd_last_error()) == 0);

    bdgd_config_destroy(nullptr);  // must be a safe no-op
}

TEST_CASE("config files round trip through the C interface") {
    std::string dir = scratch_dir("cfg");
    Config a;
    a.set("image_size", "48");
    a.set("method", "bdgd");
    a.set("seed", "77");
    a.set("out_dir", dir);
    REQUIRE(bdgd_config_save(a.h, (dir + "/c.txt").c_str()) == BDGD_OK);

    Config b;
    REQUIRE(bdgd_config_load(b.h, (dir + "/c.txt").c_str()) == BDGD_OK);
    REQUIRE(bdgd_config_save(b.h, (dir + "/c2.txt").c_str()) == BDGD_OK);
    // Saving the loaded config reproduces the file byte-for-byte.
    auto slurp = [](const std::string& path) {
        FILE* f = std::fopen(path.c_str(), "rb");
        REQUIRE(f != nullptr);
        std::vector<char> data;
        char buf[4096];
        size_t n;
        while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0)
            data.insert(data.end(), buf, buf + n);
        std::fclose(f);
        return data;
    };
    CHECK(slurp(dir + "/c.txt") == slurp(dir + "/c2.txt"));
    fs::remove_all(dir);
}

TEST_CASE("psnr entry point") {
    std::vector<double> ones(64, 1.0), off(64, 0.9);
    double db = 0.0;
    REQUIRE(bdgd_psnr(ones.data(), ones.data(), 64, 1.0, &db) == BDGD_OK);
    CHECK(db == 200.0);
    REQUIRE(bdgd_psnr(off.data(), ones.data(), 64, 1.0, &db) == BDGD_OK);
    CHECK(db == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(bdgd_psnr(nullptr, ones.data(), 64, 1.0, &db) ==
          BDGD_ERR_INVALID_ARGUMENT);
    CHECK(bdgd_psnr(off.data(), ones.data(), 0, 1.0, &db) ==
          BDGD_ERR_INVALID_ARGUMENT);
    CHECK(bdgd_psnr(off.data(), ones.data(), 64, -1.0, &db) ==
          BDGD_ERR_INVALID_ARGUMENT);
}

TEST_CASE("full pipeline drives through the C interface") {
    std::string dir = scratch_dir("pipe");
    Config cfg;
    cfg.set("image_size", "32");
    cfg.set("num_dirs", "8");
    cfg.set("train_count", "4");
    cfg.set("test_count", "2");
    cfg.set("noise_level", "0.02");
    cfg.set("method", "bdgd");
    cfg.set("num_blocks", "1");
    cfg.set("epochs", "1");
    cfg.set("batch_size", "4");
    cfg.set("mc_samples", "3");
    cfg.set("tv_lambda", "0.05");
    cfg.set("seed", "11");
    cfg.set("out_dir", dir);

    // Stage-order errors surface through status codes, not crashes.
    CHECK(bdgd_train(cfg.h) == BDGD_ERR_RUNTIME);
    CHECK(std::string(bdgd_last_error()).find("generate-data") !=
          std::string::npos);

    REQUIRE(bdgd_generate_data(cfg.h) == BDGD_OK);
    REQUIRE(bdgd_train(cfg.h) == BDGD_OK);
    REQUIRE(bdgd_reconstruct(cfg.h) == BDGD_OK);
    cfg.set("method", "fbp");
    REQUIRE(bdgd_reconstruct(cfg.h) == BDGD_OK);

    char table[2048] = {0};
    REQUIRE(bdgd_evaluate(cfg.h, table, sizeof(table)) == BDGD_OK);
    std::string text(table);
    CHECK(text.find("fbp") != std::string::npos);
    CHECK(text.find("bdgd") != std::string::npos);
    CHECK(fs::exists(dir + "/results.csv"));

    cfg.set("method", "bdgd");
    REQUIRE(bdgd_decompose(cfg.h, -1) == BDGD_OK);
    CHECK(fs::exists(dir + "/decompose_bdgd/ood_text_total.png"));
    fs::remove_all(dir);
}
