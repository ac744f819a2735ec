#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "bdgd/container.hpp"

using bdgd::Container;

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/bdgd_test_") + name;
}

}  // namespace

TEST_CASE("container round trip preserves entries bit-exactly") {
    Container c;
    c.set("image", {2, 3}, {1.0, -2.5, 3.25, 0.0, 1e-300, 7.5});
    c.set_scalar("sigma", 0.125);
    const auto path = temp_path("roundtrip.bin");
    c.save(path);

    Container d = Container::load(path);
    REQUIRE(d.has("image"));
    REQUIRE(d.has("sigma"));
    CHECK(d.get("image").extents == std::vector<std::uint64_t>{2, 3});
    CHECK(d.get("image").values == c.get("image").values);
    CHECK(d.get_scalar("sigma") == 0.125);
    std::remove(path.c_str());
}

TEST_CASE("container rejects bad magic and truncation") {
    const auto path = temp_path("badmagic.bin");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE garbage";
    }
    CHECK_THROWS_AS(Container::load(path), std::runtime_error);
    std::remove(path.c_str());
    CHECK_THROWS_AS(Container::load("/nonexistent/dir/x.bin"), std::runtime_error);
}

TEST_CASE("container entry contracts") {
    Container c;
    CHECK_THROWS_AS(c.set("bad", {2, 2}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(c.get("missing"), std::out_of_range);
    c.set("v", {3}, {1, 2, 3});
    CHECK_THROWS_AS(c.get_scalar("v"), std::invalid_argument);
}
