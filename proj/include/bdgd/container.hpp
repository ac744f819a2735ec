#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace bdgd {

// Flat binary container for tensors, images, sinograms and checkpoints.
// Layout (all integers little-endian):
//   magic "BDGD", version u32, entry count u32,
//   per entry: name length u32, UTF-8 name, rank u32, extents u64[rank],
//   raw IEEE-754 doubles.
struct ContainerEntry {
    std::vector<std::uint64_t> extents;
    std::vector<double> values;

    std::uint64_t element_count() const;
};

class Container {
public:
    static constexpr std::uint32_t kVersion = 1;

    void set(const std::string& name, std::vector<std::uint64_t> extents,
             std::vector<double> values);
    void set_scalar(const std::string& name, double value);

    bool has(const std::string& name) const;
    const ContainerEntry& get(const std::string& name) const;
    double get_scalar(const std::string& name) const;

    const std::map<std::string, ContainerEntry>& entries() const { return entries_; }

    void save(const std::string& path) const;
    static Container load(const std::string& path);

private:
    std::map<std::string, ContainerEntry> entries_;
};

}  // namespace bdgd
