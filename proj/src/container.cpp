#include "bdgd/container.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bdgd {

namespace {

constexpr char kMagic[4] = {'B', 'D', 'G', 'D'};

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

}  // namespace

std::uint64_t ContainerEntry::element_count() const {
    std::uint64_t n = 1;
    for (auto e : extents) n *= e;
    return n;
}

void Container::set(const std::string& name, std::vector<std::uint64_t> extents,
                    std::vector<double> values) {
    std::uint64_t n = 1;
    for (auto e : extents) n *= e;
    if (n != values.size())
        throw std::invalid_argument("container entry '" + name +
                                    "': extents do not match value count");
    entries_[name] = ContainerEntry{std::move(extents), std::move(values)};
}

void Container::set_scalar(const std::string& name, double value) {
    set(name, {1}, {value});
}

bool Container::has(const std::string& name) const { return entries_.count(name) != 0; }

const ContainerEntry& Container::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::out_of_range("container entry '" + name + "' not found");
    return it->second;
}

double Container::get_scalar(const std::string& name) const {
    const auto& e = get(name);
    if (e.values.size() != 1)
        throw std::invalid_argument("container entry '" + name + "' is not a scalar");
    return e.values[0];
}

void Container::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<std::uint32_t>(e.extents.size()));
        for (auto ext : e.extents) write_u64(os, ext);
        static_assert(sizeof(double) == 8);
        os.write(reinterpret_cast<const char*>(e.values.data()),
                 static_cast<std::streamsize>(e.values.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("write error on '" + path + "'");
}

Container Container::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("'" + path + "' is not a BDGD container");
    std::uint32_t version = read_u32(is);
    if (version != kVersion)
        throw std::runtime_error("'" + path + "': unsupported container version");
    std::uint32_t count = read_u32(is);
    Container c;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        std::uint32_t rank = read_u32(is);
        std::vector<std::uint64_t> extents(rank);
        for (auto& e : extents) e = read_u64(is);
        std::uint64_t n = 1;
        for (auto e : extents) n *= e;
        std::vector<double> values(n);
        is.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!is) throw std::runtime_error("'" + path + "': truncated container");
        c.entries_[name] = ContainerEntry{std::move(extents), std::move(values)};
    }
    return c;
}

}  // namespace bdgd
