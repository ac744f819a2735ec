#include "bdgd/png_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bdgd::png {

namespace {

constexpr std::uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a,
                                        '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
           (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const uLong crc = crc32(crc32(0L, Z_NULL, 0), out.data() + crc_start,
                            static_cast<uInt>(out.size() - crc_start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_gray8(const std::string& path, const Gray8& img) {
    if (img.width <= 0 || img.height <= 0)
        throw std::invalid_argument("png dimensions must be positive");
    const std::size_t w = static_cast<std::size_t>(img.width);
    const std::size_t h = static_cast<std::size_t>(img.height);
    if (img.pixels.size() != w * h)
        throw std::invalid_argument("png pixel buffer size mismatch");

    // Raw scanlines, each prefixed with filter type 0 (none).
    std::vector<std::uint8_t> raw((w + 1) * h);
    for (std::size_t y = 0; y < h; ++y) {
        raw[y * (w + 1)] = 0;
        std::memcpy(raw.data() + y * (w + 1) + 1, img.pixels.data() + y * w, w);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(bound);
    if (compress2(z.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                  Z_BEST_SPEED) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    z.resize(bound);

    std::vector<std::uint8_t> out(kSignature, kSignature + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // color type: grayscale
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", z);
    append_chunk(out, "IEND", {});

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("short write: " + path);
}

Gray8 read_gray8(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kSignature, 8) != 0)
        throw std::runtime_error("not a png file: " + path);

    Gray8 img;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    bool saw_ihdr = false;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t len = get_u32(buf.data() + pos);
        if (pos + 12 + len > buf.size())
            throw std::runtime_error("truncated png chunk: " + path);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const std::uint8_t* data = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw std::runtime_error("malformed IHDR: " + path);
            img.width = static_cast<int>(get_u32(data));
            img.height = static_cast<int>(get_u32(data + 4));
            if (data[8] != 8 || data[9] != 0 || data[12] != 0)
                throw std::runtime_error(
                    "unsupported png (need 8-bit non-interlaced grayscale): " +
                    path);
            saw_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!saw_ihdr || img.width <= 0 || img.height <= 0 || idat.empty())
        throw std::runtime_error("malformed png: " + path);

    const std::size_t w = static_cast<std::size_t>(img.width);
    const std::size_t h = static_cast<std::size_t>(img.height);
    std::vector<std::uint8_t> raw((w + 1) * h);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(),
                   static_cast<uLong>(idat.size())) != Z_OK ||
        raw_len != raw.size())
        throw std::runtime_error("png inflate failed: " + path);

    // Undo per-scanline filters (grayscale: bytes-per-pixel is 1).
    img.pixels.resize(w * h);
    for (std::size_t y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[y * (w + 1)];
        const std::uint8_t* src = raw.data() + y * (w + 1) + 1;
        std::uint8_t* dst = img.pixels.data() + y * w;
        const std::uint8_t* up = y > 0 ? dst - w : nullptr;
        for (std::size_t x = 0; x < w; ++x) {
            const int a = x > 0 ? dst[x - 1] : 0;
            const int b = up ? up[x] : 0;
            const int c = (x > 0 && up) ? up[x - 1] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: {
                    const int p = a + b - c;
                    const int pa = std::abs(p - a), pb = std::abs(p - b),
                              pc = std::abs(p - c);
                    v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default:
                    throw std::runtime_error("unsupported png filter: " + path);
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    return img;
}

void write_normalized(const std::string& path, const std::vector<double>& v,
                      int width, int height, double lo, double hi) {
    if (hi <= lo) throw std::invalid_argument("normalization needs hi > lo");
    if (v.size() != static_cast<std::size_t>(width) * height)
        throw std::invalid_argument("value buffer size mismatch");
    Gray8 img;
    img.width = width;
    img.height = height;
    img.pixels.resize(v.size());
    const double scale = 255.0 / (hi - lo);
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double t = (v[i] - lo) * scale;
        img.pixels[i] =
            static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 255.0)));
    }
    write_gray8(path, img);
}

}  // namespace bdgd::png
