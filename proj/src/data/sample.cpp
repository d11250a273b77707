/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/data/sample.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pat::data {

namespace {

constexpr std::uint8_t kMagic[8] = {'P', 'A', 'T', 'D', 'S', '1', '\0', '\0'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 24));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
}

void put_tensor(std::vector<std::uint8_t>& out, const nn::Tensor<float>& t) {
    put_u32(out, std::uint32_t(t.height));
    put_u32(out, std::uint32_t(t.width));
    put_u32(out, std::uint32_t(t.depth));
    for (float v : t.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(out, bits);
    }
}

struct Cursor {
    const std::uint8_t* p;
    std::size_t left;

    void need(std::size_t n) const {
        if (left < n) throw std::runtime_error("sample: truncated data");
    }
    std::uint32_t u32() {
        need(4);
        const std::uint32_t v = get_u32(p);
        p += 4;
        left -= 4;
        return v;
    }
    nn::Tensor<float> tensor() {
        const std::uint32_t h = u32(), w = u32(), c = u32();
        if (h == 0 || w == 0 || c == 0 || c > 4 || h > 1u << 20 || w > 1u << 20)
            throw std::runtime_error("sample: implausible tensor dims");
        nn::Tensor<float> t{int(h), int(w), int(c)};
        for (float& v : t.values) {
            const std::uint32_t bits = u32();
            std::memcpy(&v, &bits, 4);
        }
        return t;
    }
};

} // namespace

std::vector<std::uint8_t> sample_serialize(const FusionSample& s) {
    std::vector<std::uint8_t> out(kMagic, kMagic + 8);
    put_u32(out, s.sceneId);
    put_u32(out, s.patchX);
    put_u32(out, s.patchY);
    put_tensor(out, s.alpha);
    put_tensor(out, s.beta);
    put_u32(out, std::uint32_t(s.rfs.size()));
    for (const auto& rf : s.rfs) {
        const std::vector<std::uint8_t> blob = geom::rf_serialize(rf);
        put_u32(out, std::uint32_t(blob.size()));
        out.insert(out.end(), blob.begin(), blob.end());
    }
    return out;
}

FusionSample sample_deserialize(const std::uint8_t* data, std::size_t size) {
    if (size < 8 || std::memcmp(data, kMagic, 8) != 0)
        throw std::runtime_error("sample: bad magic bytes");
    Cursor c{data + 8, size - 8};
    FusionSample s;
    s.sceneId = c.u32();
    s.patchX = c.u32();
    s.patchY = c.u32();
    s.alpha = c.tensor();
    s.beta = c.tensor();
    const std::uint32_t rfCount = c.u32();
    if (rfCount > 64) throw std::runtime_error("sample: implausible map count");
    s.rfs.reserve(rfCount);
    for (std::uint32_t i = 0; i < rfCount; ++i) {
        const std::uint32_t blobSize = c.u32();
        c.need(blobSize);
        s.rfs.push_back(geom::rf_deserialize(c.p, blobSize));
        c.p += blobSize;
        c.left -= blobSize;
    }
    return s;
}

FusionSample sample_deserialize(const std::vector<std::uint8_t>& bytes) {
    return sample_deserialize(bytes.data(), bytes.size());
}

void sample_save(const FusionSample& s, const std::string& path) {
    const std::vector<std::uint8_t> bytes = sample_serialize(s);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("sample: cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!f) throw std::runtime_error("sample: write failed: " + path);
}

FusionSample sample_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("sample: cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return sample_deserialize(bytes);
}

} // namespace pat::data
