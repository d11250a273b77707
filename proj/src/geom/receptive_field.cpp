/* SPDX-License-Identifier: Apache-2.0 */

#include "pat/geom/receptive_field.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pat::geom {

namespace {

constexpr char kMagic[8] = {'P', 'A', 'T', 'R', 'F', '1', '\0', '\0'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v & 0xff));
    out.push_back(std::uint8_t((v >> 8) & 0xff));
    out.push_back(std::uint8_t((v >> 16) & 0xff));
    out.push_back(std::uint8_t((v >> 24) & 0xff));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

} // namespace

std::uint32_t ReceptiveFieldMap::max_valid_per_row() const {
    std::uint32_t best = 0;
    for (std::size_t r = 0; r < rows(); ++r) {
        std::uint32_t count = 0;
        for (std::uint32_t s = 0; s < n; ++s) count += valid[r * n + s] ? 1u : 0u;
        if (count > best) best = count;
    }
    return best;
}

void ReceptiveFieldMap::check() const {
    if (alphaWidth == 0 || alphaHeight == 0 || betaWidth == 0 || betaHeight == 0 || n == 0)
        throw std::runtime_error("ReceptiveFieldMap: zero dimension");
    if (indices.size() != slots() || valid.size() != slots())
        throw std::runtime_error("ReceptiveFieldMap: index/valid size mismatch");
    const std::uint64_t betaCount = std::uint64_t(betaWidth) * betaHeight;
    for (std::size_t r = 0; r < rows(); ++r) {
        bool any = false;
        for (std::uint32_t s = 0; s < n; ++s) {
            if (!valid[r * n + s]) continue;
            any = true;
            if (indices[r * n + s] >= betaCount)
                throw std::runtime_error("ReceptiveFieldMap: valid index out of beta bounds");
        }
        if (!any) throw std::runtime_error("ReceptiveFieldMap: row with no valid entry");
    }
}

std::vector<std::uint8_t> rf_serialize(const ReceptiveFieldMap& map) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 20 + map.indices.size() * 4 + (map.slots() + 7) / 8);
    out.insert(out.end(), kMagic, kMagic + 8);
    put_u32(out, map.alphaHeight);
    put_u32(out, map.alphaWidth);
    put_u32(out, map.betaHeight);
    put_u32(out, map.betaWidth);
    put_u32(out, map.n);
    for (std::uint32_t idx : map.indices) put_u32(out, idx);
    const std::size_t nBits = map.slots();
    std::vector<std::uint8_t> bitmap((nBits + 7) / 8, 0);
    for (std::size_t i = 0; i < nBits; ++i)
        if (map.valid[i]) bitmap[i / 8] |= std::uint8_t(1u << (i % 8));
    out.insert(out.end(), bitmap.begin(), bitmap.end());
    return out;
}

ReceptiveFieldMap rf_deserialize(const std::uint8_t* data, std::size_t size) {
    if (size < 28) throw std::runtime_error("rf_deserialize: truncated header");
    if (std::memcmp(data, kMagic, 8) != 0)
        throw std::runtime_error("rf_deserialize: bad magic bytes");
    ReceptiveFieldMap map;
    map.alphaHeight = get_u32(data + 8);
    map.alphaWidth = get_u32(data + 12);
    map.betaHeight = get_u32(data + 16);
    map.betaWidth = get_u32(data + 20);
    map.n = get_u32(data + 24);
    const std::uint64_t nSlots = std::uint64_t(map.alphaHeight) * map.alphaWidth * map.n;
    const std::size_t need = 28 + nSlots * 4 + (nSlots + 7) / 8;
    if (size < need) throw std::runtime_error("rf_deserialize: truncated stream");
    map.indices.resize(nSlots);
    const std::uint8_t* p = data + 28;
    for (std::uint64_t i = 0; i < nSlots; ++i, p += 4) map.indices[i] = get_u32(p);
    map.valid.resize(nSlots);
    for (std::uint64_t i = 0; i < nSlots; ++i)
        map.valid[i] = (p[i / 8] >> (i % 8)) & 1u;
    map.check();
    return map;
}

ReceptiveFieldMap rf_deserialize(const std::vector<std::uint8_t>& bytes) {
    return rf_deserialize(bytes.data(), bytes.size());
}

void rf_save(const ReceptiveFieldMap& map, const std::string& path) {
    auto bytes = rf_serialize(map);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write RF map: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

ReceptiveFieldMap rf_load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open RF map: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return rf_deserialize(bytes);
}

} // namespace pat::geom
