/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pat::geom {

/// Per-voxel candidate lists: for every alpha-view voxel j (row-major flat
/// index), `n` flat indices into the beta view plus a validity flag per slot.
/// Rows are padded to the fixed width n so downstream attention kernels stay
/// rectangular; invalid slots are masked out of the softmax.
struct ReceptiveFieldMap {
    std::uint32_t alphaWidth = 0, alphaHeight = 0;
    std::uint32_t betaWidth = 0, betaHeight = 0;
    std::uint32_t n = 0;
    std::vector<std::uint32_t> indices; // alphaHeight*alphaWidth x n, row-major
    std::vector<std::uint8_t> valid;    // same shape, 0/1

    std::size_t rows() const { return std::size_t(alphaWidth) * alphaHeight; }
    std::size_t slots() const { return rows() * n; }

    std::uint32_t index_at(std::size_t row, std::uint32_t slot) const {
        return indices[row * n + slot];
    }
    bool valid_at(std::size_t row, std::uint32_t slot) const {
        return valid[row * n + slot] != 0;
    }

    /// Maximum over rows of the valid-entry count (the receptive-field bound
    /// that drives attention cost).
    std::uint32_t max_valid_per_row() const;

    /// Checks shape consistency, index bounds and the at-least-one-valid-
    /// entry-per-row requirement. Throws std::runtime_error on violation.
    void check() const;

    bool operator==(const ReceptiveFieldMap& o) const = default;
};

/// Binary layout: magic "PATRF1\0\0" (8 bytes), then alphaHeight, alphaWidth,
/// betaHeight, betaWidth, n as uint32 little-endian, then indices as uint32
/// little-endian row-major, then the validity bitmap (one bit per slot,
/// row-major, LSB first) padded to a byte boundary.
std::vector<std::uint8_t> rf_serialize(const ReceptiveFieldMap& map);
ReceptiveFieldMap rf_deserialize(const std::uint8_t* data, std::size_t size);
ReceptiveFieldMap rf_deserialize(const std::vector<std::uint8_t>& bytes);

void rf_save(const ReceptiveFieldMap& map, const std::string& path);
ReceptiveFieldMap rf_load(const std::string& path);

} // namespace pat::geom
