/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pat::attn {

/// One timing row of the C3-stage benchmark.
struct BenchRow {
    int m = 1;
    int height = 0, width = 0, depth = 0;
    int L = 0; // valid slots per receptive-field row
    int n = 0; // total slots per row (L valid + padding)
    double millisMean = 0.0;
    double millisStd = 0.0;
    int runs = 0;
};

/// Times the collect-correlate-combine stage on synthetic features: m views,
/// alpha H x W x D, receptive-field rows with L valid of n slots. Heads are
/// excluded; the measured kernel is the O(m*H*W*D*L) stage. Returns mean and
/// sample standard deviation over `runs` timed repetitions (after warmup).
BenchRow bench_attention(int m, int height, int width, int depth, int L, int n, int runs,
                         std::uint64_t seed = 7);

std::string bench_csv_header();
std::string bench_csv_row(const BenchRow& row);
std::string bench_csv(const std::vector<BenchRow>& rows);

} // namespace pat::attn
