#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "misconv/conv.hpp"

namespace misconv {

struct BenchConfig {
  std::vector<Index> input_sizes{28, 32, 64};  ///< square inputs; 28 is 1-channel, others RGB
  std::vector<Index> batch_sizes{16, 32, 64};
  std::vector<Index> ranks{4};                 ///< factor counts l to time
  Index components = 1;                        ///< k
  int repeats = 100;
  int warmup = 5;
  Index filters = 32;
  Index kernel_size = 5;
  Index stride = 2;
  Index padding = 2;
  std::uint64_t seed = 0;
};

struct TimingRow {
  Index input_size = 0;
  Index batch = 0;
  std::string layer;  ///< "classic" or "misconv_l<l>_k<k>"
  Index rank = 0;
  double median_s = 0.0;
  double iqr_s = 0.0;
};

/// Channel count used for a square input of side `size`.
Index bench_channels(Index size);

/// Median and interquartile range over `repeats` timed calls (after `warmup`
/// untimed ones) of one batched classic forward pass and one batched
/// expected-activation pass over random factor-analyzer inputs, per
/// (input size, batch, l). Layers alternate within each repeat. Always
/// single-threaded. Throws InvalidArgument
/// when repeats < 100.
std::vector<TimingRow> bench_layer(const BenchConfig& cfg);

/// CSV with header `input_size,batch,layer,median_s,iqr_s`.
void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows);

/// Median of `values` (copied, then partially sorted).
double median(std::vector<double> values);

/// Third minus first quartile, linear interpolation between order statistics.
double interquartile_range(std::vector<double> values);

}  // namespace misconv
