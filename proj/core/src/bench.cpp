#include "misconv/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "misconv/error.hpp"
#include "misconv/layer.hpp"
#include "misconv/random.hpp"

namespace misconv {
namespace {

double quantile(std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

template <class F>
double seconds(const F& call) {
  const auto start = std::chrono::steady_clock::now();
  call();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

MFAModel random_input_model(Index n, Index l, Index k, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<FactorAnalyzer> parts;
  for (Index c = 0; c < k; ++c) {
    Vector mu(n), d(n);
    Matrix a(n, l);
    for (Index i = 0; i < n; ++i) {
      mu(i) = unit(rng);
      d(i) = 0.01 + 0.05 * unit(rng);
    }
    for (Index j = 0; j < l; ++j)
      for (Index i = 0; i < n; ++i) a(i, j) = 0.1 * standard_normal(rng);
    parts.emplace_back(std::move(mu), std::move(a), std::move(d));
  }
  return MFAModel(std::move(parts), Vector::Constant(k, 1.0 / static_cast<double>(k)));
}

}  // namespace

Index bench_channels(Index size) { return size == 28 ? 1 : 3; }

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of an empty sample");
  std::sort(values.begin(), values.end());
  return quantile(values, 0.5);
}

double interquartile_range(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("IQR of an empty sample");
  std::sort(values.begin(), values.end());
  return quantile(values, 0.75) - quantile(values, 0.25);
}

std::vector<TimingRow> bench_layer(const BenchConfig& cfg) {
  if (cfg.repeats < 100) throw InvalidArgument("bench_layer needs repeats >= 100");
  if (cfg.components < 1) throw InvalidArgument("bench_layer needs k >= 1");
  std::vector<TimingRow> rows;
  Rng rng = make_rng(cfg.seed);
  for (const Index size : cfg.input_sizes) {
    const ImageShape shape{bench_channels(size), size, size};
    const KernelStack kernels =
        KernelStack::random(cfg.filters, shape.channels, cfg.kernel_size, cfg.kernel_size,
                            {cfg.stride, cfg.stride}, {cfg.padding, cfg.padding}, derive_seed(cfg.seed, 1));
    for (const Index batch : cfg.batch_sizes) {
      Matrix images(shape.size(), batch);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (Index j = 0; j < images.size(); ++j) images.data()[j] = unit(rng);

      std::vector<std::vector<MFAModel>> models(cfg.ranks.size());
      for (std::size_t r = 0; r < cfg.ranks.size(); ++r) {
        models[r].reserve(static_cast<std::size_t>(batch));
        for (Index b = 0; b < batch; ++b) {
          models[r].push_back(random_input_model(shape.size(), cfg.ranks[r], cfg.components, rng));
        }
      }

      // Layers are timed in alternation within every repeat so that slow
      // drifts in machine load hit all of them alike.
      Matrix sink;
      const auto classic = [&] { sink = classic_forward_batch(images, shape, kernels, Activation::kRelu); };
      const auto expected = [&](std::size_t r) {
        sink = misconv_forward_batch(models[r], shape, kernels, Activation::kRelu);
      };
      for (int w = 0; w < cfg.warmup; ++w) {
        classic();
        for (std::size_t r = 0; r < cfg.ranks.size(); ++r) expected(r);
      }
      std::vector<double> classic_s;
      std::vector<std::vector<double>> expected_s(cfg.ranks.size());
      for (int rep = 0; rep < cfg.repeats; ++rep) {
        classic_s.push_back(seconds(classic));
        for (std::size_t r = 0; r < cfg.ranks.size(); ++r) expected_s[r].push_back(seconds([&] { expected(r); }));
      }
      rows.push_back({size, batch, "classic", 0, median(classic_s), interquartile_range(classic_s)});
      for (std::size_t r = 0; r < cfg.ranks.size(); ++r) {
        rows.push_back({size, batch,
                        "misconv_l" + std::to_string(cfg.ranks[r]) + "_k" + std::to_string(cfg.components),
                        cfg.ranks[r], median(expected_s[r]), interquartile_range(expected_s[r])});
      }
    }
  }
  return rows;
}

void write_timing_csv(std::ostream& out, const std::vector<TimingRow>& rows) {
  out << "input_size,batch,layer,median_s,iqr_s\n" << std::setprecision(9);
  for (const TimingRow& r : rows) {
    out << r.input_size << ',' << r.batch << ',' << r.layer << ',' << r.median_s << ',' << r.iqr_s << '\n';
  }
}

}  // namespace misconv
