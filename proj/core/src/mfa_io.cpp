#include "misconv/mfa_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "misconv/error.hpp"

namespace misconv {

void write_model(std::ostream& out, const MFAModel& model) {
  out.write("MFA1", 4);
  detail::write_u32(out, static_cast<std::uint32_t>(model.dim()));
  detail::write_u32(out, static_cast<std::uint32_t>(model.rank()));
  detail::write_u32(out, static_cast<std::uint32_t>(model.size()));
  for (std::size_t i = 0; i < model.size(); ++i) {
    const FactorAnalyzer& fa = model.component(i);
    detail::write_f64(out, model.weight(i));
    for (Index r = 0; r < fa.dim(); ++r) detail::write_f64(out, fa.mean()(r));
    for (Index c = 0; c < fa.rank(); ++c)
      for (Index r = 0; r < fa.dim(); ++r) detail::write_f64(out, fa.loadings()(r, c));
    for (Index r = 0; r < fa.dim(); ++r) detail::write_f64(out, fa.noise()(r));
  }
  if (!out) throw Error("failed writing MFA model");
}

void save_model(const std::filesystem::path& path, const MFAModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_model(out, model);
}

MFAModel read_model(std::istream& in) {
  detail::expect_magic(in, "MFA1", "MFA model");
  const std::uint32_t n = detail::read_u32(in, "MFA header");
  const std::uint32_t l = detail::read_u32(in, "MFA header");
  const std::uint32_t k = detail::read_u32(in, "MFA header");
  if (n == 0 || k == 0) throw FormatError("MFA model with n = 0 or k = 0");
  // guard against absurd headers before allocating
  if (static_cast<double>(k) * n * (l + 2) > 1e9) throw FormatError("MFA header dimensions too large");

  std::vector<FactorAnalyzer> components;
  components.reserve(k);
  Vector weights(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    weights(i) = detail::read_f64(in, "MFA weight");
    Vector mu(n);
    for (std::uint32_t r = 0; r < n; ++r) mu(r) = detail::read_f64(in, "MFA mean");
    Matrix a(n, l);
    for (std::uint32_t c = 0; c < l; ++c)
      for (std::uint32_t r = 0; r < n; ++r) a(r, c) = detail::read_f64(in, "MFA loadings");
    Vector d(n);
    for (std::uint32_t r = 0; r < n; ++r) d(r) = detail::read_f64(in, "MFA noise");
    try {
      components.emplace_back(std::move(mu), std::move(a), std::move(d));
    } catch (const InvalidArgument& e) {
      throw FormatError(std::string("MFA component invalid: ") + e.what());
    }
  }
  if (!weights.allFinite() || (weights.array() < 0.0).any() ||
      std::abs(weights.sum() - 1.0) > 1e-9) {
    throw FormatError("MFA weights must be nonnegative and sum to 1 within 1e-9");
  }
  weights /= weights.sum();
  return MFAModel(std::move(components), std::move(weights));
}

MFAModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_model(in);
}

}  // namespace misconv
