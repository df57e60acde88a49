#include "misconv/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>
#include <vector>

#include "misconv/error.hpp"
#include "misconv/parallel.hpp"
#include "misconv/random.hpp"

namespace misconv {
namespace {

constexpr std::size_t kBatch = 2000;
constexpr double kWindow = 12.0;

// Gauss-Kronrod 15-point nodes/weights on [-1, 1] (QUADPACK qk15).
constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr std::array<double, 4> kWg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Piece {
  double a, b, value, error;
  bool operator<(const Piece& other) const { return error < other.error; }
};

template <class F>
Piece gauss_kronrod(const F& f, double a, double b) {
  const double center = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  const double fc = f(center);
  double kronrod = fc * kWgk[7];
  double gauss = fc * kWg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = half * kXgk[static_cast<std::size_t>(j)];
    const double sum = f(center - dx) + f(center + dx);
    kronrod += kWgk[static_cast<std::size_t>(j)] * sum;
    if (j % 2 == 1) gauss += kWg[static_cast<std::size_t>(j / 2)] * sum;
  }
  return Piece{a, b, kronrod * half, std::abs((kronrod - gauss) * half)};
}

// Global adaptive bisection on the piece with the largest error estimate.
// The running error total is only a guide; convergence is confirmed on the
// exact sum so rounding drift cannot end the loop early.
template <class F>
double integrate(const F& f, double a, double b, double tol, int max_pieces) {
  std::vector<Piece> pieces{gauss_kronrod(f, a, b)};
  double value = pieces.front().value;
  double error = pieces.front().error;
  while (true) {
    if (error <= tol) {
      error = 0.0;
      for (const Piece& p : pieces) error += p.error;
      if (error <= tol) break;
    }
    if (static_cast<int>(pieces.size()) >= max_pieces) {
      throw ConvergenceError("quadrature did not reach tolerance", value);
    }
    std::pop_heap(pieces.begin(), pieces.end());
    const Piece worst = pieces.back();
    pieces.pop_back();
    const double mid = 0.5 * (worst.a + worst.b);
    for (const Piece& half : {gauss_kronrod(f, worst.a, mid), gauss_kronrod(f, mid, worst.b)}) {
      value += half.value;
      error += half.error;
      pieces.push_back(half);
      std::push_heap(pieces.begin(), pieces.end());
    }
    value -= worst.value;
    error -= worst.error;
  }
  return value;
}

double standard_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * std::numbers::pi); }

// Int_{u >= lo} (m + s u) phi(u) du, i.e. E[X; X > 0] for one component.
double component_integral(double m, double s, double tol, int max_pieces) {
  // Either tail past |u| = w is bounded by |m| Q(w) + s phi(w), Q(w) <= phi(w) / w.
  auto tail = [&](double w) { return (std::abs(m) / w + s) * standard_pdf(w); };
  double hi = kWindow;
  while (2.0 * tail(hi) > 0.25 * tol && hi < 40.0) hi += 4.0;
  const double lo = std::max(-hi, -m / s);
  if (lo >= hi) return 0.0;
  auto integrand = [m, s](double u) { return (m + s * u) * standard_pdf(u); };
  return integrate(integrand, lo, hi, 0.75 * tol, max_pieces);
}

// Var[f(Y)] per coordinate for Y distributed as the analytic output mixture.
Vector model_variance(const GaussianFeatureMaps& maps, const Vector& mean, Activation activation) {
  Vector second = Vector::Zero(mean.size());
  for (Index i = 0; i < maps.weights.size(); ++i) {
    const double p = maps.weights(i);
    const Vector& mu = maps.means[static_cast<std::size_t>(i)];
    const Vector& var = maps.variances[static_cast<std::size_t>(i)];
    for (Index c = 0; c < mean.size(); ++c) {
      const double m = mu(c);
      const double v = std::max(var(c), 0.0);
      if (activation == Activation::kNone) {
        second(c) += p * (m * m + v);
      } else if (v == 0.0) {
        second(c) += p * (m > 0.0 ? m * m : 0.0);
      } else {
        // E[max(0, Y)^2] = (m^2 + s^2) Phi(m/s) + m s phi(m/s)
        const double s = std::sqrt(v);
        const double z = m / s;
        second(c) += p * ((m * m + v) * 0.5 * std::erfc(-z / std::numbers::sqrt2) + m * s * standard_pdf(z));
      }
    }
  }
  return (second - mean.cwiseAbs2()).cwiseMax(0.0);
}

}  // namespace

bool passes(const OracleReport& report, const OracleThresholds& thresholds) {
  return report.max_z <= thresholds.max_z &&
         report.fraction_above_z4 <= thresholds.max_flag_fraction;
}

OracleReport compare(Vector analytic, Vector empirical, Vector std_error, std::size_t samples) {
  OracleReport r;
  r.samples = samples;
  r.z.resize(analytic.size());
  std::size_t flagged = 0;
  double z_sum = 0.0;
  for (Index c = 0; c < analytic.size(); ++c) {
    const double diff = std::abs(analytic(c) - empirical(c));
    double z;
    if (diff <= 1e-12 * (1.0 + std::abs(analytic(c)))) {
      z = 0.0;  // below floating-point resolution of either side
    } else if (std_error(c) > 0.0) {
      z = diff / std_error(c);
    } else {
      // all samples identical: analytic must agree up to rounding
      z = diff <= 1e-9 * (1.0 + std::abs(analytic(c))) ? 0.0 : std::numeric_limits<double>::infinity();
    }
    r.z(c) = z;
    r.max_z = std::max(r.max_z, z);
    z_sum += z;
    if (z > 4.0) ++flagged;
  }
  const auto coords = static_cast<double>(std::max<Index>(analytic.size(), 1));
  r.mean_z = z_sum / coords;
  r.fraction_above_z4 = static_cast<double>(flagged) / coords;
  r.analytic = std::move(analytic);
  r.empirical = std::move(empirical);
  r.std_error = std::move(std_error);
  return r;
}

OracleReport mc_expected_forward(const MFAModel& model, const ImageShape& input,
                                 const KernelStack& kernels, Activation activation,
                                 std::size_t n_samples, std::uint64_t seed,
                                 const LayerOptions& analytic_options) {
  if (n_samples < 1000) throw InvalidArgument("Monte-Carlo oracle needs at least 1000 samples");
  const GaussianFeatureMaps maps = conv_pushforward(model, input, kernels, analytic_options);
  Vector analytic = expected_activation(maps, activation, analytic_options.relu_moment);
  const Vector floor_var = model_variance(maps, analytic, activation);

  const std::size_t batches = (n_samples + kBatch - 1) / kBatch;
  std::vector<Vector> batch_mean(batches);
  std::vector<Vector> batch_m2(batches);
  std::vector<double> batch_count(batches);

  parallel_for(batches, [&](std::size_t b) {
    const std::size_t count = std::min(kBatch, n_samples - b * kBatch);
    Rng rng = make_rng(derive_seed(seed, b));
    Matrix draws(model.dim(), static_cast<Index>(count));
    for (Index j = 0; j < draws.cols(); ++j) draws.col(j) = sample_mixture(model, rng);
    const Matrix outputs = classic_forward_batch(draws, input, kernels, activation);
    const Vector mean = outputs.rowwise().mean();
    batch_mean[b] = mean;
    batch_m2[b] = (outputs.colwise() - mean).rowwise().squaredNorm();
    batch_count[b] = static_cast<double>(count);
  });

  // Chan et al. pairwise merge, in batch order.
  Vector mean = batch_mean[0];
  Vector m2 = batch_m2[0];
  double count = batch_count[0];
  for (std::size_t b = 1; b < batches; ++b) {
    const double nb = batch_count[b];
    const Vector delta = batch_mean[b] - mean;
    const double total = count + nb;
    mean += delta * (nb / total);
    m2 += batch_m2[b] + delta.cwiseAbs2() * (count * nb / total);
    count = total;
  }
  // Rare positive outputs leave the sample variance badly underestimated (often
  // exactly 0); the variance implied by the analytic mixture acts as a floor.
  Vector se = ((m2 / (count - 1.0)).cwiseMax(floor_var) / count).cwiseSqrt();
  return compare(std::move(analytic), std::move(mean), std::move(se), n_samples);
}

double quadrature_expected_relu(std::span<const double> weights, std::span<const double> means,
                                std::span<const double> stds, double abs_tol, int max_subintervals) {
  if (!(abs_tol > 0.0)) throw InvalidArgument("quadrature tolerance must be > 0");
  if (max_subintervals < 1) throw InvalidArgument("quadrature needs max_subintervals >= 1");
  if (weights.size() != means.size() || weights.size() != stds.size() || weights.empty()) {
    throw InvalidArgument("quadrature: weights, means and stds must have equal nonzero length");
  }
  const double share = abs_tol / static_cast<double>(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double p = weights[i];
    const double m = means[i];
    const double s = stds[i];
    if (s < 0.0) throw InvalidArgument("quadrature: negative standard deviation");
    if (p == 0.0) continue;
    if (s == 0.0) {
      total += p * std::max(m, 0.0);
      continue;
    }
    try {
      total += p * component_integral(m, s, share / p, max_subintervals);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError(e.what(), total + p * e.best_estimate());
    }
  }
  return total;
}

McEstimate mc_expected_relu(std::span<const double> weights, std::span<const double> means,
                            std::span<const double> stds, std::size_t n_samples,
                            std::uint64_t seed) {
  if (n_samples < 2) throw InvalidArgument("need at least 2 samples");
  Vector w(static_cast<Index>(weights.size()));
  for (std::size_t i = 0; i < weights.size(); ++i) w(static_cast<Index>(i)) = weights[i];
  Rng rng = make_rng(seed);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t t = 0; t < n_samples; ++t) {
    const std::size_t c = draw_component(w, rng);
    const double x = std::max(0.0, means[c] + stds[c] * standard_normal(rng));
    const double delta = x - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (x - mean);
  }
  const double n = static_cast<double>(n_samples);
  return McEstimate{mean, std::sqrt(m2 / (n - 1.0) / n)};
}

void write_oracle_csv(std::ostream& out, const OracleReport& report) {
  out << "coord,analytic,empirical,se,z\n" << std::setprecision(17);
  for (Index c = 0; c < report.analytic.size(); ++c) {
    out << c << ',' << report.analytic(c) << ',' << report.empirical(c) << ','
        << report.std_error(c) << ',' << report.z(c) << '\n';
  }
}

std::string summary_line(const OracleReport& report, const OracleThresholds& thresholds) {
  std::ostringstream os;
  os << (passes(report, thresholds) ? "PASS" : "FAIL") << std::fixed << std::setprecision(3)
     << " max_z=" << report.max_z << " mean_z=" << report.mean_z << std::setprecision(4)
     << " frac_z>4=" << report.fraction_above_z4 << " coords=" << report.analytic.size()
     << " samples=" << report.samples;
  return os.str();
}

}  // namespace misconv
