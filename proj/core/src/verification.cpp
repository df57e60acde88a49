#include "misconv/verification.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

#include <Eigen/Cholesky>

#include "misconv/em.hpp"
#include "misconv/random.hpp"

namespace misconv {
namespace {

Index uniform_int(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Matrix normal_matrix(Rng& rng, Index rows, Index cols, double scale) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = scale * standard_normal(rng);
  return m;
}

MFAModel random_model(Rng& rng, Index n, Index k, Index l) {
  std::vector<FactorAnalyzer> comps;
  Vector w(k);
  for (Index i = 0; i < k; ++i) {
    Vector d(n);
    for (Index j = 0; j < n; ++j) d(j) = uniform(rng, 0.05, 0.5);
    comps.emplace_back(normal_matrix(rng, n, 1, 0.5).col(0), normal_matrix(rng, n, l, 0.5), d);
    w(i) = uniform(rng, 0.2, 1.0);
  }
  return MFAModel(std::move(comps), w / w.sum());
}

MaskedImage random_mask(Rng& rng, const Vector& pixels) {
  const double p = uniform(rng, 0.2, 0.8);
  const Index n = pixels.size();
  std::vector<bool> observed(static_cast<std::size_t>(n));
  for (Index j = 0; j < n; ++j) observed[static_cast<std::size_t>(j)] = uniform(rng, 0.0, 1.0) < p;
  observed[static_cast<std::size_t>(uniform_int(rng, 0, n - 1))] = true;
  return MaskedImage(pixels, std::move(observed));
}

// Dense log N(x; mu, S) via Cholesky.
double dense_log_density(const Vector& x, const Vector& mu, const Matrix& s) {
  Eigen::LLT<Matrix> llt(s);
  const Vector r = x - mu;
  const Vector half = llt.matrixL().solve(r);
  double log_det = 0.0;
  for (Index j = 0; j < s.rows(); ++j) log_det += 2.0 * std::log(llt.matrixL()(j, j));
  return -0.5 * (static_cast<double>(s.rows()) * std::log(2.0 * std::numbers::pi) + log_det +
                 half.squaredNorm());
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << v;
  return os.str();
}

}  // namespace

OracleReport identity_suite(const IdentitySuiteConfig& cfg) {
  std::vector<double> analytic, empirical, se;
  for (int t = 0; t < cfg.configs; ++t) {
    Rng rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(t)));
    const Index channels = uniform_int(rng, 1, 2);
    const Index height = uniform_int(rng, 3, channels == 1 ? 8 : 5);
    const Index width = uniform_int(rng, 3, channels == 1 ? 8 : 5);
    const ImageShape shape{channels, height, width};
    const Index k = uniform_int(rng, 1, 3);
    const Index l = uniform_int(rng, 0, 4);
    MFAModel model = random_model(rng, shape.size(), k, l);
    if (cfg.conditioned_share && t % 2 == 1) {
      model = condition(model, random_mask(rng, sample_mixture(model, rng)));
    }

    const Index filters = uniform_int(rng, 1, 4);
    const Index kh = uniform_int(rng, 1, std::min<Index>(3, height));
    const Index kw = uniform_int(rng, 1, std::min<Index>(3, width));
    const Extent2 stride{uniform_int(rng, 1, 2), uniform_int(rng, 1, 2)};
    const Extent2 padding{uniform_int(rng, 0, 1), uniform_int(rng, 0, 1)};
    const Index fan_in = channels * kh * kw;
    Matrix weights = normal_matrix(rng, filters, fan_in, std::sqrt(2.0 / static_cast<double>(fan_in)));
    const Vector bias = normal_matrix(rng, filters, 1, 0.5).col(0);
    const KernelStack kernels(channels, kh, kw, std::move(weights), bias, stride, padding);

    const OracleReport r = mc_expected_forward(model, shape, kernels, Activation::kRelu, cfg.samples,
                                               derive_seed(cfg.seed ^ 0x9e37u, static_cast<std::uint64_t>(t)),
                                               cfg.layer);
    for (Index c = 0; c < r.analytic.size(); ++c) {
      analytic.push_back(r.analytic(c));
      empirical.push_back(r.empirical(c));
      se.push_back(r.std_error(c));
    }
  }
  auto to_vec = [](const std::vector<double>& v) {
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
  };
  return compare(to_vec(analytic), to_vec(empirical), to_vec(se), cfg.samples);
}

SuiteOutcome relu_quadrature_suite(int cases, std::uint64_t seed, ReluMoment moment, double tol) {
  double worst = 0.0;
  int worst_case = -1;
  for (int t = 0; t < cases; ++t) {
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const auto k = static_cast<std::size_t>(uniform_int(rng, 1, 3));
    std::vector<double> w(k), m(k), s(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      w[i] = uniform(rng, 0.1, 1.0);
      total += w[i];
      m[i] = uniform(rng, -3.0, 3.0);
      // a quarter of the components sit at or near the point-mass limit
      const double pick = uniform(rng, 0.0, 1.0);
      if (pick < 0.08) s[i] = 0.0;
      else if (pick < 0.25) s[i] = std::pow(10.0, uniform(rng, -12.0, -4.0));
      else s[i] = uniform(rng, 0.05, 3.0);
    }
    for (double& x : w) x /= total;
    const double analytic = expected_relu_scalar(w, m, s, moment);
    const double reference = quadrature_expected_relu(w, m, s, 1e-11);
    const double err = std::abs(analytic - reference);
    if (!(err <= worst)) {
      worst = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
      worst_case = t;
    }
  }
  return {worst <= tol, "max_abs_err=" + fmt(worst) + " (case " + std::to_string(worst_case) + " of " +
                            std::to_string(cases) + ", tol " + fmt(tol) + ")"};
}

SuiteOutcome quadrature_mc_suite(int cases, std::size_t samples, std::uint64_t seed) {
  double worst = 0.0;
  for (int t = 0; t < cases; ++t) {
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const auto k = static_cast<std::size_t>(uniform_int(rng, 1, 3));
    std::vector<double> w(k), m(k), s(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      w[i] = uniform(rng, 0.1, 1.0);
      total += w[i];
      // P(X > 0) >= 2% so the sample mean is close to normal at this size
      m[i] = uniform(rng, -1.0, 2.0);
      s[i] = uniform(rng, 0.5, 2.0);
    }
    for (double& x : w) x /= total;
    const double q = quadrature_expected_relu(w, m, s, 1e-10);
    const McEstimate mc = mc_expected_relu(w, m, s, samples, derive_seed(seed ^ 0x51u, static_cast<std::uint64_t>(t)));
    worst = std::max(worst, std::abs(q - mc.mean) / mc.std_error);
  }
  return {worst <= 4.0, "max_z=" + fmt(worst) + " over " + std::to_string(cases) + " mixtures"};
}

SuiteOutcome conditioning_suite(int cases, std::uint64_t seed, double tol, double weight_tol) {
  double worst_moment = 0.0;
  double worst_weight = 0.0;
  for (int t = 0; t < cases; ++t) {
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const Index n = uniform_int(rng, 2, 32);
    const Index k = uniform_int(rng, 1, 3);
    const Index l = uniform_int(rng, 0, 4);
    const MFAModel model = random_model(rng, n, k, l);
    const MaskedImage img = random_mask(rng, sample_mixture(model, rng));
    const MFAModel got = condition(model, img);

    const std::vector<Index> obs = img.observed_indices();
    const std::vector<Index> mis = img.missing_indices();
    Vector x_o(static_cast<Index>(obs.size()));
    for (std::size_t a = 0; a < obs.size(); ++a) x_o(static_cast<Index>(a)) = img.pixels()(obs[a]);

    Vector log_w(k);
    for (Index i = 0; i < k; ++i) {
      const FactorAnalyzer& fa = model.component(static_cast<std::size_t>(i));
      const Matrix sigma = fa.covariance();
      const Vector mu = fa.mean();
      Matrix s_oo(obs.size(), obs.size()), s_mo(mis.size(), obs.size()), s_mm(mis.size(), mis.size());
      Vector mu_o(static_cast<Index>(obs.size())), mu_m(static_cast<Index>(mis.size()));
      for (std::size_t a = 0; a < obs.size(); ++a) {
        mu_o(static_cast<Index>(a)) = mu(obs[a]);
        for (std::size_t b = 0; b < obs.size(); ++b) s_oo(a, b) = sigma(obs[a], obs[b]);
      }
      for (std::size_t a = 0; a < mis.size(); ++a) {
        mu_m(static_cast<Index>(a)) = mu(mis[a]);
        for (std::size_t b = 0; b < obs.size(); ++b) s_mo(a, b) = sigma(mis[a], obs[b]);
        for (std::size_t b = 0; b < mis.size(); ++b) s_mm(a, b) = sigma(mis[a], mis[b]);
      }
      const Eigen::LLT<Matrix> llt(s_oo);
      const Vector cond_mu = mu_m + s_mo * llt.solve(x_o - mu_o);
      const Matrix cond_cov = s_mm - s_mo * llt.solve(s_mo.transpose());
      log_w(i) = std::log(model.weight(static_cast<std::size_t>(i))) + dense_log_density(x_o, mu_o, s_oo);

      // embedded: observed coordinates are point masses at x_o
      Vector want_mu = img.pixels();
      Matrix want_cov = Matrix::Zero(n, n);
      for (std::size_t a = 0; a < mis.size(); ++a) {
        want_mu(mis[a]) = cond_mu(static_cast<Index>(a));
        for (std::size_t b = 0; b < mis.size(); ++b) want_cov(mis[a], mis[b]) = cond_cov(a, b);
      }
      const FactorAnalyzer& c = got.component(static_cast<std::size_t>(i));
      worst_moment = std::max(worst_moment, (c.mean() - want_mu).cwiseAbs().maxCoeff());
      worst_moment = std::max(worst_moment, (c.covariance() - want_cov).cwiseAbs().maxCoeff());
    }
    const Vector post = (log_w.array() - log_w.maxCoeff()).exp();
    worst_weight = std::max(worst_weight, (post / post.sum() - got.weights()).cwiseAbs().maxCoeff());
  }
  const bool ok = worst_moment <= tol && worst_weight <= weight_tol;
  return {ok, "max_moment_err=" + fmt(worst_moment) + " max_weight_err=" + fmt(worst_weight) + " over " +
                  std::to_string(cases) + " cases"};
}

SuiteOutcome em_suite(std::uint64_t seed) {
  std::ostringstream detail;
  bool ok = true;

  // known FA, n=16, l=2
  Rng rng = make_rng(derive_seed(seed, 0));
  const Index n = 16;
  Vector d(n);
  for (Index j = 0; j < n; ++j) d(j) = uniform(rng, 0.1, 0.5);
  const FactorAnalyzer truth(normal_matrix(rng, n, 1, 1.0).col(0), normal_matrix(rng, n, 2, 1.0), d);
  Matrix data(n, 5000);
  for (Index j = 0; j < data.cols(); ++j) data.col(j) = sample(truth, rng);
  EMConfig cfg;
  cfg.k = 1;
  cfg.l = 2;
  cfg.max_iters = 500;
  cfg.ll_tol = 1e-9;
  cfg.seed = derive_seed(seed, 1);
  const EMResult fitted = fit(data, cfg);
  const Matrix want = truth.covariance();
  const double rel = (fitted.model.component(0).covariance() - want).norm() / want.norm();
  ok = ok && rel <= 0.10;
  detail << "recovery_rel_frob=" << fmt(rel);

  // monotonicity across mixtures of several shapes
  double worst_drop = 0.0;
  std::vector<EMReport> reports{fitted.report};
  for (int run = 0; run < 4; ++run) {
    Rng r = make_rng(derive_seed(seed, 10 + static_cast<std::uint64_t>(run)));
    const Index dim = uniform_int(r, 4, 20);
    const Index k = uniform_int(r, 2, 4);
    const MFAModel gen = random_model(r, dim, k, uniform_int(r, 1, 3));
    Matrix x(dim, 1500);
    for (Index j = 0; j < x.cols(); ++j) x.col(j) = sample_mixture(gen, r);
    EMConfig c;
    c.k = static_cast<int>(k);
    c.l = static_cast<int>(uniform_int(r, 0, 3));
    c.max_iters = 100;
    c.ll_tol = 1e-10;
    c.seed = derive_seed(seed, 20 + static_cast<std::uint64_t>(run));
    c.init = run % 2 == 0 ? EMInit::kKMeans : EMInit::kRandomSubset;
    reports.push_back(fit(x, c).report);
  }
  for (const EMReport& rep : reports) {
    for (std::size_t i = 1; i < rep.mean_loglik.size(); ++i) {
      worst_drop = std::max(worst_drop, rep.mean_loglik[i - 1] - rep.mean_loglik[i]);
    }
  }
  ok = ok && worst_drop <= 1e-7;
  detail << " max_loglik_drop=" << fmt(worst_drop) << " runs=" << reports.size();
  return {ok, detail.str()};
}

}  // namespace misconv
