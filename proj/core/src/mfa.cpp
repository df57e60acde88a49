#include "misconv/mfa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include <Eigen/Cholesky>

#include "misconv/error.hpp"
#include "woodbury.hpp"

namespace misconv {
namespace {

constexpr double kWeightSumTolerance = 1e-12;
constexpr double kWeightFlush = 1e-300;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(const Vector& values) {
  const double peak = values.maxCoeff();
  if (!std::isfinite(peak)) return peak;
  return peak + std::log((values.array() - peak).exp().sum());
}

// Observed coordinates split into those carrying density and exact point masses.
struct ObservedSplit {
  std::vector<Index> active;
  std::vector<Index> point_mass;
};

ObservedSplit split_observed(const FactorAnalyzer& fa, const std::vector<Index>& observed) {
  ObservedSplit split;
  for (const Index j : observed) {
    if (fa.noise()(j) > 0.0) {
      split.active.push_back(j);
    } else if (fa.loadings().row(j).isZero(0.0)) {
      split.point_mass.push_back(j);
    } else {
      throw DegenerateDensityError("observed coordinate " + std::to_string(j) +
                                   " has zero noise but nonzero loadings");
    }
  }
  return split;
}

}  // namespace

namespace detail {

WoodburyCore::WoodburyCore(const Matrix& loadings, const Vector& noise,
                           const std::vector<Index>& rows)
    : rows_(rows) {
  const Index m = static_cast<Index>(rows.size());
  const Index l = loadings.cols();
  scaled_.resize(m, l);
  inv_noise_.resize(m);
  log_det_noise_ = 0.0;
  for (Index r = 0; r < m; ++r) {
    const Index j = rows[static_cast<std::size_t>(r)];
    const double dj = noise(j);
    inv_noise_(r) = 1.0 / dj;
    log_det_noise_ += std::log(dj);
    scaled_.row(r) = loadings.row(j) * inv_noise_(r);
  }

  Matrix core = Matrix::Identity(l, l);
  for (Index r = 0; r < m; ++r) {
    core.noalias() += scaled_.row(r).transpose() * loadings.row(rows[static_cast<std::size_t>(r)]);
  }
  core = 0.5 * (core + core.transpose());
  llt_.compute(core);
  if (llt_.info() != Eigen::Success) {
    llt_.compute(core + 1e-10 * Matrix::Identity(l, l));
    if (llt_.info() != Eigen::Success) {
      throw DegenerateDensityError("factor core I + A^T D^-1 A is not positive definite");
    }
  }
}

double WoodburyCore::log_det_core() const {
  const Matrix& lower = llt_.matrixLLT();
  double sum = 0.0;
  for (Index i = 0; i < lower.rows(); ++i) sum += std::log(lower(i, i));
  return 2.0 * sum;
}

WoodburyCore::Solve WoodburyCore::solve(const Vector& residual) const {
  // residual is indexed like rows_.
  const Vector weighted = residual.cwiseProduct(inv_noise_);
  const Vector projected = scaled_.transpose() * residual;
  Solve out;
  out.factor_mean = llt_.solve(projected);
  out.quadratic = residual.dot(weighted) - projected.dot(out.factor_mean);
  out.log_density = -0.5 * (static_cast<double>(residual.size()) * kLog2Pi + log_det_noise_ +
                            log_det_core() + out.quadratic);
  return out;
}

Matrix WoodburyCore::inverse_core_factor() const {
  // core = R R^T with R lower; (R^T)^{-1} (R^T)^{-T} = core^{-1}.
  const Index l = llt_.matrixLLT().rows();
  Matrix upper_inverse = Matrix::Identity(l, l);
  llt_.matrixU().solveInPlace(upper_inverse);
  return upper_inverse;
}

}  // namespace detail

// ---------------------------------------------------------------------------

FactorAnalyzer::FactorAnalyzer(Vector mean, Matrix loadings, Vector noise)
    : mean_(std::move(mean)), loadings_(std::move(loadings)), noise_(std::move(noise)) {
  if (mean_.size() < 1) throw InvalidArgument("factor analyzer needs n >= 1");
  if (loadings_.rows() != mean_.size() || noise_.size() != mean_.size()) {
    throw InvalidArgument("factor analyzer shapes disagree: mean " + std::to_string(mean_.size()) +
                          ", loadings " + std::to_string(loadings_.rows()) + "x" +
                          std::to_string(loadings_.cols()) + ", noise " +
                          std::to_string(noise_.size()));
  }
  if (!mean_.allFinite() || !loadings_.allFinite() || !noise_.allFinite()) {
    throw InvalidArgument("factor analyzer parameters must be finite");
  }
  if ((noise_.array() < 0.0).any()) throw InvalidArgument("noise variances must be >= 0");
}

FactorAnalyzer FactorAnalyzer::point_mass(Vector at, Index rank) {
  const Index n = at.size();
  return FactorAnalyzer(std::move(at), Matrix::Zero(n, rank), Vector::Zero(n));
}

Matrix FactorAnalyzer::covariance() const {
  Matrix sigma = loadings_ * loadings_.transpose();
  sigma.diagonal() += noise_;
  return sigma;
}

Vector FactorAnalyzer::marginal_variance() const {
  return noise_ + loadings_.rowwise().squaredNorm();
}

MFAModel::MFAModel(std::vector<FactorAnalyzer> components, Vector weights)
    : components_(std::move(components)), weights_(std::move(weights)) {
  if (components_.empty()) throw InvalidArgument("mixture needs k >= 1 components");
  if (static_cast<std::size_t>(weights_.size()) != components_.size()) {
    throw InvalidArgument("mixture has " + std::to_string(components_.size()) +
                          " components but " + std::to_string(weights_.size()) + " weights");
  }
  const Index n = components_.front().dim();
  const Index l = components_.front().rank();
  for (const auto& c : components_) {
    if (c.dim() != n || c.rank() != l) {
      throw InvalidArgument("mixture components must share n and l");
    }
  }
  if (!weights_.allFinite() || (weights_.array() < 0.0).any()) {
    throw InvalidArgument("mixture weights must be finite and >= 0");
  }
  if (std::abs(weights_.sum() - 1.0) > kWeightSumTolerance) {
    throw InvalidArgument("mixture weights must sum to 1");
  }
}

MaskedImage::MaskedImage(Vector pixels, std::vector<bool> observed)
    : pixels_(std::move(pixels)), observed_(std::move(observed)) {
  if (static_cast<std::size_t>(pixels_.size()) != observed_.size()) {
    throw InvalidArgument("pixel and mask lengths differ");
  }
  for (Index i = 0; i < pixels_.size(); ++i) {
    if (observed_[static_cast<std::size_t>(i)]) {
      ++observed_count_;
    } else {
      pixels_(i) = 0.0;
    }
  }
}

MaskedImage MaskedImage::complete(Vector pixels) {
  std::vector<bool> all(static_cast<std::size_t>(pixels.size()), true);
  return MaskedImage(std::move(pixels), std::move(all));
}

std::vector<Index> MaskedImage::observed_indices() const {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(observed_count_));
  for (Index i = 0; i < size(); ++i)
    if (is_observed(i)) out.push_back(i);
  return out;
}

std::vector<Index> MaskedImage::missing_indices() const {
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(missing_count()));
  for (Index i = 0; i < size(); ++i)
    if (!is_observed(i)) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------

double component_log_density(const FactorAnalyzer& fa, const Eigen::Ref<const Vector>& x) {
  if (x.size() != fa.dim()) {
    throw DimensionError("point has length " + std::to_string(x.size()) + ", model expects " +
                         std::to_string(fa.dim()));
  }
  if ((fa.noise().array() <= 0.0).any()) {
    throw DegenerateDensityError("log-density needs strictly positive noise variances");
  }
  std::vector<Index> all(static_cast<std::size_t>(fa.dim()));
  for (Index i = 0; i < fa.dim(); ++i) all[static_cast<std::size_t>(i)] = i;
  const detail::WoodburyCore core(fa.loadings(), fa.noise(), all);
  return core.solve(x - fa.mean()).log_density;
}

double log_density(const MFAModel& model, const Eigen::Ref<const Vector>& x) {
  Vector terms(static_cast<Index>(model.size()));
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double lp = model.weight(i) > 0.0 ? std::log(model.weight(i))
                                            : -std::numeric_limits<double>::infinity();
    terms(static_cast<Index>(i)) = lp + component_log_density(model.component(i), x);
  }
  return log_sum_exp(terms);
}

Vector sample(const FactorAnalyzer& fa, Rng& rng) {
  Vector out = fa.mean();
  for (Index i = 0; i < fa.dim(); ++i) out(i) += std::sqrt(fa.noise()(i)) * standard_normal(rng);
  for (Index j = 0; j < fa.rank(); ++j) out += standard_normal(rng) * fa.loadings().col(j);
  return out;
}

Vector sample(const FactorAnalyzer& fa, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample(fa, rng);
}

std::size_t draw_component(const Vector& weights, Rng& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cumulative = 0.0;
  std::size_t last_positive = 0;
  for (Index i = 0; i < weights.size(); ++i) {
    if (weights(i) <= 0.0) continue;
    last_positive = static_cast<std::size_t>(i);
    cumulative += weights(i);
    if (u < cumulative) return last_positive;
  }
  return last_positive;
}

Vector sample_mixture(const MFAModel& model, Rng& rng) {
  if (model.size() == 1) return sample(model.component(0), rng);
  const std::size_t which = draw_component(model.weights(), rng);
  return sample(model.component(which), rng);
}

Vector sample_mixture(const MFAModel& model, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return sample_mixture(model, rng);
}

Vector mixture_mean(const MFAModel& model) {
  Vector out = Vector::Zero(model.dim());
  for (std::size_t i = 0; i < model.size(); ++i) out += model.weight(i) * model.component(i).mean();
  return out;
}

MFAModel condition(const MFAModel& model, const MaskedImage& img) {
  if (img.size() != model.dim()) {
    throw DimensionError("image has " + std::to_string(img.size()) + " pixels, model expects " +
                         std::to_string(model.dim()));
  }
  if (img.observed_count() == 0) {
    throw ConditioningError("cannot condition on an image with no observed pixels");
  }

  const std::vector<Index> observed = img.observed_indices();
  const std::vector<Index> missing = img.missing_indices();
  const Index n = model.dim();
  const Index l = model.rank();
  const std::size_t k = model.size();
  const Vector& x = img.pixels();

  std::vector<FactorAnalyzer> parts;
  parts.reserve(k);
  Vector log_post(static_cast<Index>(k));

  for (std::size_t i = 0; i < k; ++i) {
    const FactorAnalyzer& fa = model.component(i);
    const ObservedSplit split = split_observed(fa, observed);

    bool ruled_out = false;
    for (const Index j : split.point_mass) {
      if (x(j) != fa.mean()(j)) {
        ruled_out = true;
        break;
      }
    }

    const detail::WoodburyCore core(fa.loadings(), fa.noise(), split.active);
    Vector residual(static_cast<Index>(split.active.size()));
    for (std::size_t r = 0; r < split.active.size(); ++r) {
      const Index j = split.active[r];
      residual(static_cast<Index>(r)) = x(j) - fa.mean()(j);
    }
    const auto solved = core.solve(residual);

    const double log_prior = model.weight(i) > 0.0 ? std::log(model.weight(i))
                                                   : -std::numeric_limits<double>::infinity();
    log_post(static_cast<Index>(i)) =
        ruled_out ? -std::numeric_limits<double>::infinity() : log_prior + solved.log_density;

    // E[y | x_o] = core^{-1} A_o^T D_o^{-1} r, Cov[y | x_o] = core^{-1} = B B^T.
    const Matrix cond_factor = core.inverse_core_factor();
    Vector mean = fa.mean();
    Matrix loadings = Matrix::Zero(n, l);
    Vector noise = Vector::Zero(n);
    for (const Index j : observed) mean(j) = x(j);
    for (const Index j : missing) {
      mean(j) += fa.loadings().row(j).dot(solved.factor_mean);
      loadings.row(j) = fa.loadings().row(j) * cond_factor;
      noise(j) = fa.noise()(j);
    }
    parts.emplace_back(std::move(mean), std::move(loadings), std::move(noise));
  }

  const double normalizer = log_sum_exp(log_post);
  if (!std::isfinite(normalizer)) {
    throw ConditioningError("observed pixels have zero likelihood under every component");
  }
  Vector weights = (log_post.array() - normalizer).exp().matrix();
  for (Index i = 0; i < weights.size(); ++i)
    if (weights(i) < kWeightFlush) weights(i) = 0.0;
  weights /= weights.sum();
  return MFAModel(std::move(parts), std::move(weights));
}

Vector conditional_mean_imputation(const MFAModel& model, const MaskedImage& img,
                                   ImputationMode mode) {
  const MFAModel posterior = condition(model, img);
  Vector out;
  if (mode == ImputationMode::kMixtureMean) {
    out = mixture_mean(posterior);
  } else {
    Index best = 0;
    posterior.weights().maxCoeff(&best);
    out = posterior.component(static_cast<std::size_t>(best)).mean();
  }
  // The weighted sum of identical observed values need not round back exactly.
  for (Index j = 0; j < out.size(); ++j)
    if (img.is_observed(j)) out(j) = img.pixels()(j);
  return out;
}

}  // namespace misconv
