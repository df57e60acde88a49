#include "misconv/em.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include <Eigen/Cholesky>

#include "misconv/error.hpp"
#include "misconv/parallel.hpp"
#include "misconv/random.hpp"

namespace misconv {
namespace {

constexpr Index kChunk = 256;
constexpr double kEmptyMass = 1e-8;
constexpr int kMaxReseeds = 3;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

struct Params {
  std::vector<Vector> mean;
  std::vector<Matrix> loadings;
  std::vector<Vector> noise;
  Vector weights;
};

// Per-component quantities reused by every chunk of one E-step.
struct ComponentCache {
  Vector inv_noise;
  Matrix scaled;     // D^{-1} A
  Matrix core_inv;   // (I + A^T D^{-1} A)^{-1}
  double log_norm;   // -0.5 (n log 2pi + log|Sigma|) + log p
};

struct ChunkStats {
  std::vector<double> mass;
  std::vector<Matrix> cross;   // sum h x [E y; 1]^T            n x (l+1)
  std::vector<Matrix> moment;  // sum h E[[y;1][y;1]^T]         (l+1) x (l+1)
  std::vector<Vector> square;  // sum h x.^2                     n
  double loglik = 0.0;
};

ComponentCache make_cache(const Params& p, std::size_t i) {
  const Matrix& a = p.loadings[i];
  const Index l = a.cols();
  ComponentCache c;
  c.inv_noise = p.noise[i].cwiseInverse();
  c.scaled = c.inv_noise.asDiagonal() * a;
  Matrix core = Matrix::Identity(l, l);
  core.noalias() += a.transpose() * c.scaled;
  core = 0.5 * (core + core.transpose());
  Eigen::LLT<Matrix> llt(core);
  if (llt.info() != Eigen::Success) {
    llt.compute(core + 1e-10 * Matrix::Identity(l, l));
    if (llt.info() != Eigen::Success) throw DegenerateDensityError("EM factor core not positive definite");
  }
  c.core_inv = llt.solve(Matrix::Identity(l, l));
  double log_det = p.noise[i].array().log().sum();
  const Matrix& lower = llt.matrixLLT();
  for (Index j = 0; j < l; ++j) log_det += 2.0 * std::log(lower(j, j));
  const double n = static_cast<double>(a.rows());
  const double log_weight =
      p.weights(static_cast<Index>(i)) > 0.0 ? std::log(p.weights(static_cast<Index>(i)))
                                             : -std::numeric_limits<double>::infinity();
  c.log_norm = -0.5 * (n * kLog2Pi + log_det) + log_weight;
  return c;
}

ChunkStats e_step_chunk(const Matrix& x, Index begin, Index end, const Params& p,
                        const std::vector<ComponentCache>& caches, Vector& sample_loglik) {
  const std::size_t k = caches.size();
  const Index n = x.rows();
  const Index l = p.loadings.front().cols();
  const Index b = end - begin;
  const auto block = x.middleCols(begin, b);

  Matrix log_resp(static_cast<Index>(k), b);
  std::vector<Matrix> factor_mean(k);
  for (std::size_t i = 0; i < k; ++i) {
    const ComponentCache& c = caches[i];
    const Matrix resid = block.colwise() - p.mean[i];
    const Matrix proj = c.scaled.transpose() * resid;
    factor_mean[i] = c.core_inv * proj;
    const Eigen::RowVectorXd quad =
        (resid.array().square().colwise() * c.inv_noise.array()).colwise().sum() -
        (proj.array() * factor_mean[i].array()).colwise().sum();
    log_resp.row(static_cast<Index>(i)) = (c.log_norm - 0.5 * quad.array()).matrix();
  }

  ChunkStats s;
  s.mass.assign(k, 0.0);
  s.cross.assign(k, Matrix::Zero(n, l + 1));
  s.moment.assign(k, Matrix::Zero(l + 1, l + 1));
  s.square.assign(k, Vector::Zero(n));

  Matrix resp(static_cast<Index>(k), b);
  for (Index col = 0; col < b; ++col) {
    const double peak = log_resp.col(col).maxCoeff();
    const double total = peak + std::log((log_resp.col(col).array() - peak).exp().sum());
    resp.col(col) = (log_resp.col(col).array() - total).exp().matrix();
    sample_loglik(begin + col) = total;
    s.loglik += total;
  }

  const Matrix block_sq = block.array().square().matrix();
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::RowVectorXd h = resp.row(static_cast<Index>(i));
    const double mass = h.sum();
    s.mass[i] = mass;
    Matrix augmented(l + 1, b);
    augmented.topRows(l) = factor_mean[i];
    augmented.row(l).setOnes();
    const Matrix weighted = augmented.array().rowwise() * h.array();
    s.cross[i].noalias() = block * weighted.transpose();
    s.moment[i].noalias() = weighted * augmented.transpose();
    s.moment[i].topLeftCorner(l, l) += mass * caches[i].core_inv;
    s.square[i].noalias() = block_sq * h.transpose();
  }
  return s;
}

void accumulate(ChunkStats& into, const ChunkStats& from) {
  into.loglik += from.loglik;
  for (std::size_t i = 0; i < into.mass.size(); ++i) {
    into.mass[i] += from.mass[i];
    into.cross[i] += from.cross[i];
    into.moment[i] += from.moment[i];
    into.square[i] += from.square[i];
  }
}

Matrix small_loadings(Index n, Index l, Rng& rng) {
  Matrix a(n, l);
  for (Index c = 0; c < l; ++c)
    for (Index r = 0; r < n; ++r) a(r, c) = 0.01 * standard_normal(rng);
  return a;
}

std::vector<Index> choose_distinct(Index population, Index count, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(population));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, population - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(count));
  return idx;
}

// Nearest center per column; ties go to the lowest index.
std::vector<Index> assign(const Matrix& pts, const Matrix& centers, Vector& best_dist) {
  const Matrix cross = centers.transpose() * pts;  // k x m
  const Vector center_sq = centers.colwise().squaredNorm().transpose();
  const Vector pts_sq = pts.colwise().squaredNorm().transpose();
  std::vector<Index> label(static_cast<std::size_t>(pts.cols()));
  best_dist.resize(pts.cols());
  for (Index j = 0; j < pts.cols(); ++j) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centers.cols(); ++c) {
      const double dist = pts_sq(j) - 2.0 * cross(c, j) + center_sq(c);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    label[static_cast<std::size_t>(j)] = best;
    best_dist(j) = best_d;
  }
  return label;
}

Params initialize(const Matrix& x, const EMConfig& cfg, Rng& rng) {
  const Index n = x.rows();
  const Index total = x.cols();
  const Index k = cfg.k;

  const Index subset_size = std::min<Index>(total, static_cast<Index>(cfg.init_subset));
  std::vector<Index> subset = choose_distinct(total, subset_size, rng);
  std::sort(subset.begin(), subset.end());
  Matrix pts(n, subset_size);
  for (Index j = 0; j < subset_size; ++j) pts.col(j) = x.col(subset[static_cast<std::size_t>(j)]);

  Matrix centers(n, k);
  const std::vector<Index> seeds = choose_distinct(subset_size, k, rng);
  for (Index c = 0; c < k; ++c) centers.col(c) = pts.col(seeds[static_cast<std::size_t>(c)]);

  Vector dist;
  std::vector<Index> label = assign(pts, centers, dist);
  const int lloyd_iters = cfg.init == EMInit::kKMeans ? 100 : 0;
  for (int it = 0; it < lloyd_iters; ++it) {
    Matrix sums = Matrix::Zero(n, k);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index j = 0; j < subset_size; ++j) {
      const Index c = label[static_cast<std::size_t>(j)];
      sums.col(c) += pts.col(j);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.col(c) = sums.col(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      } else {
        Index far = 0;
        dist.maxCoeff(&far);
        centers.col(c) = pts.col(far);
        dist(far) = 0.0;
      }
    }
    std::vector<Index> next = assign(pts, centers, dist);
    const bool stable = next == label;
    label = std::move(next);
    if (stable) break;
  }

  const Vector global_mean = pts.rowwise().mean();
  const Vector global_var =
      (pts.colwise() - global_mean).array().square().rowwise().mean().matrix().cwiseMax(cfg.d_floor);

  Params p;
  p.weights.resize(k);
  for (Index c = 0; c < k; ++c) {
    Vector sum = Vector::Zero(n);
    Vector sum_sq = Vector::Zero(n);
    Index count = 0;
    for (Index j = 0; j < subset_size; ++j) {
      if (label[static_cast<std::size_t>(j)] != c) continue;
      sum += pts.col(j);
      sum_sq += pts.col(j).cwiseAbs2();
      ++count;
    }
    Vector var = global_var;
    if (count > 1) {
      const Vector m = sum / static_cast<double>(count);
      var = (sum_sq / static_cast<double>(count) - m.cwiseAbs2()).cwiseMax(cfg.d_floor);
    }
    p.mean.push_back(centers.col(c));
    p.noise.push_back(var);
    p.loadings.push_back(small_loadings(n, cfg.l, rng));
    p.weights(c) = static_cast<double>(std::max<Index>(count, 1));
  }
  p.weights /= p.weights.sum();
  return p;
}

}  // namespace

void EMConfig::validate() const {
  if (k < 1) throw InvalidArgument("EM: k must be >= 1");
  if (l < 0) throw InvalidArgument("EM: l must be >= 0");
  if (max_iters < 1) throw InvalidArgument("EM: max_iters must be >= 1");
  if (!(ll_tol >= 0.0)) throw InvalidArgument("EM: ll_tol must be >= 0");
  if (!(d_floor > 0.0)) throw InvalidArgument("EM: d_floor must be > 0");
  if (init_subset < static_cast<std::size_t>(k)) throw InvalidArgument("EM: init_subset must be >= k");
}

EMResult fit(const Matrix& data, const EMConfig& cfg) {
  cfg.validate();
  const Index n = data.rows();
  const Index total = data.cols();
  const Index k = cfg.k;
  const Index l = cfg.l;
  if (n < 1) throw InvalidArgument("EM: samples must have n >= 1");
  if (total < k * (l + 2)) {
    throw InvalidArgument("EM: need at least k*(l+2) = " + std::to_string(k * (l + 2)) +
                          " samples, got " + std::to_string(total));
  }
  if (!data.allFinite()) throw InvalidArgument("EM: data contains NaN or infinite values");

  // Work on centered data; the offset is added back to every mean at the end.
  const Vector offset = data.rowwise().mean();
  const Matrix x = data.colwise() - offset;

  Rng rng = make_rng(cfg.seed);
  Params p = initialize(x, cfg, rng);

  const Index chunks = (total + kChunk - 1) / kChunk;
  Vector sample_loglik(total);
  EMReport report;

  const Vector global_var = x.array().square().rowwise().mean().matrix().cwiseMax(cfg.d_floor);

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    std::vector<ComponentCache> caches;
    caches.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) caches.push_back(make_cache(p, static_cast<std::size_t>(i)));

    std::vector<ChunkStats> partial(static_cast<std::size_t>(chunks));
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
      const Index begin = static_cast<Index>(c) * kChunk;
      const Index end = std::min(total, begin + kChunk);
      partial[c] = e_step_chunk(x, begin, end, p, caches, sample_loglik);
    });
    ChunkStats stats = std::move(partial.front());
    for (std::size_t c = 1; c < partial.size(); ++c) accumulate(stats, partial[c]);

    const double mean_ll = stats.loglik / static_cast<double>(total);
    if (!std::isfinite(mean_ll)) {
      throw ConvergenceError("EM: log-likelihood is not finite", mean_ll);
    }
    report.mean_loglik.push_back(mean_ll);
    if (report.mean_loglik.size() >= 2) {
      const double prev = report.mean_loglik[report.mean_loglik.size() - 2];
      const double gain = (mean_ll - prev) / std::max(std::abs(prev), 1e-300);
      if (gain < cfg.ll_tol) {
        report.converged = true;
        break;
      }
    }

    for (Index i = 0; i < k; ++i) {
      const auto si = static_cast<std::size_t>(i);
      const double mass = stats.mass[si];
      if (mass < kEmptyMass) {
        if (++report.reseeds >= kMaxReseeds) {
          throw ConvergenceError("EM: component collapsed " + std::to_string(kMaxReseeds) + " times",
                                 mean_ll);
        }
        Index worst = 0;
        sample_loglik.minCoeff(&worst);
        p.mean[si] = x.col(worst);
        p.loadings[si] = small_loadings(n, l, rng);
        p.noise[si] = global_var;
        p.weights(i) = 1.0 / static_cast<double>(total);
        continue;
      }
      const Matrix& cross = stats.cross[si];
      const Matrix joint = stats.moment[si].ldlt().solve(cross.transpose()).transpose();  // [A mu]
      p.loadings[si] = joint.leftCols(l);
      p.mean[si] = joint.col(l);
      const Vector explained = (joint.array() * cross.array()).rowwise().sum();
      p.noise[si] = ((stats.square[si] - explained) / mass).cwiseMax(cfg.d_floor);
      p.weights(i) = mass / static_cast<double>(total);
    }
    p.weights /= p.weights.sum();
    ++report.iterations_run;
  }

  std::vector<FactorAnalyzer> components;
  components.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) {
    const auto si = static_cast<std::size_t>(i);
    components.emplace_back(p.mean[si] + offset, p.loadings[si], p.noise[si]);
  }
  return EMResult{MFAModel(std::move(components), p.weights), std::move(report)};
}

void write_em_report_csv(std::ostream& out, const EMReport& report) {
  out << "iter,loglik\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < report.mean_loglik.size(); ++i) {
    out << i << ',' << report.mean_loglik[i] << '\n';
  }
}

const char* to_string(EMInit init) {
  return init == EMInit::kKMeans ? "kmeans" : "random-subset";
}

EMInit parse_em_init(const std::string& text) {
  if (text == "kmeans") return EMInit::kKMeans;
  if (text == "random-subset") return EMInit::kRandomSubset;
  throw InvalidArgument("unknown EM init '" + text + "' (expected kmeans or random-subset)");
}

}  // namespace misconv
