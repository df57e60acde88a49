#include "misconv/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "misconv/error.hpp"
#include "misconv/random.hpp"

namespace misconv {
namespace {

double accuracy_of(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Index r = 0; r < logits.rows(); ++r) {
    Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

Standardizer Standardizer::fit(const Matrix& rows) {
  Standardizer s;
  s.mean = rows.colwise().mean();
  const Eigen::RowVectorXd var = (rows.rowwise() - s.mean).array().square().colwise().mean();
  s.scale = var.array().sqrt().matrix();
  for (Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale(j) > 1e-12)) s.scale(j) = 1.0;
  return s;
}

void Standardizer::apply(Matrix& rows) const {
  rows.rowwise() -= mean;
  rows.array().rowwise() /= scale.array();
}

std::vector<int> LinearClassifier::predict(Matrix rows) const {
  standardizer.apply(rows);
  Matrix logits = rows * weights.transpose();
  logits.rowwise() += bias.transpose();
  return argmax_rows(logits);
}

double softmax_loss(const Matrix& weights, const Vector& bias, const Matrix& x,
                    const std::vector<int>& labels, double l2, Matrix* grad_weights,
                    Vector* grad_bias) {
  const Index rows = x.rows();
  Matrix logits = x * weights.transpose();
  logits.rowwise() += bias.transpose();
  double loss = 0.0;
  Matrix prob(rows, weights.rows());
  for (Index r = 0; r < rows; ++r) {
    const double peak = logits.row(r).maxCoeff();
    prob.row(r) = (logits.row(r).array() - peak).exp().matrix();
    const double z = prob.row(r).sum();
    prob.row(r) /= z;
    const int y = labels[static_cast<std::size_t>(r)];
    loss += -(logits(r, y) - peak - std::log(z));
  }
  const double inv = 1.0 / static_cast<double>(rows);
  loss = loss * inv + 0.5 * l2 * weights.squaredNorm();
  if (grad_weights != nullptr || grad_bias != nullptr) {
    for (Index r = 0; r < rows; ++r) prob(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    prob *= inv;
    if (grad_weights != nullptr) {
      grad_weights->noalias() = prob.transpose() * x;
      *grad_weights += l2 * weights;
    }
    if (grad_bias != nullptr) *grad_bias = prob.colwise().sum().transpose();
  }
  return loss;
}

TrainingResult train_linear_classifier(Matrix train_features, const std::vector<int>& train_labels,
                                       Matrix test_features, const std::vector<int>& test_labels,
                                       const ClassifierConfig& cfg) {
  if (train_features.rows() != static_cast<Index>(train_labels.size()) ||
      test_features.rows() != static_cast<Index>(test_labels.size())) {
    throw DimensionError("feature rows and label counts differ");
  }
  if (test_features.cols() != train_features.cols()) throw DimensionError("train/test feature widths differ");
  if (!train_features.allFinite() || !test_features.allFinite()) {
    throw InvalidArgument("features must be finite");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
    throw InvalidArgument("classifier needs epochs >= 1, batch_size >= 1, learning_rate > 0");
  }
  const std::set<int> classes_seen(train_labels.begin(), train_labels.end());
  if (classes_seen.size() < 2) throw InvalidArgument("classifier needs at least two classes");
  if (*classes_seen.begin() < 0) throw InvalidArgument("labels must be nonnegative");
  int max_label = *classes_seen.rbegin();
  for (const int y : test_labels) max_label = std::max(max_label, y);
  const Index classes = max_label + 1;

  TrainingResult result;
  LinearClassifier& model = result.model;
  model.standardizer = Standardizer::fit(train_features);
  model.standardizer.apply(train_features);
  model.standardizer.apply(test_features);
  model.weights = Matrix::Zero(classes, train_features.cols());
  model.bias = Vector::Zero(classes);

  const Index n = train_features.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  Matrix grad_w;
  Vector grad_b;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng = make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int batches = 0;
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index size = std::min<Index>(cfg.batch_size, n - start);
      Matrix xb(size, train_features.cols());
      std::vector<int> yb(static_cast<std::size_t>(size));
      for (Index r = 0; r < size; ++r) {
        const Index src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = train_features.row(src);
        yb[static_cast<std::size_t>(r)] = train_labels[static_cast<std::size_t>(src)];
      }
      const double loss = softmax_loss(model.weights, model.bias, xb, yb, cfg.l2, &grad_w, &grad_b);
      if (!std::isfinite(loss)) {
        throw DivergenceError("classifier loss diverged at epoch " + std::to_string(epoch) +
                              "; lower the learning rate");
      }
      model.weights -= cfg.learning_rate * grad_w;
      model.bias -= cfg.learning_rate * grad_b;
      loss_sum += loss;
      ++batches;
    }
    result.train_loss.push_back(loss_sum / batches);

    Matrix logits = test_features * model.weights.transpose();
    logits.rowwise() += model.bias.transpose();
    result.test_predictions = argmax_rows(logits);
    result.test_accuracy.push_back(accuracy_of(result.test_predictions, test_labels));
  }
  result.final_test_accuracy = result.test_accuracy.back();
  return result;
}

}  // namespace misconv
