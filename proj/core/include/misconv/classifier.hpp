#pragma once

#include <cstdint>
#include <vector>

#include "misconv/mfa.hpp"

namespace misconv {

struct ClassifierConfig {
  double learning_rate = 0.01;
  int epochs = 15;
  int batch_size = 64;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

/// Per-feature z-scoring fitted on training rows; constant features keep scale 1.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer fit(const Matrix& rows);
  void apply(Matrix& rows) const;
};

/// Multinomial logistic regression on standardized features.
struct LinearClassifier {
  Standardizer standardizer;
  Matrix weights;  ///< classes x features
  Vector bias;

  /// Predicted class per row of raw (unstandardized) features.
  std::vector<int> predict(Matrix rows) const;
};

struct TrainingResult {
  LinearClassifier model;
  std::vector<double> train_loss;      ///< mean minibatch loss per epoch
  std::vector<double> test_accuracy;   ///< per epoch
  double final_test_accuracy = 0.0;
  std::vector<int> test_predictions;
};

/// Mean softmax cross-entropy of rows `x` (already standardized) plus
/// 0.5 * l2 * |W|^2, and its gradient when the outputs are non-null.
double softmax_loss(const Matrix& weights, const Vector& bias, const Matrix& x,
                    const std::vector<int>& labels, double l2, Matrix* grad_weights = nullptr,
                    Vector* grad_bias = nullptr);

/// Mini-batch gradient descent with a seeded shuffle per epoch. Standardization
/// is fitted on the training rows only. Throws InvalidArgument when fewer than
/// two classes are present and DivergenceError when the loss stops being finite.
TrainingResult train_linear_classifier(Matrix train_features, const std::vector<int>& train_labels,
                                       Matrix test_features, const std::vector<int>& test_labels,
                                       const ClassifierConfig& cfg);

}  // namespace misconv
