#pragma once

#include <memory>
#include <string>

#include "misconv/conv.hpp"
#include "misconv/mfa.hpp"

namespace misconv {

enum class ImputationKind {
  kZero,         ///< missing pixels set to 0
  kMaskChannel,  ///< zero imputation plus C indicator channels (1 = observed)
  kMfaMean,      ///< conditional mean under an MFA model
};

struct ImputationStrategy {
  ImputationKind kind = ImputationKind::kZero;
  std::shared_ptr<const MFAModel> model;  ///< required for kMfaMean
  ImputationMode mode = ImputationMode::kMixtureMean;
};

struct Imputed {
  Vector pixels;
  Index channels = 0;
};

/// Fills the missing pixels of `img` (geometry `shape`). Observed pixels are
/// passed through unchanged by every strategy.
Imputed impute(const ImputationStrategy& strategy, const MaskedImage& img, const ImageShape& shape);

const char* to_string(ImputationKind kind);
ImputationKind parse_imputation_kind(const std::string& text);
const char* to_string(ImputationMode mode);
ImputationMode parse_imputation_mode(const std::string& text);

}  // namespace misconv
