#include "misconv/baselines.hpp"

#include "misconv/error.hpp"

namespace misconv {

Imputed impute(const ImputationStrategy& strategy, const MaskedImage& img, const ImageShape& shape) {
  if (img.size() != shape.size()) {
    throw DimensionError("image has " + std::to_string(img.size()) + " pixels, geometry expects " +
                         std::to_string(shape.size()));
  }
  switch (strategy.kind) {
    case ImputationKind::kZero:
      return Imputed{img.pixels(), shape.channels};
    case ImputationKind::kMaskChannel: {
      const Index n = img.size();
      Vector out(2 * n);
      out.head(n) = img.pixels();
      for (Index i = 0; i < n; ++i) out(n + i) = img.is_observed(i) ? 1.0 : 0.0;
      return Imputed{std::move(out), 2 * shape.channels};
    }
    case ImputationKind::kMfaMean: {
      if (!strategy.model) throw InvalidArgument("mfa_mean imputation needs a model");
      if (strategy.model->dim() != img.size()) {
        throw DimensionError("model dimension " + std::to_string(strategy.model->dim()) +
                             " does not match image size " + std::to_string(img.size()));
      }
      if (img.missing_count() == 0) return Imputed{img.pixels(), shape.channels};
      return Imputed{conditional_mean_imputation(*strategy.model, img, strategy.mode), shape.channels};
    }
  }
  throw InvalidArgument("unknown imputation kind");
}

const char* to_string(ImputationKind kind) {
  switch (kind) {
    case ImputationKind::kZero: return "zero";
    case ImputationKind::kMaskChannel: return "mask_channel";
    case ImputationKind::kMfaMean: return "mfa_mean";
  }
  return "unknown";
}

ImputationKind parse_imputation_kind(const std::string& text) {
  if (text == "zero") return ImputationKind::kZero;
  if (text == "mask_channel") return ImputationKind::kMaskChannel;
  if (text == "mfa_mean") return ImputationKind::kMfaMean;
  throw InvalidArgument("unknown imputation strategy '" + text + "'");
}

const char* to_string(ImputationMode mode) {
  return mode == ImputationMode::kMixtureMean ? "mixture-mean" : "map-component";
}

ImputationMode parse_imputation_mode(const std::string& text) {
  if (text == "mixture-mean") return ImputationMode::kMixtureMean;
  if (text == "map-component") return ImputationMode::kMapComponent;
  throw InvalidArgument("unknown imputation mode '" + text + "' (mixture-mean | map-component)");
}

}  // namespace misconv
