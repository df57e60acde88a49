#pragma once

#include <cstdint>
#include <string>

#include "misconv/conv.hpp"
#include "misconv/mfa.hpp"

namespace misconv {

enum class MaskPattern {
  kSquare,  ///< one axis-aligned square at a uniformly random position
  kNoise,   ///< every pixel missing independently
  kNone,    ///< nothing removed
};

struct MaskSpec {
  MaskPattern pattern = MaskPattern::kSquare;
  double area_fraction = 0.25;
  double missing_fraction = 0.75;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument when a fraction is outside (0, 1) or the square
  /// does not fit `shape`.
  void validate(const ImageShape& shape) const;
};

/// round(sqrt(area_fraction * H * W)).
Index square_side(const MaskSpec& spec, const ImageShape& shape);

/// Hides pixels of `img` according to `spec`, drawing from a generator seeded
/// by (spec.seed, per_example_seed). A spatial location is hidden in all
/// channels at once. Pixels already missing stay missing.
MaskedImage apply_mask(const MaskedImage& img, const ImageShape& shape, const MaskSpec& spec,
                       std::uint64_t per_example_seed);

const char* to_string(MaskPattern pattern);
MaskPattern parse_mask_pattern(const std::string& text);

}  // namespace misconv
