#include "misconv/mask.hpp"

#include <cmath>

#include "misconv/error.hpp"
#include "misconv/random.hpp"

namespace misconv {

Index square_side(const MaskSpec& spec, const ImageShape& shape) {
  return static_cast<Index>(
      std::lround(std::sqrt(spec.area_fraction * static_cast<double>(shape.height * shape.width))));
}

void MaskSpec::validate(const ImageShape& shape) const {
  switch (pattern) {
    case MaskPattern::kSquare: {
      if (!(area_fraction > 0.0 && area_fraction < 1.0)) {
        throw InvalidArgument("square mask area_fraction must lie in (0, 1)");
      }
      const Index side = square_side(*this, shape);
      if (side < 1 || side > shape.height || side > shape.width) {
        throw InvalidArgument("square mask of side " + std::to_string(side) +
                              " does not fit the image");
      }
      break;
    }
    case MaskPattern::kNoise:
      if (!(missing_fraction > 0.0 && missing_fraction < 1.0)) {
        throw InvalidArgument("noise mask missing_fraction must lie in (0, 1)");
      }
      break;
    case MaskPattern::kNone:
      break;
  }
}

MaskedImage apply_mask(const MaskedImage& img, const ImageShape& shape, const MaskSpec& spec,
                       std::uint64_t per_example_seed) {
  if (img.size() != shape.size()) throw DimensionError("image does not match mask geometry");
  spec.validate(shape);
  std::vector<bool> observed = img.observed();
  const Index plane = shape.height * shape.width;
  auto hide = [&](Index y, Index x) {
    for (Index c = 0; c < shape.channels; ++c)
      observed[static_cast<std::size_t>(c * plane + y * shape.width + x)] = false;
  };

  Rng rng = make_rng(derive_seed(spec.seed, per_example_seed));
  switch (spec.pattern) {
    case MaskPattern::kSquare: {
      const Index side = square_side(spec, shape);
      std::uniform_int_distribution<Index> top(0, shape.height - side);
      std::uniform_int_distribution<Index> left(0, shape.width - side);
      const Index y0 = top(rng);
      const Index x0 = left(rng);
      for (Index y = y0; y < y0 + side; ++y)
        for (Index x = x0; x < x0 + side; ++x) hide(y, x);
      break;
    }
    case MaskPattern::kNoise: {
      std::bernoulli_distribution missing(spec.missing_fraction);
      for (Index y = 0; y < shape.height; ++y)
        for (Index x = 0; x < shape.width; ++x)
          if (missing(rng)) hide(y, x);
      break;
    }
    case MaskPattern::kNone:
      break;
  }
  return MaskedImage(img.pixels(), std::move(observed));
}

const char* to_string(MaskPattern pattern) {
  switch (pattern) {
    case MaskPattern::kSquare: return "square";
    case MaskPattern::kNoise: return "noise";
    case MaskPattern::kNone: return "none";
  }
  return "unknown";
}

MaskPattern parse_mask_pattern(const std::string& text) {
  if (text == "square") return MaskPattern::kSquare;
  if (text == "noise") return MaskPattern::kNoise;
  if (text == "none") return MaskPattern::kNone;
  throw InvalidArgument("unknown mask pattern '" + text + "' (square | noise | none)");
}

}  // namespace misconv
