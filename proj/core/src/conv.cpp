#include "misconv/conv.hpp"

#include <fstream>
#include <string>

#include "binary_io.hpp"
#include "im2row.hpp"
#include "misconv/error.hpp"
#include "misconv/random.hpp"

namespace misconv {
namespace detail {

void im2row(const double* img, const ImageShape& in, const KernelStack& k, const ImageShape& out,
            Eigen::Ref<Matrix> rows) {
  const Index kh = k.kernel_h();
  const Index kw = k.kernel_w();
  const Index sh = k.stride().h;
  const Index sw = k.stride().w;
  const Index ph = k.padding().h;
  const Index pw = k.padding().w;
  for (Index c = 0; c < in.channels; ++c) {
    const double* plane = img + c * in.height * in.width;
    for (Index i = 0; i < kh; ++i) {
      for (Index j = 0; j < kw; ++j) {
        const Index tap = (c * kh + i) * kw + j;
        for (Index oy = 0; oy < out.height; ++oy) {
          const Index iy = oy * sh - ph + i;
          const bool row_ok = iy >= 0 && iy < in.height;
          for (Index ox = 0; ox < out.width; ++ox) {
            const Index ix = ox * sw - pw + j;
            rows(oy * out.width + ox, tap) =
                (row_ok && ix >= 0 && ix < in.width) ? plane[iy * in.width + ix] : 0.0;
          }
        }
      }
    }
  }
}

}  // namespace detail

KernelStack::KernelStack(Index channels, Index kernel_h, Index kernel_w, Matrix weights,
                         Vector bias, Extent2 stride, Extent2 padding)
    : channels_(channels),
      kernel_h_(kernel_h),
      kernel_w_(kernel_w),
      weights_(std::move(weights)),
      bias_(std::move(bias)),
      stride_(stride),
      padding_(padding) {
  if (channels_ < 1 || kernel_h_ < 1 || kernel_w_ < 1) {
    throw InvalidArgument("kernel stack needs C, kh, kw >= 1");
  }
  if (weights_.rows() < 1 || weights_.cols() != channels_ * kernel_h_ * kernel_w_) {
    throw InvalidArgument("kernel weights must be F x (C*kh*kw)");
  }
  if (bias_.size() != weights_.rows()) throw InvalidArgument("kernel bias must have F entries");
  if (stride_.h < 1 || stride_.w < 1) throw InvalidArgument("stride must be positive");
  if (padding_.h < 0 || padding_.w < 0) throw InvalidArgument("padding must be nonnegative");
  if (!weights_.allFinite() || !bias_.allFinite()) throw InvalidArgument("kernel values must be finite");
  squared_ = weights_.cwiseAbs2();
}

KernelStack KernelStack::random(Index filters, Index channels, Index kernel_h, Index kernel_w,
                                Extent2 stride, Extent2 padding, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  const Index taps = channels * kernel_h * kernel_w;
  const double scale = std::sqrt(2.0 / static_cast<double>(taps));
  Matrix w(filters, taps);
  for (Index f = 0; f < filters; ++f)
    for (Index t = 0; t < taps; ++t) w(f, t) = scale * standard_normal(rng);
  return KernelStack(channels, kernel_h, kernel_w, std::move(w), Vector::Zero(filters), stride,
                     padding);
}

ImageShape KernelStack::output_shape(const ImageShape& input) const {
  if (input.channels != channels_) {
    throw DimensionError("input has " + std::to_string(input.channels) +
                         " channels, kernels expect " + std::to_string(channels_));
  }
  const Index span_h = input.height + 2 * padding_.h - kernel_h_;
  const Index span_w = input.width + 2 * padding_.w - kernel_w_;
  if (span_h < 0 || span_w < 0) throw DimensionError("kernel larger than padded input");
  return ImageShape{filters(), span_h / stride_.h + 1, span_w / stride_.w + 1};
}

Matrix convolve_columns(const Eigen::Ref<const Matrix>& inputs, const ImageShape& input,
                        const KernelStack& kernels, const Matrix& filter_weights) {
  if (inputs.rows() != input.size()) {
    throw DimensionError("input vectors have length " + std::to_string(inputs.rows()) +
                         ", geometry expects " + std::to_string(input.size()));
  }
  const ImageShape out = kernels.output_shape(input);
  const Index positions = out.height * out.width;
  const Index taps = filter_weights.cols();
  const Index batch = inputs.cols();

  // One patch buffer reused across columns; each GEMM writes straight into
  // its (positions x F) slice of the output.
  Matrix patches(positions, taps);
  Matrix result(out.size(), batch);
  for (Index b = 0; b < batch; ++b) {
    detail::im2row(inputs.col(b).data(), input, kernels, out, patches);
    Eigen::Map<Matrix> dst(result.col(b).data(), positions, out.channels);
    dst.noalias() = patches * filter_weights.transpose();
  }
  return result;
}

Matrix classic_forward_batch(const Eigen::Ref<const Matrix>& imgs, const ImageShape& input,
                             const KernelStack& kernels, Activation activation) {
  Matrix out = convolve_columns(imgs, input, kernels, kernels.weights());
  const ImageShape shape = kernels.output_shape(input);
  const Index positions = shape.height * shape.width;
  for (Index b = 0; b < out.cols(); ++b) {
    Eigen::Map<Matrix> maps(out.col(b).data(), positions, shape.channels);
    maps.rowwise() += kernels.bias().transpose();
  }
  if (activation == Activation::kRelu) out = out.cwiseMax(0.0);
  return out;
}

Vector classic_forward(const Eigen::Ref<const Vector>& img, const ImageShape& input,
                       const KernelStack& kernels, Activation activation) {
  return classic_forward_batch(img, input, kernels, activation).col(0);
}

void write_kernels(std::ostream& out, const KernelStack& k) {
  out.write("KRN1", 4);
  for (const Index v : {k.filters(), k.channels(), k.kernel_h(), k.kernel_w(), k.stride().h,
                        k.stride().w, k.padding().h, k.padding().w}) {
    detail::write_u32(out, static_cast<std::uint32_t>(v));
  }
  for (Index f = 0; f < k.filters(); ++f)
    for (Index t = 0; t < k.weights().cols(); ++t) detail::write_f64(out, k.weights()(f, t));
  for (Index f = 0; f < k.filters(); ++f) detail::write_f64(out, k.bias()(f));
  if (!out) throw Error("failed writing kernel stack");
}

void save_kernels(const std::filesystem::path& path, const KernelStack& kernels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_kernels(out, kernels);
}

KernelStack read_kernels(std::istream& in) {
  detail::expect_magic(in, "KRN1", "kernel stack");
  std::uint32_t h[8];
  for (auto& v : h) v = detail::read_u32(in, "KRN1 header");
  const Index f = h[0], c = h[1], kh = h[2], kw = h[3];
  if (f == 0 || c == 0 || kh == 0 || kw == 0) throw FormatError("KRN1 header has a zero dimension");
  if (static_cast<double>(f) * c * kh * kw > 1e9) throw FormatError("KRN1 header dimensions too large");
  Matrix w(f, c * kh * kw);
  for (Index i = 0; i < f; ++i)
    for (Index t = 0; t < w.cols(); ++t) w(i, t) = detail::read_f64(in, "KRN1 weights");
  Vector bias(f);
  for (Index i = 0; i < f; ++i) bias(i) = detail::read_f64(in, "KRN1 bias");
  try {
    return KernelStack(c, kh, kw, std::move(w), std::move(bias), {h[4], h[5]}, {h[6], h[7]});
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("KRN1 content invalid: ") + e.what());
  }
}

KernelStack load_kernels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_kernels(in);
}

}  // namespace misconv
