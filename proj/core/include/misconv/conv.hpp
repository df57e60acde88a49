#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include <Eigen/Core>

#include "misconv/mfa.hpp"

namespace misconv {

/// Channel-major (C, H, W) geometry; pixel (c, y, x) lives at (c*H + y)*W + x.
struct ImageShape {
  Index channels = 1;
  Index height = 1;
  Index width = 1;

  Index size() const noexcept { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

struct Extent2 {
  Index h = 1;
  Index w = 1;
  bool operator==(const Extent2&) const = default;
};

enum class Activation { kRelu, kNone };

/// F filters of shape C x kh x kw with bias, stride and zero padding.
/// Applied as cross-correlation (no kernel flip).
class KernelStack {
 public:
  /// `weights` is F x (C*kh*kw); column (c*kh + i)*kw + j holds tap (c, i, j).
  KernelStack(Index channels, Index kernel_h, Index kernel_w, Matrix weights, Vector bias,
              Extent2 stride = {1, 1}, Extent2 padding = {0, 0});

  /// Entries drawn i.i.d. N(0, 2 / (C*kh*kw)), zero bias.
  static KernelStack random(Index filters, Index channels, Index kernel_h, Index kernel_w,
                            Extent2 stride, Extent2 padding, std::uint64_t seed);

  Index filters() const noexcept { return weights_.rows(); }
  Index channels() const noexcept { return channels_; }
  Index kernel_h() const noexcept { return kernel_h_; }
  Index kernel_w() const noexcept { return kernel_w_; }
  Extent2 stride() const noexcept { return stride_; }
  Extent2 padding() const noexcept { return padding_; }
  const Matrix& weights() const noexcept { return weights_; }
  const Matrix& squared_weights() const noexcept { return squared_; }
  const Vector& bias() const noexcept { return bias_; }

  double weight(Index f, Index c, Index i, Index j) const {
    return weights_(f, (c * kernel_h_ + i) * kernel_w_ + j);
  }

  /// Output geometry (F, H', W') for `input`; throws DimensionError when the
  /// channel count disagrees or the kernel does not fit.
  ImageShape output_shape(const ImageShape& input) const;

 private:
  Index channels_;
  Index kernel_h_;
  Index kernel_w_;
  Matrix weights_;
  Matrix squared_;
  Vector bias_;
  Extent2 stride_;
  Extent2 padding_;
};

/// Convolves every column of `inputs` (n x B, n = input.size()) with the
/// filter bank `filter_weights` (a KernelStack weight matrix or its square)
/// using the geometry of `kernels`. No bias. Result is (F*H'*W') x B.
Matrix convolve_columns(const Eigen::Ref<const Matrix>& inputs, const ImageShape& input,
                        const KernelStack& kernels, const Matrix& filter_weights);

/// Classic convolution with bias and optional ReLU; output flattened F x H' x W'.
Vector classic_forward(const Eigen::Ref<const Vector>& img, const ImageShape& input,
                       const KernelStack& kernels, Activation activation);

/// Column-wise `classic_forward` over a batch (n x B).
Matrix classic_forward_batch(const Eigen::Ref<const Matrix>& imgs, const ImageShape& input,
                             const KernelStack& kernels, Activation activation);

// "KRN1" container, little-endian: magic, u32 F, C, kh, kw, stride_h,
// stride_w, pad_h, pad_w, then f64 weights row-major (F, C, kh, kw), f64 biases.
void write_kernels(std::ostream& out, const KernelStack& kernels);
void save_kernels(const std::filesystem::path& path, const KernelStack& kernels);
KernelStack read_kernels(std::istream& in);
KernelStack load_kernels(const std::filesystem::path& path);

}  // namespace misconv
