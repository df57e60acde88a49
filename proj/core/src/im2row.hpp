#pragma once

#include "misconv/conv.hpp"

namespace misconv::detail {

/// Patch matrix for one image, transposed: row = output position, column = tap.
void im2row(const double* img, const ImageShape& in, const KernelStack& k, const ImageShape& out,
            Eigen::Ref<Matrix> rows);

}  // namespace misconv::detail
