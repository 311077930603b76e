#pragma once

#include <span>
#include <vector>

#include "passkit/dtype.hpp"

namespace passkit {

// Round-to-nearest-even projection onto the value set of `d`.
// Finite overflow saturates to +-max finite; infinities and NaN pass through.
double quantize_value(double x, DType d);
std::vector<double> quantize_dtype(std::span<const double> v, DType d);

// Largest finite value of a floating dtype.
double max_finite(DType d);

}  // namespace passkit
