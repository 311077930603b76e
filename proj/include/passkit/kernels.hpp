#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "passkit/dtype.hpp"

namespace passkit::kernels {

enum class Backend { serial, parallel };
enum class BinaryOp { add, sub, mul, div };

// Straightforward multi-index loops; the reference the parallel backend is tested against.
namespace serial {
#include "passkit/kernel_decls.inc"
}

// OpenMP over output elements. Per-element accumulation order matches the serial
// backend, so results are bitwise identical.
namespace parallel {
#include "passkit/kernel_decls.inc"
}

// Elements below which the parallel backend stays on one thread.
inline constexpr int64_t kParallelGrain = 4096;

}  // namespace passkit::kernels
