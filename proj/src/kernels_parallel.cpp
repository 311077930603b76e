#include "kernel_util.hpp"

namespace passkit::kernels::parallel {

using namespace detail;

namespace {

// Offset of flat output element `flat` (row-major over `shape`) under `strides`.
inline int64_t offset_of(int64_t flat, const Shape& shape, const std::vector<int64_t>& strides) {
  int64_t off = 0;
  for (int64_t d = static_cast<int64_t>(shape.size()) - 1; d >= 0; --d) {
    off += (flat % shape[d]) * strides[d];
    flat /= shape[d];
  }
  return off;
}

inline int64_t size_of(std::span<const double> s) { return static_cast<int64_t>(s.size()); }

}  // namespace

void binary(BinaryOp op, std::span<const double> a, const Shape& a_shape, std::span<const double> b,
            const Shape& b_shape, std::span<double> out, const Shape& out_shape) {
  const auto sa = broadcast_strides(a_shape, out_shape.size());
  const auto sb = broadcast_strides(b_shape, out_shape.size());
  const int64_t n = static_cast<int64_t>(out.size());
  if (a_shape == out_shape && b_shape == out_shape) {
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = apply(op, a[i], b[i]);
    return;
  }
  // Rows of the innermost output dim; offsets decoded once per row.
  const int64_t inner = out_shape.empty() ? 1 : out_shape.back();
  const int64_t rows = inner == 0 ? 0 : n / inner;
  const int64_t ia = sa.empty() ? 0 : sa.back(), ib = sb.empty() ? 0 : sb.back();
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t base = r * inner;
    const int64_t oa = offset_of(base, out_shape, sa), ob = offset_of(base, out_shape, sb);
    for (int64_t j = 0; j < inner; ++j) out[base + j] = apply(op, a[oa + j * ia], b[ob + j * ib]);
  }
}

void relu(std::span<const double> in, std::span<double> out) {
  const int64_t n = size_of(in);
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = relu1(in[i]);
}

void clamp(std::span<const double> in, std::span<double> out, std::optional<double> lo, std::optional<double> hi) {
  const int64_t n = size_of(in);
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = clamp1(in[i], lo, hi);
}

void cast(std::span<const double> in, std::span<double> out, DType to) {
  const int64_t n = size_of(in);
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = cast1(in[i], to);
}

void quantize(std::span<double> data, DType d) {
  if (d == DType::fp64) return;
  const int64_t n = static_cast<int64_t>(data.size());
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) data[i] = quantize_value(data[i], d);
}

void reduce_sum(std::span<const double> in, const Shape& in_shape, const std::vector<bool>& reduced,
                std::span<double> out) {
  const auto st = strides_of(in_shape);
  Shape kept, red;
  std::vector<int64_t> kept_st, red_st;
  for (std::size_t d = 0; d < in_shape.size(); ++d) {
    (reduced[d] ? red : kept).push_back(in_shape[d]);
    (reduced[d] ? red_st : kept_st).push_back(st[d]);
  }
  const int64_t n = static_cast<int64_t>(out.size());
  const int64_t m = numel(red);
#pragma omp parallel for if (n * m >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const int64_t base = offset_of(i, kept, kept_st);
    double acc = 0.0;
    for (int64_t j = 0; j < m; ++j) acc += in[base + offset_of(j, red, red_st)];
    out[i] = acc;
  }
}

void layer_norm(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                int64_t rows, int64_t cols, double eps, std::span<double> out) {
#pragma omp parallel for if (rows * cols >= kParallelGrain) schedule(static)
  for (int64_t r = 0; r < rows; ++r)
    layer_norm_row(x.data() + r * cols, weight.data(), bias.data(), cols, eps, out.data() + r * cols);
}

void matmul(std::span<const double> a, const Shape& a_shape, std::span<const double> b, const Shape& b_shape,
            std::span<double> out, const Shape& out_shape) {
  const std::size_t r = out_shape.size();
  const int64_t M = out_shape[r - 2], N = out_shape[r - 1], K = a_shape.back();
  const Shape batch(out_shape.begin(), out_shape.end() - 2);
  const auto sa = broadcast_strides(Shape(a_shape.begin(), a_shape.end() - 2), batch.size());
  const auto sb = broadcast_strides(Shape(b_shape.begin(), b_shape.end() - 2), batch.size());
  const int64_t n = static_cast<int64_t>(out.size());
#pragma omp parallel for if (n * K >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const int64_t bo = i / (M * N);
    const int64_t m = (i / N) % M, col = i % N;
    const double* A = a.data() + offset_of(bo, batch, sa) * M * K;
    const double* B = b.data() + offset_of(bo, batch, sb) * K * N;
    double acc = 0.0;
    for (int64_t k = 0; k < K; ++k) acc += A[m * K + k] * B[k * N + col];
    out[i] = acc;
  }
}

void roll(std::span<const double> in, const Shape& shape, const std::vector<int64_t>& shift_per_axis,
          std::span<double> out) {
  const auto st = strides_of(shape);
  const int64_t n = size_of(in);
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    int64_t flat = i, src = 0;
    for (int64_t d = static_cast<int64_t>(shape.size()) - 1; d >= 0; --d) {
      src += wrap(flat % shape[d] - shift_per_axis[d], shape[d]) * st[d];
      flat /= shape[d];
    }
    out[i] = in[src];
  }
}

void slice(std::span<const double> in, const Shape& in_shape, const std::vector<int64_t>& start,
           const std::vector<int64_t>& step, std::span<double> out, const Shape& out_shape) {
  const auto st = strides_of(in_shape);
  const int64_t n = static_cast<int64_t>(out.size());
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    int64_t flat = i, src = 0;
    for (int64_t d = static_cast<int64_t>(out_shape.size()) - 1; d >= 0; --d) {
      src += (start[d] + (flat % out_shape[d]) * step[d]) * st[d];
      flat /= out_shape[d];
    }
    out[i] = in[src];
  }
}

void transpose(std::span<const double> in, const Shape& in_shape, const std::vector<int64_t>& perm,
               std::span<double> out) {
  const auto st = strides_of(in_shape);
  Shape out_shape(perm.size());
  std::vector<int64_t> src_st(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out_shape[i] = in_shape[perm[i]];
    src_st[i] = st[perm[i]];
  }
  const int64_t n = size_of(in);
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) out[i] = in[offset_of(i, out_shape, src_st)];
}

void cat(const std::vector<std::span<const double>>& ins, const std::vector<Shape>& in_shapes, int64_t dim,
         std::span<double> out, const Shape& out_shape) {
  int64_t inner = 1;
  for (std::size_t d = dim + 1; d < out_shape.size(); ++d) inner *= out_shape[d];
  const int64_t row = out_shape[dim] * inner;
  std::vector<int64_t> begin(ins.size() + 1, 0);
  for (std::size_t t = 0; t < ins.size(); ++t) begin[t + 1] = begin[t] + in_shapes[t][dim] * inner;
  const int64_t n = static_cast<int64_t>(out.size());
#pragma omp parallel for if (n >= kParallelGrain) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const int64_t o = i / row, j = i % row;
    std::size_t t = 0;
    while (j >= begin[t + 1]) ++t;
    const int64_t chunk = begin[t + 1] - begin[t];
    out[i] = ins[t][o * chunk + (j - begin[t])];
  }
}

}  // namespace passkit::kernels::parallel
