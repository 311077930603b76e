#include <cassert>

#include "kernel_util.hpp"

namespace passkit::kernels::serial {

using namespace detail;

namespace {

// Advances a multi-index over `shape`; returns false after the last element.
bool next_index(std::vector<int64_t>& idx, const Shape& shape) {
  for (int64_t d = static_cast<int64_t>(shape.size()) - 1; d >= 0; --d) {
    if (++idx[d] < shape[d]) return true;
    idx[d] = 0;
  }
  return false;
}

}  // namespace

void binary(BinaryOp op, std::span<const double> a, const Shape& a_shape, std::span<const double> b,
            const Shape& b_shape, std::span<double> out, const Shape& out_shape) {
  const auto sa = broadcast_strides(a_shape, out_shape.size());
  const auto sb = broadcast_strides(b_shape, out_shape.size());
  if (out.empty()) return;
  std::vector<int64_t> idx(out_shape.size(), 0);
  int64_t k = 0;
  do {
    int64_t ia = 0, ib = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    out[k++] = apply(op, a[ia], b[ib]);
  } while (next_index(idx, out_shape));
}

void relu(std::span<const double> in, std::span<double> out) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = relu1(in[i]);
}

void clamp(std::span<const double> in, std::span<double> out, std::optional<double> lo, std::optional<double> hi) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = clamp1(in[i], lo, hi);
}

void cast(std::span<const double> in, std::span<double> out, DType to) {
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = cast1(in[i], to);
}

void quantize(std::span<double> data, DType d) {
  if (d == DType::fp64) return;
  for (double& x : data) x = quantize_value(x, d);
}

void reduce_sum(std::span<const double> in, const Shape& in_shape, const std::vector<bool>& reduced,
                std::span<double> out) {
  Shape kept;
  for (std::size_t d = 0; d < in_shape.size(); ++d)
    if (!reduced[d]) kept.push_back(in_shape[d]);
  const auto ks = strides_of(kept);
  for (double& x : out) x = 0.0;
  if (in.empty()) return;
  std::vector<int64_t> idx(in_shape.size(), 0);
  int64_t k = 0;
  do {
    int64_t o = 0, j = 0;
    for (std::size_t d = 0; d < idx.size(); ++d)
      if (!reduced[d]) o += idx[d] * ks[j++];
    out[o] += in[k++];
  } while (next_index(idx, in_shape));
}

void layer_norm(std::span<const double> x, std::span<const double> weight, std::span<const double> bias,
                int64_t rows, int64_t cols, double eps, std::span<double> out) {
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
  if (out.empty()) return;
  std::vector<int64_t> idx(batch.size(), 0);
  int64_t bo = 0;
  do {
    int64_t ba = 0, bb = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) {
      ba += idx[d] * sa[d];
      bb += idx[d] * sb[d];
    }
    const double* A = a.data() + ba * M * K;
    const double* B = b.data() + bb * K * N;
    double* O = out.data() + bo * M * N;
    for (int64_t m = 0; m < M; ++m)
      for (int64_t n = 0; n < N; ++n) {
        double acc = 0.0;
        for (int64_t k = 0; k < K; ++k) acc += A[m * K + k] * B[k * N + n];
        O[m * N + n] = acc;
      }
    ++bo;
  } while (next_index(idx, batch));
}

void roll(std::span<const double> in, const Shape& shape, const std::vector<int64_t>& shift_per_axis,
          std::span<double> out) {
  const auto st = strides_of(shape);
  if (out.empty()) return;
  std::vector<int64_t> idx(shape.size(), 0);
  int64_t k = 0;
  do {
    int64_t src = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) src += wrap(idx[d] - shift_per_axis[d], shape[d]) * st[d];
    out[k++] = in[src];
  } while (next_index(idx, shape));
}

void slice(std::span<const double> in, const Shape& in_shape, const std::vector<int64_t>& start,
           const std::vector<int64_t>& step, std::span<double> out, const Shape& out_shape) {
  const auto st = strides_of(in_shape);
  if (out.empty()) return;
  std::vector<int64_t> idx(out_shape.size(), 0);
  int64_t k = 0;
  do {
    int64_t src = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) src += (start[d] + idx[d] * step[d]) * st[d];
    out[k++] = in[src];
  } while (next_index(idx, out_shape));
}

void transpose(std::span<const double> in, const Shape& in_shape, const std::vector<int64_t>& perm,
               std::span<double> out) {
  const auto st = strides_of(in_shape);
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  if (out.empty()) return;
  std::vector<int64_t> idx(out_shape.size(), 0);
  int64_t k = 0;
  do {
    int64_t src = 0;
    for (std::size_t d = 0; d < idx.size(); ++d) src += idx[d] * st[perm[d]];
    out[k++] = in[src];
  } while (next_index(idx, out_shape));
}

void cat(const std::vector<std::span<const double>>& ins, const std::vector<Shape>& in_shapes, int64_t dim,
         std::span<double> out, const Shape& out_shape) {
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < dim; ++d) outer *= out_shape[d];
  for (std::size_t d = dim + 1; d < out_shape.size(); ++d) inner *= out_shape[d];
  int64_t k = 0;
  for (int64_t o = 0; o < outer; ++o)
    for (std::size_t t = 0; t < ins.size(); ++t) {
      const int64_t chunk = in_shapes[t][dim] * inner;
      for (int64_t j = 0; j < chunk; ++j) out[k++] = ins[t][o * chunk + j];
    }
}

}  // namespace passkit::kernels::serial
