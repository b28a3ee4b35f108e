#pragma once

#include <cmath>

#include "mmrr/numerics/ops.hpp"

namespace mmrr::num {

// softmax(q k^T / sqrt(d_head)) v, split into `heads` column groups whose
// outputs are concatenated. `mask` (rows of q by rows of k) may be null.
template <class T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, const Mask* mask,
                 std::size_t heads = 1) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: query " + shape_string(q.shape()) + " and key " +
                     shape_string(k.shape()) + " widths differ");
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: key " + shape_string(k.shape()) + " and value " +
                     shape_string(v.shape()) + " lengths differ");
  }
  if (heads == 0 || q.cols() % heads != 0 || v.cols() % heads != 0) {
    throw ShapeError("attention: " + std::to_string(heads) + " heads do not divide widths " +
                     shape_string(q.shape()) + " / " + shape_string(v.shape()));
  }
  const std::size_t dk = q.cols() / heads;
  const std::size_t dv = v.cols() / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dk));
  if (heads == 1) {
    return matmul(softmax_rows(scale(matmul_nt(q, k), inv_sqrt), mask), v);
  }
  std::vector<Var<T>> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto qh = slice_cols(q, h * dk, dk);
    auto kh = slice_cols(k, h * dk, dk);
    auto vh = slice_cols(v, h * dv, dv);
    outs.push_back(matmul(softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt), mask), vh));
  }
  return concat_cols(outs);
}

}  // namespace mmrr::num
