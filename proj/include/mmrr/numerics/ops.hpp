#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "mmrr/numerics/autograd.hpp"

// Differentiable operators over rank-2 tensors. Every op checks shapes and
// throws ShapeError naming both operands on mismatch.
namespace mmrr::num {

// Clamp applied to probabilities before taking logs in cross-entropy.
inline constexpr double kLogClamp = 1e-9;

namespace detail {

template <class T>
void require_matrix(const Var<T>& a, const char* op) {
  if (a.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
  }
}

template <class T>
void require_same(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <class T>
Tensor<T>* grad_of(Node<T>& self, std::size_t i) {
  Node<T>& p = *self.parents[i];
  return p.requires_grad ? &p.ensure_grad() : nullptr;
}

}  // namespace detail

template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul shape mismatch: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> out = Tensor<T>::matrix(m, n);
  kernel::gemm_nn(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n,
                  false);
  return make_op<T>(std::move(out), {a, b}, "matmul", [m, k, n](Node<T>& self) {
    const T* g = self.grad.data().data();
    const Node<T>& A = *self.parents[0];
    const Node<T>& B = *self.parents[1];
    if (auto* ga = detail::grad_of(self, 0))
      kernel::gemm_nt(g, B.value.data().data(), ga->data().data(), m, n, k, true);
    if (auto* gb = detail::grad_of(self, 1))
      kernel::gemm_tn(A.value.data().data(), g, gb->data().data(), k, m, n, true);
  });
}

// a * b^T
template <class T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  detail::require_matrix(a, "matmul_nt");
  detail::require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt shape mismatch: " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor<T> out = Tensor<T>::matrix(m, n);
  kernel::gemm_nt(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n,
                  false);
  return make_op<T>(std::move(out), {a, b}, "matmul_nt", [m, k, n](Node<T>& self) {
    const T* g = self.grad.data().data();
    const Node<T>& A = *self.parents[0];
    const Node<T>& B = *self.parents[1];
    if (auto* ga = detail::grad_of(self, 0))
      kernel::gemm_nn(g, B.value.data().data(), ga->data().data(), m, n, k, true);
    if (auto* gb = detail::grad_of(self, 1))
      kernel::gemm_tn(g, A.value.data().data(), gb->data().data(), n, m, k, true);
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  detail::require_matrix(a, "transpose");
  return make_op<T>(transpose(a.value()), {a}, "transpose", [](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < self.grad.rows(); ++i)
      for (std::size_t j = 0; j < self.grad.cols(); ++j) (*ga)(j, i) += self.grad(i, j);
  });
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "add");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op<T>(std::move(out), {a, b}, "add", [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (auto* g = detail::grad_of(self, p))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
  });
}

// Elementwise product.
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op<T>(std::move(out), {a, b}, "mul", [](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* ga = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
    if (auto* gb = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * av[i];
  });
}

// a + 1 x c bias added to every row.
template <class T>
Var<T> add_row(const Var<T>& a, const Var<T>& bias) {
  detail::require_matrix(a, "add_row");
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row shape mismatch: " + shape_string(a.shape()) + " + " +
                     shape_string(bias.shape()));
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bias.value()(0, j);
  return make_op<T>(std::move(out), {a, bias}, "add_row", [](Node<T>& self) {
    if (auto* ga = detail::grad_of(self, 0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i];
    if (auto* gb = detail::grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.rows(); ++i)
        for (std::size_t j = 0; j < self.grad.cols(); ++j) (*gb)(0, j) += self.grad(i, j);
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  Tensor<T> out = a.value();
  for (auto& v : out.storage()) v *= s;
  return make_op<T>(std::move(out), {a}, "scale", [s](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s * self.grad[i];
  });
}

// Tanh-approximated GELU.
template <class T>
Var<T> gelu(const Var<T>& a) {
  constexpr T kC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = static_cast<T>(0.044715);
  Tensor<T> out = a.value();
  for (auto& x : out.storage()) x = T(0.5) * x * (T(1) + std::tanh(kC * (x + kA * x * x * x)));
  return make_op<T>(std::move(out), {a}, "gelu", [](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    const auto& xv = self.parents[0]->value;
    for (std::size_t i = 0; i < ga->size(); ++i) {
      const T x = xv[i];
      const T t = std::tanh(kC * (x + kA * x * x * x));
      const T d = T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * kC * (T(1) + T(3) * kA * x * x);
      (*ga)[i] += d * self.grad[i];
    }
  });
}

// Row-wise layer normalisation with 1 x c gain and bias.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gain, const Var<T>& bias, T eps = T(1e-5)) {
  detail::require_matrix(x, "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    throw ShapeError("layer_norm shape mismatch: " + shape_string(x.shape()) + " with gain " +
                     shape_string(gain.shape()));
  }
  Tensor<T> xhat = Tensor<T>::matrix(r, c);
  std::vector<T> rstd(r);
  Tensor<T> out = Tensor<T>::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    T mean{};
    for (std::size_t j = 0; j < c; ++j) mean += x.value()(i, j);
    mean /= static_cast<T>(c);
    T var{};
    for (std::size_t j = 0; j < c; ++j) {
      const T d = x.value()(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<T>(c);
    rstd[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat(i, j) = (x.value()(i, j) - mean) * rstd[i];
      out(i, j) = xhat(i, j) * gain.value()(0, j) + bias.value()(0, j);
    }
  }
  return make_op<T>(std::move(out), {x, gain, bias}, "layer_norm",
                    [xhat = std::move(xhat), rstd = std::move(rstd), r, c](Node<T>& self) {
                      const auto& g = self.parents[1]->value;
                      auto* gx = detail::grad_of(self, 0);
                      auto* gg = detail::grad_of(self, 1);
                      auto* gb = detail::grad_of(self, 2);
                      std::vector<T> dxhat(c);
                      for (std::size_t i = 0; i < r; ++i) {
                        T sum_d{}, sum_dx{};
                        for (std::size_t j = 0; j < c; ++j) {
                          const T dy = self.grad(i, j);
                          if (gg) (*gg)(0, j) += dy * xhat(i, j);
                          if (gb) (*gb)(0, j) += dy;
                          dxhat[j] = dy * g(0, j);
                          sum_d += dxhat[j];
                          sum_dx += dxhat[j] * xhat(i, j);
                        }
                        if (!gx) continue;
                        const T inv_n = T(1) / static_cast<T>(c);
                        for (std::size_t j = 0; j < c; ++j) {
                          (*gx)(i, j) +=
                              rstd[i] * inv_n * (static_cast<T>(c) * dxhat[j] - sum_d - xhat(i, j) * sum_dx);
                        }
                      }
                    });
}

// Row softmax with max-shift. Masked positions get probability 0; a row with
// no unmasked position is an error.
template <class T>
Var<T> softmax_rows(const Var<T>& m, const Mask* mask = nullptr) {
  detail::require_matrix(m, "softmax_rows");
  const std::size_t r = m.rows(), c = m.cols();
  if (mask && (mask->rows() != r || mask->cols() != c)) {
    throw ShapeError("softmax_rows mask " + shape_string({mask->rows(), mask->cols()}) +
                     " does not match " + shape_string(m.shape()));
  }
  Tensor<T> out = Tensor<T>::matrix(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && !(*mask)(i, j)) continue;
      mx = std::max(mx, m.value()(i, j));
      any = true;
    }
    if (!any) throw std::domain_error("softmax_rows: row " + std::to_string(i) + " is fully masked");
    T z{};
    for (std::size_t j = 0; j < c; ++j) {
      if (mask && !(*mask)(i, j)) continue;
      out(i, j) = std::exp(m.value()(i, j) - mx);
      z += out(i, j);
    }
    for (std::size_t j = 0; j < c; ++j) out(i, j) /= z;
  }
  return make_op<T>(std::move(out), {m}, "softmax_rows", [r, c](Node<T>& self) {
    auto* gm = detail::grad_of(self, 0);
    const auto& y = self.value;
    for (std::size_t i = 0; i < r; ++i) {
      T dot{};
      for (std::size_t j = 0; j < c; ++j) dot += y(i, j) * self.grad(i, j);
      for (std::size_t j = 0; j < c; ++j) (*gm)(i, j) += y(i, j) * (self.grad(i, j) - dot);
    }
  });
}

// Mean over included rows of -sum_j target * log(max(probs, kLogClamp)).
// Returns 0 (with no gradient flow) when every row is excluded.
template <class T>
Var<T> cross_entropy_rows(const Var<T>& probs, const Tensor<T>& target,
                          const std::vector<bool>& row_mask) {
  detail::require_matrix(probs, "cross_entropy_rows");
  if (target.shape() != probs.shape() || row_mask.size() != probs.rows()) {
    throw ShapeError("cross_entropy_rows shape mismatch: probs " + shape_string(probs.shape()) +
                     " vs target " + shape_string(target.shape()) + " with " +
                     std::to_string(row_mask.size()) + " row flags");
  }
  const std::size_t r = probs.rows(), c = probs.cols();
  const T eps = static_cast<T>(kLogClamp);
  std::size_t active = 0;
  T total{};
  for (std::size_t i = 0; i < r; ++i) {
    if (!row_mask[i]) continue;
    ++active;
    for (std::size_t j = 0; j < c; ++j) {
      const T t = target(i, j);
      if (t != T{}) total -= t * std::log(std::max(probs.value()(i, j), eps));
    }
  }
  const T inv = active ? T(1) / static_cast<T>(active) : T{};
  return make_op<T>(Tensor<T>::scalar(total * inv), {probs}, "cross_entropy_rows",
                    [target, row_mask, inv, r, c, eps](Node<T>& self) {
                      auto* gp = detail::grad_of(self, 0);
                      const T g = self.grad[0] * inv;
                      const auto& p = self.parents[0]->value;
                      for (std::size_t i = 0; i < r; ++i) {
                        if (!row_mask[i]) continue;
                        for (std::size_t j = 0; j < c; ++j) {
                          const T t = target(i, j);
                          if (t != T{} && p(i, j) > eps) (*gp)(i, j) -= g * t / p(i, j);
                        }
                      }
                    });
}

// Cross-entropy of row softmax(logits) against target, computed from the
// log-sum-exp so it stays smooth and finite however small a probability is.
// Same masking rules as softmax_rows and the same row averaging as
// cross_entropy_rows; target mass on a masked entry is an error.
template <class T>
Var<T> softmax_cross_entropy_rows(const Var<T>& logits, const Tensor<T>& target, const std::vector<bool>& row_mask,
                                  const Mask* mask = nullptr) {
  detail::require_matrix(logits, "softmax_cross_entropy_rows");
  const std::size_t r = logits.rows(), c = logits.cols();
  if (target.shape() != logits.shape() || row_mask.size() != r || (mask && (mask->rows() != r || mask->cols() != c))) {
    throw ShapeError("softmax_cross_entropy_rows shape mismatch: logits " + shape_string(logits.shape()) +
                     " vs target " + shape_string(target.shape()) + " with " + std::to_string(row_mask.size()) +
                     " row flags");
  }
  const auto allowed = [mask](std::size_t i, std::size_t j) { return !mask || (*mask)(i, j); };
  Tensor<T> probs = Tensor<T>::matrix(r, c);
  std::vector<T> mass(r, T{});
  std::size_t active = 0;
  T total{};
  for (std::size_t i = 0; i < r; ++i) {
    if (!row_mask[i]) continue;
    ++active;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (allowed(i, j)) mx = std::max(mx, logits.value()(i, j));
    if (mx == -std::numeric_limits<T>::infinity())
      throw std::domain_error("softmax_cross_entropy_rows: row " + std::to_string(i) + " is fully masked");
    T z{};
    for (std::size_t j = 0; j < c; ++j)
      if (allowed(i, j)) z += (probs(i, j) = std::exp(logits.value()(i, j) - mx));
    const T log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) {
      probs(i, j) /= z;
      const T t = target(i, j);
      if (t == T{}) continue;
      if (!allowed(i, j))
        throw std::domain_error("softmax_cross_entropy_rows: target on masked entry (" + std::to_string(i) + ", " +
                                std::to_string(j) + ")");
      total -= t * (logits.value()(i, j) - log_z);
      mass[i] += t;
    }
  }
  const T inv = active ? T(1) / static_cast<T>(active) : T{};
  return make_op<T>(Tensor<T>::scalar(total * inv), {logits}, "softmax_cross_entropy_rows",
                    [target, row_mask, probs = std::move(probs), mass = std::move(mass), inv, r, c](Node<T>& self) {
                      auto* gl = detail::grad_of(self, 0);
                      const T g = self.grad[0] * inv;
                      for (std::size_t i = 0; i < r; ++i) {
                        if (!row_mask[i]) continue;
                        for (std::size_t j = 0; j < c; ++j) (*gl)(i, j) += g * (mass[i] * probs(i, j) - target(i, j));
                      }
                    });
}

template <class T>
Var<T> gather_rows(const Var<T>& a, const std::vector<std::size_t>& idx) {
  detail::require_matrix(a, "gather_rows");
  const std::size_t c = a.cols();
  Tensor<T> out = Tensor<T>::matrix(idx.size(), c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= a.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) + " outside " +
                              shape_string(a.shape()));
    }
    std::copy_n(a.value().row(idx[i]).begin(), c, out.row(i).begin());
  }
  return make_op<T>(std::move(out), {a}, "gather_rows", [idx, c](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) (*ga)(idx[i], j) += self.grad(i, j);
  });
}

template <class T>
Var<T> gather_cols(const Var<T>& a, const std::vector<std::size_t>& idx) {
  detail::require_matrix(a, "gather_cols");
  const std::size_t r = a.rows();
  Tensor<T> out = Tensor<T>::matrix(r, idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= a.cols()) {
      throw std::out_of_range("gather_cols: index " + std::to_string(idx[j]) + " outside " +
                              shape_string(a.shape()));
    }
    for (std::size_t i = 0; i < r; ++i) out(i, j) = a.value()(i, idx[j]);
  }
  return make_op<T>(std::move(out), {a}, "gather_cols", [idx, r](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < idx.size(); ++j) (*ga)(i, idx[j]) += self.grad(i, j);
  });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t len) {
  detail::require_matrix(a, "slice_cols");
  if (start + len > a.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") outside " + shape_string(a.shape()));
  }
  const std::size_t r = a.rows();
  Tensor<T> out = Tensor<T>::matrix(r, len);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < len; ++j) out(i, j) = a.value()(i, start + j);
  return make_op<T>(std::move(out), {a}, "slice_cols", [start, len, r](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j) (*ga)(i, start + j) += self.grad(i, j);
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t r = parts.front().rows();
  std::size_t c = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != r) {
      throw ShapeError("concat_cols row mismatch: " + shape_string(parts.front().shape()) + " vs " +
                       shape_string(p.shape()));
    }
    c += p.cols();
  }
  Tensor<T> out = Tensor<T>::matrix(r, c);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) out(i, off + j) = p.value()(i, j);
    off += p.cols();
  }
  return make_op<T>(std::move(out), parts, "concat_cols", [offsets, r](Node<T>& self) {
    for (std::size_t k = 0; k < offsets.size(); ++k) {
      auto* g = detail::grad_of(self, k);
      if (!g) continue;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < g->cols(); ++j) (*g)(i, j) += self.grad(i, offsets[k] + j);
    }
  });
}

// Zeroes rows whose flag is false.
template <class T>
Var<T> mask_rows(const Var<T>& a, const std::vector<bool>& keep) {
  detail::require_matrix(a, "mask_rows");
  if (keep.size() != a.rows()) {
    throw ShapeError("mask_rows: " + std::to_string(keep.size()) + " flags for " +
                     shape_string(a.shape()));
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    if (!keep[i]) std::fill(out.row(i).begin(), out.row(i).end(), T{});
  return make_op<T>(std::move(out), {a}, "mask_rows", [keep](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i])
        for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += self.grad(i, j);
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T s{};
  for (T v : a.value().data()) s += v;
  return make_op<T>(Tensor<T>::scalar(s), {a}, "sum", [](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    for (auto& g : ga->storage()) g += self.grad[0];
  });
}

template <class T>
Var<T> sum_squares(const Var<T>& a) {
  T s{};
  for (T v : a.value().data()) s += v * v;
  return make_op<T>(Tensor<T>::scalar(s), {a}, "sum_squares", [](Node<T>& self) {
    auto* ga = detail::grad_of(self, 0);
    const auto& av = self.parents[0]->value;
    for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += T(2) * av[i] * self.grad[0];
  });
}

// Sum of scalar nodes; an empty list yields a constant zero.
template <class T>
Var<T> add_scalars(const std::vector<Var<T>>& terms) {
  if (terms.empty()) return constant(Tensor<T>::scalar(T{}));
  T s{};
  for (const auto& t : terms) s += t.value().item();
  return make_op<T>(Tensor<T>::scalar(s), terms, "add_scalars", [](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k)
      if (auto* g = detail::grad_of(self, k)) (*g)[0] += self.grad[0];
  });
}

}  // namespace mmrr::num
