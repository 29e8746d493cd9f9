#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "plural/tensor.hpp"
#include "plural/threading.hpp"

namespace plural {

// ---------------------------------------------------------------------------
// raw kernels (deterministic: every output element is owned by one iteration)
// ---------------------------------------------------------------------------

namespace kernels {

// C[m x n] += A[m x k] * B[k x n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, [=](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = arow[p];
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C[m x n] += A[m x k] * B^T, B stored [n x k]
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, [=](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      const T* arow = a + i * k;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        T acc = T(0);
        for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
        crow[j] += acc;
      }
    }
  });
}

// C[m x n] += A^T * B, A stored [k x m], B stored [k x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, [=](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[p * m + i];
        const T* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

}  // namespace kernels

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

template <typename T>
void attach(Tensor<T>& out, std::vector<Tensor<T>> parents,
            std::function<void(TensorNode<T>&)> fn) {
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return;
  out.set_requires_grad(true);
  out.node().parents = std::move(parents);
  out.node().backward_fn = std::move(fn);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// element-wise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  detail::attach(out, {a, b}, [](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    auto& pb = o.parents[1];
    const std::size_t m = o.data.size();
    if (pa.requires_grad())
      for (std::size_t i = 0; i < m; ++i) pa.grad()[i] += o.grad[i];
    if (pb.requires_grad())
      for (std::size_t i = 0; i < m; ++i) pb.grad()[i] += o.grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  detail::attach(out, {a, b}, [](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    auto& pb = o.parents[1];
    const std::size_t m = o.data.size();
    if (pa.requires_grad())
      for (std::size_t i = 0; i < m; ++i) pa.grad()[i] += o.grad[i] * pb.data()[i];
    if (pb.requires_grad())
      for (std::size_t i = 0; i < m; ++i) pb.grad()[i] += o.grad[i] * pa.data()[i];
  });
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * s;
  detail::attach(out, {a}, [s](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    if (!pa.requires_grad()) return;
    const std::size_t m = o.data.size();
    for (std::size_t i = 0; i < m; ++i) pa.grad()[i] += o.grad[i] * s;
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, T(-1)));
}

/// x: [R x C], bias: [C]; adds bias to every row.
template <typename T>
Tensor<T> add_rowwise(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.ndim() != 2 || bias.ndim() != 1 || x.dim(1) != bias.dim(0))
    throw std::invalid_argument("add_rowwise: shapes " + shape_str(x.shape()) + " vs " +
                                shape_str(bias.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      out.data()[r * cols + c] = x.data()[r * cols + c] + bias.data()[c];
  detail::attach(out, {x, bias}, [rows, cols](TensorNode<T>& o) {
    auto& px = o.parents[0];
    auto& pb = o.parents[1];
    if (px.requires_grad()) {
      const std::size_t m = o.data.size();
      for (std::size_t i = 0; i < m; ++i) px.grad()[i] += o.grad[i];
    }
    if (pb.requires_grad())
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) pb.grad()[c] += o.grad[r * cols + c];
  });
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
  detail::attach(out, {a}, [](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    if (!pa.requires_grad()) return;
    const std::size_t m = o.data.size();
    for (std::size_t i = 0; i < m; ++i)
      if (pa.data()[i] > T(0)) pa.grad()[i] += o.grad[i];
  });
  return out;
}

/// Exact GELU: x * Phi(x); smooth, so finite-difference checks behave.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  Tensor<T> out(a.shape());
  const std::size_t n = out.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(a.data()[i]);
    out.data()[i] = static_cast<T>(x * 0.5 * (1.0 + std::erf(x * inv_sqrt2)));
  }
  detail::attach(out, {a}, [](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    if (!pa.requires_grad()) return;
    const std::size_t m = o.data.size();
    for (std::size_t i = 0; i < m; ++i) {
      const double x = static_cast<double>(pa.data()[i]);
      const double phi = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
      pa.grad()[i] += o.grad[i] * static_cast<T>(phi + x * pdf);
    }
  });
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (const auto& v : a.data()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  detail::attach(out, {a}, [](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    if (!pa.requires_grad()) return;
    const T g = o.grad[0];
    for (auto& v : pa.grad()) v += g;
  });
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  detail::attach(out, {a, b}, [m, k, n](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    auto& pb = o.parents[1];
    // dA += dC * B^T ; dB += A^T * dC
    if (pa.requires_grad())
      kernels::gemm_nt(o.grad.data(), pb.data().data(), pa.grad().data(), m, n, k);
    if (pb.requires_grad())
      kernels::gemm_tn(pa.data().data(), o.grad.data(), pb.grad().data(), n, m, k);
  });
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.ndim() != 2) throw std::invalid_argument("transpose: need 2-d, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data()[j * r + i] = a.data()[i * c + j];
  detail::attach(out, {a}, [r, c](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    if (!pa.requires_grad()) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) pa.grad()[i * c + j] += o.grad[j * r + i];
  });
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<std::size_t> shape) {
  Tensor<T> out(std::move(shape), a.data());
  detail::attach(out, {a}, [](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    if (!pa.requires_grad()) return;
    const std::size_t m = o.data.size();
    for (std::size_t i = 0; i < m; ++i) pa.grad()[i] += o.grad[i];
  });
  return out;
}

// ---------------------------------------------------------------------------
// slicing / concatenation (row-major 2-D)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t r0, std::size_t r1) {
  if (a.ndim() != 2 || r0 > r1 || r1 > a.dim(0))
    throw std::out_of_range("slice_rows: [" + std::to_string(r0) + "," + std::to_string(r1) +
                            ") of " + shape_str(a.shape()));
  const std::size_t cols = a.dim(1);
  Tensor<T> out({r1 - r0, cols});
  std::copy(a.data().begin() + r0 * cols, a.data().begin() + r1 * cols, out.data().begin());
  detail::attach(out, {a}, [r0, cols](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    if (!pa.requires_grad()) return;
    const std::size_t m = o.data.size();
    for (std::size_t i = 0; i < m; ++i) pa.grad()[r0 * cols + i] += o.grad[i];
  });
  return out;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  const std::size_t cols = parts[0].dim(1);
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(1) != cols)
      throw std::invalid_argument("concat_rows: width mismatch " + shape_str(p.shape()));
    rows += p.dim(0);
  }
  Tensor<T> out({rows, cols});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + off);
    off += p.numel();
  }
  detail::attach(out, parts, [](TensorNode<T>& o) {
    std::size_t off2 = 0;
    for (auto& p : o.parents) {
      const std::size_t n = p.numel();
      if (p.requires_grad())
        for (std::size_t i = 0; i < n; ++i) p.grad()[i] += o.grad[off2 + i];
      off2 += n;
    }
  });
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t c0, std::size_t c1) {
  if (a.ndim() != 2 || c0 > c1 || c1 > a.dim(1))
    throw std::out_of_range("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                            ") of " + shape_str(a.shape()));
  const std::size_t rows = a.dim(0), cols = a.dim(1), w = c1 - c0;
  Tensor<T> out({rows, w});
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(a.data().begin() + r * cols + c0, a.data().begin() + r * cols + c1,
              out.data().begin() + r * w);
  detail::attach(out, {a}, [rows, cols, c0, w](TensorNode<T>& o) {
    auto& pa = o.parents[0];
    if (!pa.requires_grad()) return;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) pa.grad()[r * cols + c0 + j] += o.grad[r * w + j];
  });
  return out;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 2 || p.dim(0) != rows)
      throw std::invalid_argument("concat_cols: height mismatch " + shape_str(p.shape()));
    cols += p.dim(1);
  }
  Tensor<T> out({rows, cols});
  std::size_t coff = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(p.data().begin() + r * w, p.data().begin() + (r + 1) * w,
                out.data().begin() + r * cols + coff);
    coff += w;
  }
  detail::attach(out, parts, [rows, cols](TensorNode<T>& o) {
    std::size_t coff2 = 0;
    for (auto& p : o.parents) {
      const std::size_t w = p.dim(1);
      if (p.requires_grad())
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < w; ++j)
            p.grad()[r * w + j] += o.grad[r * cols + coff2 + j];
      coff2 += w;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// normalization / activations over an axis
// ---------------------------------------------------------------------------

/// Numerically stabilized softmax along `axis` (max subtraction per slice).
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.ndim())
    throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                shape_str(x.shape()));
  const std::size_t n = x.dim(axis);
  std::size_t inner = 1, outer = 1;
  for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);

  Tensor<T> out(x.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      T mx = x.data()[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x.data()[base + i * inner]);
      T denom = T(0);
      for (std::size_t i = 0; i < n; ++i) {
        const T e = std::exp(x.data()[base + i * inner] - mx);
        out.data()[base + i * inner] = e;
        denom += e;
      }
      for (std::size_t i = 0; i < n; ++i) out.data()[base + i * inner] /= denom;
    }
  }
  detail::attach(out, {x}, [n, inner, outer](TensorNode<T>& o) {
    auto& px = o.parents[0];
    if (!px.requires_grad()) return;
    // dx_i = y_i * (dy_i - sum_j dy_j * y_j)
    for (std::size_t ot = 0; ot < outer; ++ot) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = ot * n * inner + in;
        T dot = T(0);
        for (std::size_t i = 0; i < n; ++i)
          dot += o.grad[base + i * inner] * o.data[base + i * inner];
        for (std::size_t i = 0; i < n; ++i)
          px.grad()[base + i * inner] +=
              o.data[base + i * inner] * (o.grad[base + i * inner] - dot);
      }
    }
  });
  return out;
}

/// Normalizes the last axis to zero mean/unit variance, then applies the
/// per-feature affine (gamma, beta).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.ndim() < 1) throw std::invalid_argument("layer_norm: rank-0 input");
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw std::invalid_argument("layer_norm: affine size mismatch, d=" + std::to_string(d));
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;

  Tensor<T> out(x.shape());
  std::vector<T> inv_sigma(rows), xhat(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data().data() + r * d;
    T mean = T(0);
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const T xh = (xr[i] - mean) * is;
      xhat[r * d + i] = xh;
      out.data()[r * d + i] = xh * gamma.data()[i] + beta.data()[i];
    }
  }
  detail::attach(out, {x, gamma, beta},
                 [rows, d, inv_sigma = std::move(inv_sigma), xhat = std::move(xhat)](TensorNode<T>& o) {
    auto& px = o.parents[0];
    auto& pg = o.parents[1];
    auto& pb = o.parents[2];
    for (std::size_t r = 0; r < rows; ++r) {
      const T* go = o.grad.data() + r * d;
      const T* xh = xhat.data() + r * d;
      if (pg.requires_grad())
        for (std::size_t i = 0; i < d; ++i) pg.grad()[i] += go[i] * xh[i];
      if (pb.requires_grad())
        for (std::size_t i = 0; i < d; ++i) pb.grad()[i] += go[i];
      if (px.requires_grad()) {
        T sum_g = T(0), sum_gx = T(0);
        for (std::size_t i = 0; i < d; ++i) {
          const T g = go[i] * pg.data()[i];
          sum_g += g;
          sum_gx += g * xh[i];
        }
        const T inv_d = T(1) / static_cast<T>(d);
        for (std::size_t i = 0; i < d; ++i) {
          const T g = go[i] * pg.data()[i];
          px.grad()[r * d + i] += inv_sigma[r] * (g - inv_d * sum_g - xh[i] * inv_d * sum_gx);
        }
      }
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// token ops
// ---------------------------------------------------------------------------

/// Row lookup: out[j, :] = table[ids[j], :].
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw std::invalid_argument("embedding: table must be 2-d");
  const std::size_t v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw std::out_of_range("embedding: token id " + std::to_string(id) + " outside vocab " +
                              std::to_string(v));
  Tensor<T> out({ids.size(), d});
  for (std::size_t j = 0; j < ids.size(); ++j)
    std::copy(table.data().begin() + ids[j] * d, table.data().begin() + (ids[j] + 1) * d,
              out.data().begin() + j * d);
  detail::attach(out, {table}, [ids, d](TensorNode<T>& o) {
    auto& pt = o.parents[0];
    if (!pt.requires_grad()) return;
    for (std::size_t j = 0; j < ids.size(); ++j)
      for (std::size_t i = 0; i < d; ++i)
        pt.grad()[static_cast<std::size_t>(ids[j]) * d + i] += o.grad[j * d + i];
  });
  return out;
}

/// Mean negative log-likelihood over non-pad positions.
/// logits: [L x V]; targets: length L, pad positions excluded from the mean.
/// All targets pad => loss 0 with zero gradient.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets, int pad_id) {
  if (logits.ndim() != 2 || logits.dim(0) != targets.size())
    throw std::invalid_argument("cross_entropy: logits " + shape_str(logits.shape()) + " vs " +
                                std::to_string(targets.size()) + " targets");
  const std::size_t rows = logits.dim(0), v = logits.dim(1);
  for (int t : targets)
    if (t != pad_id && (t < 0 || static_cast<std::size_t>(t) >= v))
      throw std::out_of_range("cross_entropy: target id " + std::to_string(t) +
                              " outside vocab " + std::to_string(v));

  std::vector<T> probs(logits.numel());
  std::size_t n_active = 0;
  T total = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = logits.data().data() + r * v;
    T mx = row[0];
    for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, row[i]);
    T denom = T(0);
    for (std::size_t i = 0; i < v; ++i) denom += std::exp(row[i] - mx);
    const T lse = mx + std::log(denom);
    for (std::size_t i = 0; i < v; ++i) probs[r * v + i] = std::exp(row[i] - lse);
    if (targets[r] != pad_id) {
      total += lse - row[targets[r]];
      ++n_active;
    }
  }
  Tensor<T> out = Tensor<T>::scalar(n_active ? total / static_cast<T>(n_active) : T(0));
  detail::attach(out, {logits},
                 [targets, pad_id, rows, v, n_active, probs = std::move(probs)](TensorNode<T>& o) {
    auto& pl = o.parents[0];
    if (!pl.requires_grad() || n_active == 0) return;
    const T g = o.grad[0] / static_cast<T>(n_active);
    for (std::size_t r = 0; r < rows; ++r) {
      if (targets[r] == pad_id) continue;
      for (std::size_t i = 0; i < v; ++i) pl.grad()[r * v + i] += g * probs[r * v + i];
      pl.grad()[r * v + targets[r]] -= g;
    }
  });
  return out;
}

/// Inverted dropout; identity when not training or p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  Tensor<T> out(x.shape());
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * mask[i];
  detail::attach(out, {x}, [mask = std::move(mask)](TensorNode<T>& o) {
    auto& px = o.parents[0];
    if (!px.requires_grad()) return;
    const std::size_t m = o.data.size();
    for (std::size_t i = 0; i < m; ++i) px.grad()[i] += o.grad[i] * mask[i];
  });
  return out;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (const auto& v : t.data())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

}  // namespace plural
