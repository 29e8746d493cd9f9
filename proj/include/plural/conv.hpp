#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "plural/ops.hpp"
#include "plural/tensor.hpp"
#include "plural/threading.hpp"

namespace plural {

/// 2-D convolution. x: [Cin x H x W], w: [Cout x Cin x kh x kw], bias: [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
  if (x.ndim() != 3 || w.ndim() != 4 || x.dim(0) != w.dim(1))
    throw std::invalid_argument("conv2d: shape mismatch " + shape_str(x.shape()) + " vs " +
                                shape_str(w.shape()));
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (bias.numel() != cout) throw std::invalid_argument("conv2d: bias size mismatch");
  if (h + 2 * pad < kh || wd + 2 * pad < kw)
    throw std::invalid_argument("conv2d: kernel larger than padded input");
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kw) / stride + 1;

  Tensor<T> out({cout, ho, wo});
  const T* xd = x.data().data();
  const T* wdt = w.data().data();
  T* od = out.data().data();
  parallel_for(cout, [&](std::size_t co0, std::size_t co1) {
    for (std::size_t co = co0; co < co1; ++co) {
      for (std::size_t oh = 0; oh < ho; ++oh) {
        for (std::size_t ow = 0; ow < wo; ++ow) {
          T acc = bias.data()[co];
          for (std::size_t ci = 0; ci < cin; ++ci) {
            for (std::size_t i = 0; i < kh; ++i) {
              const std::ptrdiff_t ih =
                  static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(pad);
              if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t j = 0; j < kw; ++j) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(pad);
                if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) continue;
                acc += xd[(ci * h + ih) * wd + iw] * wdt[((co * cin + ci) * kh + i) * kw + j];
              }
            }
          }
          od[(co * ho + oh) * wo + ow] = acc;
        }
      }
    }
  });

  detail::attach(out, {x, w, bias}, [cin, h, wd, cout, kh, kw, ho, wo, stride, pad](TensorNode<T>& o) {
    auto& px = o.parents[0];
    auto& pw = o.parents[1];
    auto& pb = o.parents[2];
    const T* go = o.grad.data();
    if (pb.requires_grad()) {
      for (std::size_t co = 0; co < cout; ++co) {
        T acc = T(0);
        for (std::size_t i = 0; i < ho * wo; ++i) acc += go[co * ho * wo + i];
        pb.grad()[co] += acc;
      }
    }
    if (pw.requires_grad()) {
      const T* xd = px.data().data();
      T* gw = pw.grad().data();
      parallel_for(cout, [&](std::size_t co0, std::size_t co1) {
        for (std::size_t co = co0; co < co1; ++co)
          for (std::size_t oh = 0; oh < ho; ++oh)
            for (std::size_t ow = 0; ow < wo; ++ow) {
              const T g = go[(co * ho + oh) * wo + ow];
              for (std::size_t ci = 0; ci < cin; ++ci)
                for (std::size_t i = 0; i < kh; ++i) {
                  const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t j = 0; j < kw; ++j) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) continue;
                    gw[((co * cin + ci) * kh + i) * kw + j] += g * xd[(ci * h + ih) * wd + iw];
                  }
                }
            }
      });
    }
    if (px.requires_grad()) {
      const T* wdt = pw.data().data();
      T* gx = px.grad().data();
      parallel_for(cin, [&](std::size_t ci0, std::size_t ci1) {
        for (std::size_t ci = ci0; ci < ci1; ++ci)
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t oh = 0; oh < ho; ++oh)
              for (std::size_t ow = 0; ow < wo; ++ow) {
                const T g = go[(co * ho + oh) * wo + ow];
                for (std::size_t i = 0; i < kh; ++i) {
                  const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) -
                                            static_cast<std::ptrdiff_t>(pad);
                  if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t j = 0; j < kw; ++j) {
                    const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(wd)) continue;
                    gx[(ci * h + ih) * wd + iw] += g * wdt[((co * cin + ci) * kh + i) * kw + j];
                  }
                }
              }
      });
    }
  });
  return out;
}

/// Group normalization over [C x H x W]: each group of C/groups channels is
/// normalized over all its elements, then the per-channel affine is applied.
/// Batch-size independent, so single-sample runs are reproducible.
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::size_t groups, T eps) {
  if (x.ndim() != 3) throw std::invalid_argument("group_norm: need [C x H x W]");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (gamma.numel() != c || beta.numel() != c)
    throw std::invalid_argument("group_norm: affine size mismatch");
  if (groups == 0 || c % groups != 0)
    throw std::invalid_argument("group_norm: groups must divide channels");
  const std::size_t gc = c / groups;      // channels per group
  const std::size_t m = gc * h * w;       // elements per group (contiguous)

  Tensor<T> out(x.shape());
  std::vector<T> inv_sigma(groups), xhat(x.numel());
  for (std::size_t g = 0; g < groups; ++g) {
    const T* xg = x.data().data() + g * m;
    T mean = T(0);
    for (std::size_t i = 0; i < m; ++i) mean += xg[i];
    mean /= static_cast<T>(m);
    T var = T(0);
    for (std::size_t i = 0; i < m; ++i) var += (xg[i] - mean) * (xg[i] - mean);
    var /= static_cast<T>(m);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma[g] = is;
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t chan = g * gc + i / (h * w);
      const T xh = (xg[i] - mean) * is;
      xhat[g * m + i] = xh;
      out.data()[g * m + i] = xh * gamma.data()[chan] + beta.data()[chan];
    }
  }
  detail::attach(out, {x, gamma, beta},
                 [groups, gc, h, w, m, inv_sigma = std::move(inv_sigma),
                  xhat = std::move(xhat)](TensorNode<T>& o) {
    auto& px = o.parents[0];
    auto& pg = o.parents[1];
    auto& pb = o.parents[2];
    for (std::size_t g = 0; g < groups; ++g) {
      const T* go = o.grad.data() + g * m;
      const T* xh = xhat.data() + g * m;
      if (pg.requires_grad() || pb.requires_grad()) {
        for (std::size_t i = 0; i < m; ++i) {
          const std::size_t chan = g * gc + i / (h * w);
          if (pg.requires_grad()) pg.grad()[chan] += go[i] * xh[i];
          if (pb.requires_grad()) pb.grad()[chan] += go[i];
        }
      }
      if (px.requires_grad()) {
        T sum_g = T(0), sum_gx = T(0);
        for (std::size_t i = 0; i < m; ++i) {
          const T gv = go[i] * pg.data()[g * gc + i / (h * w)];
          sum_g += gv;
          sum_gx += gv * xh[i];
        }
        const T inv_m = T(1) / static_cast<T>(m);
        for (std::size_t i = 0; i < m; ++i) {
          const T gv = go[i] * pg.data()[g * gc + i / (h * w)];
          px.grad()[g * m + i] += inv_sigma[g] * (gv - inv_m * sum_g - xh[i] * inv_m * sum_gx);
        }
      }
    }
  });
  return out;
}

}  // namespace plural
