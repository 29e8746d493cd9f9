#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "plural/config.hpp"
#include "plural/conv.hpp"
#include "plural/ops.hpp"
#include "plural/rng.hpp"
#include "plural/tensor.hpp"

namespace plural {

/// [E x Hhat x What] grid -> [N x E] with row-major spatial order:
/// flat[i * What + j] = grid[:, i, j].
template <typename T>
Tensor<T> flatten_grid(const Tensor<T>& grid) {
  if (grid.ndim() != 3) throw std::invalid_argument("flatten_grid: need [E x H x W]");
  const std::size_t e = grid.dim(0), h = grid.dim(1), w = grid.dim(2);
  Tensor<T> out({h * w, e});
  for (std::size_t c = 0; c < e; ++c)
    for (std::size_t p = 0; p < h * w; ++p) out.data()[p * e + c] = grid.data()[c * h * w + p];
  detail::attach(out, {grid}, [e, h, w](TensorNode<T>& o) {
    auto& pg = o.parents[0];
    if (!pg.requires_grad()) return;
    for (std::size_t c = 0; c < e; ++c)
      for (std::size_t p = 0; p < h * w; ++p) pg.grad()[c * h * w + p] += o.grad[p * e + c];
  });
  return out;
}

namespace detail {

inline std::size_t norm_groups(std::size_t channels) {
  for (std::size_t g : {std::size_t{8}, std::size_t{4}, std::size_t{2}})
    if (channels % g == 0 && channels >= g) return g;
  return 1;
}

}  // namespace detail

/// Small residual convolutional encoder: stem (stride 2) followed by three
/// residual stages (stride 2 each) for a total stride of 16. Group norm
/// keeps single-sample forward passes reproducible. Past and current images
/// go through the same instance, so the branches share weights by identity.
template <typename T>
class VisionEncoder {
 public:
  struct Conv {
    Tensor<T> w, b;
  };
  struct Norm {
    Tensor<T> gamma, beta;
  };
  struct Block {
    Conv conv1, conv2, skip;
    Norm gn1, gn2;
    std::size_t stride = 2;
  };

  VisionEncoder() = default;

  VisionEncoder(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const std::size_t cin = cfg.image_channels;
    const std::vector<std::size_t> widths = {cfg.conv_widths[0], cfg.conv_widths[1],
                                             cfg.conv_widths[2], cfg.feature_dim};
    stem_ = make_conv(cin, widths[0], 3, rng);
    stem_gn_ = make_norm(widths[0]);
    std::size_t prev = widths[0];
    for (std::size_t s = 1; s < widths.size(); ++s) {
      Block b;
      b.conv1 = make_conv(prev, widths[s], 3, rng);
      b.gn1 = make_norm(widths[s]);
      b.conv2 = make_conv(widths[s], widths[s], 3, rng);
      b.gn2 = make_norm(widths[s]);
      b.skip = make_conv(prev, widths[s], 1, rng);
      blocks_.push_back(std::move(b));
      prev = widths[s];
    }
  }

  /// img: [C x H x W] -> feature grid [E x H/16 x W/16].
  Tensor<T> forward(const Tensor<T>& img) const {
    if (img.ndim() != 3 || img.dim(0) != cfg_.image_channels || img.dim(1) != cfg_.image_size ||
        img.dim(2) != cfg_.image_size)
      throw std::invalid_argument("vision: expected image [" +
                                  std::to_string(cfg_.image_channels) + "x" +
                                  std::to_string(cfg_.image_size) + "x" +
                                  std::to_string(cfg_.image_size) + "], got " +
                                  shape_str(img.shape()));
    Tensor<T> x = conv2d(img, stem_.w, stem_.b, 2, 1);
    x = relu(group_norm(x, stem_gn_.gamma, stem_gn_.beta, detail::norm_groups(x.dim(0)), T(1e-5)));
    for (const auto& b : blocks_) {
      Tensor<T> main = conv2d(x, b.conv1.w, b.conv1.b, b.stride, 1);
      main = relu(group_norm(main, b.gn1.gamma, b.gn1.beta, detail::norm_groups(main.dim(0)), T(1e-5)));
      main = conv2d(main, b.conv2.w, b.conv2.b, 1, 1);
      main = group_norm(main, b.gn2.gamma, b.gn2.beta, detail::norm_groups(main.dim(0)), T(1e-5));
      Tensor<T> skip = conv2d(x, b.skip.w, b.skip.b, b.stride, 0);
      x = relu(add(main, skip));
    }
    return x;
  }

  /// Convenience: forward + flatten, the v = F(E_img(i)) path.
  Tensor<T> encode_flat(const Tensor<T>& img) const { return flatten_grid(forward(img)); }

  void register_params(std::vector<std::pair<std::string, Tensor<T>>>& out) const {
    out.emplace_back("vision.stem.w", stem_.w);
    out.emplace_back("vision.stem.b", stem_.b);
    out.emplace_back("vision.stem.gn.gamma", stem_gn_.gamma);
    out.emplace_back("vision.stem.gn.beta", stem_gn_.beta);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = "vision.stage" + std::to_string(i) + ".";
      const auto& b = blocks_[i];
      out.emplace_back(p + "conv1.w", b.conv1.w);
      out.emplace_back(p + "conv1.b", b.conv1.b);
      out.emplace_back(p + "gn1.gamma", b.gn1.gamma);
      out.emplace_back(p + "gn1.beta", b.gn1.beta);
      out.emplace_back(p + "conv2.w", b.conv2.w);
      out.emplace_back(p + "conv2.b", b.conv2.b);
      out.emplace_back(p + "gn2.gamma", b.gn2.gamma);
      out.emplace_back(p + "gn2.beta", b.gn2.beta);
      out.emplace_back(p + "skip.w", b.skip.w);
      out.emplace_back(p + "skip.b", b.skip.b);
    }
  }

 private:
  static Conv make_conv(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng) {
    Conv c;
    const T stddev = static_cast<T>(std::sqrt(2.0 / static_cast<double>(cin * k * k)));
    c.w = Tensor<T>::randn({cout, cin, k, k}, rng, stddev);
    c.w.set_requires_grad(true);
    c.b = Tensor<T>::zeros({cout});
    c.b.set_requires_grad(true);
    return c;
  }

  static Norm make_norm(std::size_t channels) {
    Norm n;
    n.gamma = Tensor<T>::full({channels}, T(1));
    n.gamma.set_requires_grad(true);
    n.beta = Tensor<T>::zeros({channels});
    n.beta.set_requires_grad(true);
    return n;
  }

  ModelConfig cfg_;
  Conv stem_;
  Norm stem_gn_;
  std::vector<Block> blocks_;
};

}  // namespace plural
