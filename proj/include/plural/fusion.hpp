#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "plural/bpe.hpp"
#include "plural/config.hpp"
#include "plural/ops.hpp"
#include "plural/rng.hpp"
#include "plural/tensor.hpp"

namespace plural {

enum class Branch { past, current };

/// Projection, positional encodings and the learned time encodings that
/// distinguish the past branch from the current one; assembles the fused
/// Transformer-encoder input. The two time encodings are distinct trainable
/// tensors; the image positional encoding is shared by both branches.
template <typename T>
class Fusion {
 public:
  Fusion() = default;

  Fusion(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    const std::size_t e = cfg.feature_dim, d = cfg.d_model, n = cfg.n_image_tokens();
    const T a = static_cast<T>(std::sqrt(6.0 / static_cast<double>(e + d)));
    p_img_w_ = Tensor<T>({e, d});
    for (auto& v : p_img_w_.data()) v = static_cast<T>(rng.uniform(-a, a));
    p_img_w_.set_requires_grad(true);
    p_img_b_ = Tensor<T>::zeros({d});
    p_img_b_.set_requires_grad(true);
    p_enc_img_ = Tensor<T>::randn({n, d}, rng, T(0.02));
    p_enc_img_.set_requires_grad(true);
    p_enc_txt_ = Tensor<T>::randn({cfg.max_text_len, d}, rng, T(0.02));
    p_enc_txt_.set_requires_grad(true);
    tok_emb_ = Tensor<T>::randn({cfg.vocab_size, d}, rng, T(0.02));
    tok_emb_.set_requires_grad(true);
    if (cfg.include_past_branch) {
      t_enc_past_ = Tensor<T>::randn({n, d}, rng, T(0.02));
      t_enc_past_.set_requires_grad(true);
      t_enc_cur_ = Tensor<T>::randn({n, d}, rng, T(0.02));
      t_enc_cur_.set_requires_grad(true);
      null_past_ = Tensor<T>::randn({std::size_t{1}, d}, rng, T(0.02));
      null_past_.set_requires_grad(true);
    }
  }

  /// v_trans = P_img(v) + p_enc_img + t_enc_{branch}; v: [N x E].
  Tensor<T> embed_image_branch(const Tensor<T>& v, Branch which) const {
    if (!cfg_.include_past_branch)
      throw std::invalid_argument("fusion: time-encoded branches need the past input branch");
    Tensor<T> x = project(v);
    return add(x, which == Branch::past ? t_enc_past_ : t_enc_cur_);
  }

  /// Stage-1 variant: projection + positional encoding, no time encoding.
  Tensor<T> embed_image_single(const Tensor<T>& v) const { return project(v); }

  /// Placeholder block for samples with no prior visit: the learned
  /// null-past row tiled N times, plus the past time encoding. Keeps the
  /// fused length at 2N + N_t so visits with and without priors batch alike.
  Tensor<T> null_past_block() const {
    if (!cfg_.include_past_branch)
      throw std::invalid_argument("fusion: null-past block needs the past input branch");
    const std::size_t n = cfg_.n_image_tokens();
    std::vector<Tensor<T>> rows(n, null_past_);
    return add(concat_rows(rows), t_enc_past_);
  }

  /// l_trans = embedding(tokens) + positional prefix.
  Tensor<T> embed_text(const TokenSeq& tokens) const {
    if (tokens.size() > cfg_.max_text_len)
      throw std::invalid_argument("fusion: text length " + std::to_string(tokens.size()) +
                                  " exceeds maximum " + std::to_string(cfg_.max_text_len));
    Tensor<T> emb = embedding(tok_emb_, tokens);
    return add(emb, slice_rows(p_enc_txt_, 0, tokens.size()));
  }

  /// i_trans = concat(past block, current block, text block). Pass no past
  /// block for single-image mode (L = N + N_t instead of 2N + N_t).
  Tensor<T> fuse(const std::optional<Tensor<T>>& past, const Tensor<T>& cur,
                 const Tensor<T>& text) const {
    const std::size_t d = cfg_.d_model;
    if (cur.dim(1) != d || text.dim(1) != d || (past && past->dim(1) != d))
      throw std::invalid_argument("fusion: width mismatch, expected D=" + std::to_string(d));
    std::vector<Tensor<T>> parts;
    if (past) parts.push_back(*past);
    parts.push_back(cur);
    parts.push_back(text);
    return concat_rows(parts);
  }

  const Tensor<T>& token_embedding() const { return tok_emb_; }
  const Tensor<T>& t_enc_past() { return t_enc_past_; }
  const Tensor<T>& t_enc_cur() { return t_enc_cur_; }

  void register_params(std::vector<std::pair<std::string, Tensor<T>>>& out) const {
    out.emplace_back("fusion.p_img.w", p_img_w_);
    out.emplace_back("fusion.p_img.b", p_img_b_);
    out.emplace_back("fusion.p_enc_img", p_enc_img_);
    out.emplace_back("fusion.p_enc_txt", p_enc_txt_);
    out.emplace_back("fusion.tok_emb", tok_emb_);
    if (cfg_.include_past_branch) {
      out.emplace_back("fusion.t_enc_past", t_enc_past_);
      out.emplace_back("fusion.t_enc_cur", t_enc_cur_);
      out.emplace_back("fusion.null_past", null_past_);
    }
  }

  /// Parameters that exist only when the past branch does; freshly
  /// initialized when a single-image checkpoint is loaded into a
  /// dual-image model.
  static const std::vector<std::string>& past_branch_param_names() {
    static const std::vector<std::string> names = {"fusion.t_enc_past", "fusion.t_enc_cur",
                                                   "fusion.null_past"};
    return names;
  }

 private:
  Tensor<T> project(const Tensor<T>& v) const {
    if (v.ndim() != 2 || v.dim(0) != cfg_.n_image_tokens() || v.dim(1) != cfg_.feature_dim)
      throw std::invalid_argument("fusion: expected features [" +
                                  std::to_string(cfg_.n_image_tokens()) + "x" +
                                  std::to_string(cfg_.feature_dim) + "], got " +
                                  shape_str(v.shape()));
    return add(add_rowwise(matmul(v, p_img_w_), p_img_b_), p_enc_img_);
  }

  ModelConfig cfg_;
  Tensor<T> p_img_w_, p_img_b_;
  Tensor<T> p_enc_img_, p_enc_txt_;
  Tensor<T> t_enc_past_, t_enc_cur_, null_past_;
  Tensor<T> tok_emb_;
};

}  // namespace plural
