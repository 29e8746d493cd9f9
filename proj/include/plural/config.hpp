#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace plural {

inline std::uint64_t fnv1a64(const void* ptr, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* p = static_cast<const unsigned char*>(ptr);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

/// Flat key=value configuration. Files are line oriented:
///   # comment
///   key = value
/// Dotted keys group related settings (model.d_model, train.lr, ...).
class KVConfig {
 public:
  KVConfig() = default;

  static KVConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    KVConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty() || t[0] == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error("config: bad line " + std::to_string(lineno) + " in " + path);
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) { kv_[key] = value; }

  /// "key=value" override, as given on the command line.
  void apply_override(const std::string& expr) {
    const auto eq = expr.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("override must look like key=value: " + expr);
    set(trim(expr.substr(0, eq)), trim(expr.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_str(const std::string& key, const std::string& dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : it->second;
  }

  std::string require_str(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::runtime_error("config: missing required key '" + key + "'");
    return it->second;
  }

  long get_int(const std::string& key, long dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : std::stol(it->second);
  }

  double get_real(const std::string& key, double dflt) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? dflt : std::stod(it->second);
  }

  bool get_bool(const std::string& key, bool dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::runtime_error("config: bad boolean for " + key + ": " + v);
  }

  std::vector<long> get_int_list(const std::string& key, std::vector<long> dflt) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return dflt;
    std::vector<long> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stol(trim(tok)));
    return out;
  }

  /// Deterministic dump (keys sorted by the underlying map).
  std::string dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
    return os.str();
  }

  const std::map<std::string, std::string>& items() const { return kv_; }

 private:
  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> kv_;
};

/// All dimensional and architectural hyperparameters of the network.
/// Paper-scale values: image 384, E=1024, D=768, 6+6 layers; desk defaults
/// are small enough to train on a laptop CPU.
struct ModelConfig {
  std::size_t image_size = 64;   // H = W
  std::size_t image_channels = 1;
  std::vector<std::size_t> conv_widths = {16, 32, 64};  // stem + two intermediate stages
  std::size_t feature_dim = 128;  // E, channels of the final grid
  std::size_t d_model = 64;       // D
  std::size_t n_heads = 0;        // 0 = auto (D / 64, at least 1)
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t ffn_mult = 4;
  std::size_t vocab_size = 1024;
  std::size_t max_text_len = 100;  // N_t_max, shared by instructions and outputs
  double dropout = 0.1;
  double stochastic_depth = 0.1;
  bool include_past_branch = true;  // stage 1 runs without it

  // stem + 3 downsampling stages, stride 2 each
  static constexpr std::size_t total_stride = 16;

  std::size_t feature_hw() const {
    if (image_size % total_stride != 0)
      throw std::invalid_argument("model: image size " + std::to_string(image_size) +
                                  " not divisible by stride " + std::to_string(total_stride));
    return image_size / total_stride;
  }

  /// N = Hhat * What
  std::size_t n_image_tokens() const { return feature_hw() * feature_hw(); }

  /// Rows of the fused encoder input for a given instruction length.
  std::size_t fused_len(std::size_t n_text, bool dual_image) const {
    return (dual_image ? 2 : 1) * n_image_tokens() + n_text;
  }

  std::size_t heads() const {
    if (n_heads > 0) return n_heads;
    return d_model >= 64 ? d_model / 64 : 1;
  }

  static ModelConfig from(const KVConfig& kv) {
    ModelConfig m;
    m.image_size = kv.get_int("model.image_size", m.image_size);
    m.image_channels = kv.get_int("model.image_channels", m.image_channels);
    auto widths = kv.get_int_list("model.conv_widths", {16, 32, 64});
    m.conv_widths.assign(widths.begin(), widths.end());
    m.feature_dim = kv.get_int("model.feature_dim", m.feature_dim);
    m.d_model = kv.get_int("model.d_model", m.d_model);
    m.n_heads = kv.get_int("model.n_heads", m.n_heads);
    m.enc_layers = kv.get_int("model.enc_layers", m.enc_layers);
    m.dec_layers = kv.get_int("model.dec_layers", m.dec_layers);
    m.ffn_mult = kv.get_int("model.ffn_mult", m.ffn_mult);
    m.vocab_size = kv.get_int("model.vocab_size", m.vocab_size);
    m.max_text_len = kv.get_int("model.max_text_len", m.max_text_len);
    m.dropout = kv.get_real("model.dropout", m.dropout);
    m.stochastic_depth = kv.get_real("model.stochastic_depth", m.stochastic_depth);
    if (m.conv_widths.size() != 3)
      throw std::runtime_error("model.conv_widths must have 3 entries");
    return m;
  }

  void dump_into(KVConfig& kv) const {
    kv.set("model.image_size", std::to_string(image_size));
    kv.set("model.image_channels", std::to_string(image_channels));
    std::string w;
    for (std::size_t i = 0; i < conv_widths.size(); ++i)
      w += (i ? "," : "") + std::to_string(conv_widths[i]);
    kv.set("model.conv_widths", w);
    kv.set("model.feature_dim", std::to_string(feature_dim));
    kv.set("model.d_model", std::to_string(d_model));
    kv.set("model.n_heads", std::to_string(n_heads));
    kv.set("model.enc_layers", std::to_string(enc_layers));
    kv.set("model.dec_layers", std::to_string(dec_layers));
    kv.set("model.ffn_mult", std::to_string(ffn_mult));
    kv.set("model.vocab_size", std::to_string(vocab_size));
    kv.set("model.max_text_len", std::to_string(max_text_len));
    kv.set("model.dropout", std::to_string(dropout));
    kv.set("model.stochastic_depth", std::to_string(stochastic_depth));
    kv.set("model.include_past_branch", include_past_branch ? "true" : "false");
  }

  std::uint64_t fingerprint() const {
    KVConfig kv;
    dump_into(kv);
    return fnv1a64(kv.dump());
  }
};

/// One training stage of the pipeline.
struct StageConfig {
  int stage = 3;  // 1, 2 or 3
  std::string data_dir;
  bool include_findings = true;
  bool include_impression = true;
  bool include_past_image = true;
  bool include_diffqa_in_stage2 = true;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  std::size_t batch_size = 16;
  std::size_t max_steps = 2000;
  std::size_t eval_interval = 100;
  std::size_t patience_steps = 500;  // paper-scale runs use 5000
  std::uint64_t seed = 1;

  bool single_image_mode() const { return stage == 1; }

  static StageConfig from(const KVConfig& kv) {
    StageConfig s;
    s.stage = static_cast<int>(kv.get_int("train.stage", s.stage));
    if (s.stage < 1 || s.stage > 3) throw std::runtime_error("train.stage must be 1, 2 or 3");
    s.data_dir = kv.get_str("train.data_dir", "");
    s.include_findings = kv.get_bool("train.include_findings", true);
    s.include_impression = kv.get_bool("train.include_impression", true);
    s.include_past_image = kv.get_bool("train.include_past_image", true);
    s.include_diffqa_in_stage2 = kv.get_bool("train.include_diffqa_in_stage2", true);
    s.lr = kv.get_real("train.lr", s.lr);
    s.beta1 = kv.get_real("train.beta1", s.beta1);
    s.beta2 = kv.get_real("train.beta2", s.beta2);
    s.adam_eps = kv.get_real("train.adam_eps", s.adam_eps);
    s.weight_decay = kv.get_real("train.weight_decay", s.weight_decay);
    s.grad_clip = kv.get_real("train.grad_clip", s.grad_clip);
    s.batch_size = kv.get_int("train.batch_size", s.batch_size);
    s.max_steps = kv.get_int("train.max_steps", s.max_steps);
    s.eval_interval = kv.get_int("train.eval_interval", s.eval_interval);
    s.patience_steps = kv.get_int("train.patience_steps", s.patience_steps);
    s.seed = kv.get_int("train.seed", s.seed);
    return s;
  }

  void dump_into(KVConfig& kv) const {
    kv.set("train.stage", std::to_string(stage));
    kv.set("train.data_dir", data_dir);
    kv.set("train.include_findings", include_findings ? "true" : "false");
    kv.set("train.include_impression", include_impression ? "true" : "false");
    kv.set("train.include_past_image", include_past_image ? "true" : "false");
    kv.set("train.include_diffqa_in_stage2", include_diffqa_in_stage2 ? "true" : "false");
    std::ostringstream os;
    os.precision(17);
    auto real = [&os](double v) {
      os.str("");
      os << v;
      return os.str();
    };
    kv.set("train.lr", real(lr));
    kv.set("train.beta1", real(beta1));
    kv.set("train.beta2", real(beta2));
    kv.set("train.adam_eps", real(adam_eps));
    kv.set("train.weight_decay", real(weight_decay));
    kv.set("train.grad_clip", real(grad_clip));
    kv.set("train.batch_size", std::to_string(batch_size));
    kv.set("train.max_steps", std::to_string(max_steps));
    kv.set("train.eval_interval", std::to_string(eval_interval));
    kv.set("train.patience_steps", std::to_string(patience_steps));
    kv.set("train.seed", std::to_string(seed));
  }
};

struct GenerationConfig {
  std::size_t max_len = 100;  // generated tokens, bos excluded
  enum class Strategy { greedy, beam } strategy = Strategy::greedy;
  std::size_t beam_width = 4;
  double length_penalty = 0.6;

  static GenerationConfig from(const KVConfig& kv) {
    GenerationConfig g;
    g.max_len = kv.get_int("gen.max_len", g.max_len);
    if (g.max_len > 100) throw std::runtime_error("gen.max_len must be <= 100");
    const std::string s = kv.get_str("gen.strategy", "greedy");
    if (s == "greedy")
      g.strategy = Strategy::greedy;
    else if (s == "beam")
      g.strategy = Strategy::beam;
    else
      throw std::runtime_error("gen.strategy must be greedy or beam");
    g.beam_width = kv.get_int("gen.beam_width", g.beam_width);
    g.length_penalty = kv.get_real("gen.length_penalty", g.length_penalty);
    return g;
  }
};

}  // namespace plural
