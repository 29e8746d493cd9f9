#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace plural {

using TokenSeq = std::vector<int>;

/// Byte-pair-encoding vocabulary. Merges are word-internal (never cross
/// whitespace); the end of a word is folded into its last symbol via the
/// "</w>" suffix so decoding can restore spaces. Ids are dense in [0, V):
/// the four specials first, then base symbols, then merged symbols in
/// training order.
class Vocab {
 public:
  static constexpr int pad_id = 0;
  static constexpr int bos_id = 1;
  static constexpr int eos_id = 2;
  static constexpr int unk_id = 3;
  static constexpr const char* unk_glyph = "<unk>";

  Vocab() {
    id_to_token_ = {"<pad>", "<bos>", "<eos>", unk_glyph};
    for (std::size_t i = 0; i < id_to_token_.size(); ++i)
      token_to_id_[id_to_token_[i]] = static_cast<int>(i);
  }

  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  int id_of(const std::string& tok) const {
    auto it = token_to_id_.find(tok);
    return it == token_to_id_.end() ? unk_id : it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
      throw std::out_of_range("vocab: id " + std::to_string(id) + " outside vocab " +
                              std::to_string(id_to_token_.size()));
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  std::size_t max_len() const { return max_len_; }

  /// Trains merges on the corpus. vocab_size must cover the base character
  /// symbols plus the 4 specials; the remainder becomes merge slots. Most
  /// frequent adjacent pair wins each round, ties broken lexicographically.
  static Vocab train(const std::vector<std::string>& corpus, std::size_t vocab_size,
                     std::size_t max_len = 100) {
    if (corpus.empty()) throw std::invalid_argument("train_bpe: empty corpus");
    Vocab v;
    v.max_len_ = max_len;

    // word frequencies; each word is a symbol sequence, last symbol end-marked
    std::map<std::string, long> word_freq;
    for (const auto& line : corpus)
      for (const auto& w : split_words(lowercase(line))) ++word_freq[w];
    if (word_freq.empty()) throw std::invalid_argument("train_bpe: corpus has no words");

    std::map<std::vector<std::string>, long> seqs;
    std::map<std::string, long> base_syms;
    for (const auto& [w, f] : word_freq) {
      auto syms = char_symbols(w);
      for (const auto& s : syms) base_syms[s] += f;
      seqs[std::move(syms)] += f;
    }
    for (const auto& [s, f] : base_syms) v.add_token(s);
    if (vocab_size < v.size())
      throw std::invalid_argument("train_bpe: vocab_size " + std::to_string(vocab_size) +
                                  " below base charset + specials = " + std::to_string(v.size()));

    while (v.size() < vocab_size) {
      std::map<std::pair<std::string, std::string>, long> pair_freq;
      for (const auto& [syms, f] : seqs)
        for (std::size_t i = 0; i + 1 < syms.size(); ++i) pair_freq[{syms[i], syms[i + 1]}] += f;
      if (pair_freq.empty()) break;
      // max count; std::map iteration order gives the lexicographic tie-break
      auto best = pair_freq.begin();
      for (auto it = pair_freq.begin(); it != pair_freq.end(); ++it)
        if (it->second > best->second) best = it;
      const auto [a, b] = best->first;
      v.merges_.emplace_back(a, b);
      v.add_token(a + b);

      std::map<std::vector<std::string>, long> next;
      for (const auto& [syms, f] : seqs) next[merge_once(syms, a, b)] += f;
      seqs = std::move(next);
    }
    return v;
  }

  /// Lowercases, splits on whitespace, applies merges in training order,
  /// truncates to max_len (bos/eos included) and wraps with bos/eos.
  TokenSeq encode(const std::string& text) const {
    TokenSeq out;
    out.push_back(bos_id);
    for (const auto& w : split_words(lowercase(text))) {
      for (const auto& sym : apply_merges(char_symbols(w))) {
        if (out.size() + 1 >= max_len_) break;  // leave room for eos
        out.push_back(id_of(sym));
      }
      if (out.size() + 1 >= max_len_) break;
    }
    out.push_back(eos_id);
    return out;
  }

  /// Inverse of encode up to unk substitution and truncation; strips
  /// specials and restores single spaces at word ends.
  std::string decode(const TokenSeq& ids) const {
    std::string acc;
    for (int id : ids) {
      if (id == pad_id || id == bos_id || id == eos_id) continue;
      acc += token_of(id);
    }
    // "</w>" marks word ends
    std::string out;
    std::size_t i = 0;
    while (i < acc.size()) {
      if (acc.compare(i, 4, "</w>") == 0) {
        out += ' ';
        i += 4;
      } else {
        out += acc[i++];
      }
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("vocab: cannot write " + path);
    f << "plural-vocab 1\n";
    f << "size " << id_to_token_.size() << " max_len " << max_len_ << "\n";
    f << "specials pad=0 bos=1 eos=2 unk=3\n";
    f << "merges " << merges_.size() << "\n";
    for (const auto& [a, b] : merges_) f << a << "\t" << b << "\n";
    f << "tokens " << id_to_token_.size() << "\n";
    for (const auto& t : id_to_token_) f << t << "\n";
  }

  static Vocab load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("vocab: cannot open " + path);
    std::string magic;
    int version = 0;
    f >> magic >> version;
    if (magic != "plural-vocab" || version != 1)
      throw std::runtime_error("vocab: bad header in " + path);
    Vocab v;
    std::string key;
    std::size_t n = 0;
    f >> key >> n >> key >> v.max_len_;
    std::string specials_line;
    std::getline(f, specials_line);
    std::getline(f, specials_line);
    std::size_t n_merges = 0;
    f >> key >> n_merges;
    std::getline(f, specials_line);
    v.merges_.clear();
    for (std::size_t i = 0; i < n_merges; ++i) {
      std::string line;
      std::getline(f, line);
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw std::runtime_error("vocab: bad merge line in " + path);
      v.merges_.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    std::size_t n_tokens = 0;
    f >> key >> n_tokens;
    std::getline(f, specials_line);
    v.id_to_token_.clear();
    v.token_to_id_.clear();
    for (std::size_t i = 0; i < n_tokens; ++i) {
      std::string tok;
      std::getline(f, tok);
      v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
      v.id_to_token_.push_back(tok);
    }
    if (v.id_to_token_.size() != n) throw std::runtime_error("vocab: truncated file " + path);
    return v;
  }

  static std::string lowercase(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  }

 private:
  void add_token(const std::string& t) {
    if (token_to_id_.count(t)) return;
    token_to_id_[t] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(t);
  }

  static std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> words;
    std::string cur;
    for (char c : s) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
  }

  static std::vector<std::string> char_symbols(const std::string& word) {
    std::vector<std::string> syms;
    for (char c : word) syms.emplace_back(1, c);
    if (!syms.empty()) syms.back() += "</w>";
    return syms;
  }

  static std::vector<std::string> merge_once(const std::vector<std::string>& syms,
                                             const std::string& a, const std::string& b) {
    std::vector<std::string> out;
    out.reserve(syms.size());
    std::size_t i = 0;
    while (i < syms.size()) {
      if (i + 1 < syms.size() && syms[i] == a && syms[i + 1] == b) {
        out.push_back(a + b);
        i += 2;
      } else {
        out.push_back(syms[i++]);
      }
    }
    return out;
  }

  std::vector<std::string> apply_merges(std::vector<std::string> syms) const {
    for (const auto& [a, b] : merges_) syms = merge_once(syms, a, b);
    return syms;
  }

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::size_t max_len_ = 100;
};

}  // namespace plural
