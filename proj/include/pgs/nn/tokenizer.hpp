#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgs/proof_graph.hpp"

namespace pgs::nn {

/// Byte-pair encoder over printable ASCII. Without merges it degrades to a
/// character-level vocabulary: id 3 + (c - 32) for c in [32, 126].
class Tokenizer {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kSep = 1;
  static constexpr std::int32_t kUnk = 2;
  static constexpr std::int32_t kCharBase = 3;
  static constexpr std::int32_t kCharCount = 95;

  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::pair<std::string, std::string>> merges);

  /// Learns up to `max_merges` merges from `corpus`. Words keep their leading
  /// space; the most frequent adjacent pair is merged first and ties go to
  /// the lexicographically smallest pair. Pairs seen fewer than `min_count`
  /// times are not merged.
  static Tokenizer train(std::span<const std::string> corpus, std::size_t max_merges, std::size_t min_count = 2);

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;

  std::size_t vocab_size() const { return static_cast<std::size_t>(kCharBase + kCharCount) + merges_.size(); }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  nlohmann::json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);
  /// Stable digest of the merge list.
  std::string hash() const;

 private:
  std::vector<std::pair<std::string, std::string>> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> rank_;
  std::map<std::string, std::int32_t, std::less<>> ids_;  // merged tokens only
  std::vector<std::string> pieces_;                        // merged token strings by merge index
};

/// Flattened model input for one state.
struct TokenizedState {
  std::vector<std::int32_t> ids;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end) per kept method
  std::vector<std::size_t> kept;                           // original method index per span
};

struct TokenCaps {
  std::size_t max_methods = 32;
  std::size_t max_tokens_per_method = 16;
  friend bool operator==(const TokenCaps&, const TokenCaps&) = default;
};

/// Joins the methods (lowest rank first) with separator tokens. Keeps the
/// first `max_methods` methods and `max_tokens_per_method` tokens of each; an
/// empty text becomes a single unknown token.
TokenizedState tokenize_state(std::span<const ProofMethod> methods, const Tokenizer& tok, const TokenCaps& caps);

}  // namespace pgs::nn
