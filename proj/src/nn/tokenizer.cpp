#include "pgs/nn/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "pgs/digest.hpp"

namespace pgs::nn {

namespace {

bool printable(char c) { return c >= 32 && c <= 126; }

// Splits text into words; every space starts a new word and stays attached to it.
std::vector<std::string> pre_tokenize(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (c == ' ' && !cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
    cur.push_back(c);
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<std::string> split_chars(const std::string& word) {
  std::vector<std::string> out;
  out.reserve(word.size());
  for (char c : word) out.emplace_back(1, c);
  return out;
}

void apply_merge(std::vector<std::string>& symbols, const std::string& a, const std::string& b) {
  std::vector<std::string> out;
  out.reserve(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (i + 1 < symbols.size() && symbols[i] == a && symbols[i + 1] == b) {
      out.push_back(a + b);
      ++i;
    } else {
      out.push_back(std::move(symbols[i]));
    }
  }
  symbols = std::move(out);
}

}  // namespace

Tokenizer::Tokenizer(std::vector<std::pair<std::string, std::string>> merges) : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    const auto& [a, b] = merges_[i];
    if (a.empty() || b.empty()) throw std::invalid_argument("tokenizer merge with an empty side");
    for (char c : a + b) {
      if (!printable(c)) throw std::invalid_argument("tokenizer merges must be printable ASCII");
    }
    if (!rank_.emplace(merges_[i], i).second) throw std::invalid_argument("duplicate tokenizer merge");
    const std::string piece = a + b;
    pieces_.push_back(piece);
    ids_.emplace(piece, static_cast<std::int32_t>(kCharBase + kCharCount + i));
  }
}

Tokenizer Tokenizer::train(std::span<const std::string> corpus, std::size_t max_merges, std::size_t min_count) {
  std::map<std::string, std::size_t> word_counts;
  for (const std::string& line : corpus) {
    for (std::string& w : pre_tokenize(line)) {
      if (std::all_of(w.begin(), w.end(), printable)) ++word_counts[std::move(w)];
    }
  }
  std::vector<std::pair<std::vector<std::string>, std::size_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [w, n] : word_counts) words.emplace_back(split_chars(w), n);

  std::vector<std::pair<std::string, std::string>> merges;
  while (merges.size() < max_merges) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [symbols, n] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) pairs[{symbols[i], symbols[i + 1]}] += n;
    }
    const std::pair<std::string, std::string>* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, n] : pairs) {  // map order makes ties lexicographic
      if (n > best_count) {
        best = &pair;
        best_count = n;
      }
    }
    if (!best || best_count < std::max<std::size_t>(min_count, 1)) break;
    const auto merge = *best;
    for (auto& [symbols, n] : words) apply_merge(symbols, merge.first, merge.second);
    merges.push_back(merge);
  }
  return Tokenizer(std::move(merges));
}

std::vector<std::int32_t> Tokenizer::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  for (const std::string& word : pre_tokenize(text)) {
    std::vector<std::string> symbols = split_chars(word);
    if (!merges_.empty()) {
      while (symbols.size() > 1) {
        std::size_t best_rank = merges_.size();
        for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
          auto it = rank_.find({symbols[i], symbols[i + 1]});
          if (it != rank_.end()) best_rank = std::min(best_rank, it->second);
        }
        if (best_rank == merges_.size()) break;
        apply_merge(symbols, merges_[best_rank].first, merges_[best_rank].second);
      }
    }
    for (const std::string& s : symbols) {
      if (s.size() == 1) {
        const char c = s[0];
        ids.push_back(printable(c) ? kCharBase + (c - 32) : kUnk);
      } else {
        ids.push_back(ids_.find(s)->second);
      }
    }
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (std::int32_t id : ids) {
    if (id == kPad) continue;
    if (id == kSep) {
      out.push_back('\n');
    } else if (id == kUnk) {
      out.push_back('?');
    } else if (id >= kCharBase && id < kCharBase + kCharCount) {
      out.push_back(static_cast<char>(32 + id - kCharBase));
    } else {
      const auto m = static_cast<std::size_t>(id - kCharBase - kCharCount);
      if (m >= pieces_.size()) throw std::out_of_range("token id outside the vocabulary");
      out += pieces_[m];
    }
  }
  return out;
}

nlohmann::json Tokenizer::to_json() const {
  nlohmann::json merges = nlohmann::json::array();
  for (const auto& [a, b] : merges_) merges.push_back({a, b});
  return {{"type", "bpe"}, {"special", {{"pad", kPad}, {"sep", kSep}, {"unk", kUnk}}}, {"merges", std::move(merges)}};
}

Tokenizer Tokenizer::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("type", "") != "bpe" || !j.contains("merges")) {
    throw std::invalid_argument("not a tokenizer file");
  }
  std::vector<std::pair<std::string, std::string>> merges;
  for (const auto& m : j["merges"]) {
    if (!m.is_array() || m.size() != 2) throw std::invalid_argument("tokenizer merge must be a pair");
    merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
  }
  return Tokenizer(std::move(merges));
}

void Tokenizer::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write tokenizer file '" + path + "'");
  out << to_json().dump(1) << '\n';
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open tokenizer file '" + path + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("tokenizer file '" + path + "' is not valid JSON: " + e.what());
  }
}

std::string Tokenizer::hash() const { return digest_hex(to_json()["merges"].dump()); }

TokenizedState tokenize_state(std::span<const ProofMethod> methods, const Tokenizer& tok, const TokenCaps& caps) {
  if (caps.max_methods == 0 || caps.max_tokens_per_method == 0) throw std::invalid_argument("token caps must be >= 1");
  std::vector<std::size_t> order(methods.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return methods[a].rank < methods[b].rank; });
  if (order.size() > caps.max_methods) order.resize(caps.max_methods);
  TokenizedState out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0) out.ids.push_back(Tokenizer::kSep);
    std::vector<std::int32_t> ids = tok.encode(methods[order[k]].text);
    if (ids.empty()) ids.push_back(Tokenizer::kUnk);
    if (ids.size() > caps.max_tokens_per_method) ids.resize(caps.max_tokens_per_method);
    const std::size_t begin = out.ids.size();
    out.ids.insert(out.ids.end(), ids.begin(), ids.end());
    out.spans.emplace_back(begin, out.ids.size());
    out.kept.push_back(order[k]);
  }
  return out;
}

}  // namespace pgs::nn
