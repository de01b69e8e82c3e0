// dst/tokenizer.hpp
//
// Word-level vocabulary with fixed special tokens. The word region is
// frequency-sorted (descending), which token dropout relies on for its
// rank cut-off K.

// Copyright 2026 The dstkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef DST_TOKENIZER_HPP
#define DST_TOKENIZER_HPP

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "dst/corpus.hpp"
#include "dst/core.hpp"

namespace dst {

class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNone = 4;
  static constexpr int kNumSpecials = 5;

  Tokenizer() = default;

  // Vocabulary from corpus plus schema text (slot names, descriptions,
  // candidate values and the literal "." / "is" used by concept encodings).
  // Words below min_count map to UNK; schema-derived words are always kept.
  static Tokenizer build(const Corpus& corpus, const Schema& schema, int min_count = 1) {
    if (corpus.empty()) fail("tokenizer", "cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::int64_t> counts;
    auto add_text = [&](const std::string& text) {
      for (const auto& w : tokenize_words(text)) counts[w] += 1;
    };
    for (const Dialogue& d : corpus)
      for (const Turn& t : d.turns) {
        add_text(t.user);
        add_text(t.system);
      }
    std::map<std::string, bool> forced;
    auto force_text = [&](const std::string& text) {
      for (const auto& w : tokenize_words(text)) forced[w] = true;
    };
    for (const SlotSpec& s : schema.slots) {
      force_text(s.name);
      force_text(s.description);
      for (const auto& v : s.candidate_values) force_text(v);
    }
    force_text(". is");

    std::vector<std::pair<std::string, std::int64_t>> kept;
    for (const auto& [w, c] : counts)
      if (c >= min_count || forced.count(w)) kept.push_back({w, c});
    for (const auto& [w, f] : forced)
      if (!counts.count(w)) kept.push_back({w, 0});
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });

    Tokenizer t;
    t.words_.reserve(kept.size());
    for (const auto& [w, c] : kept) {
      t.index_[w] = static_cast<int>(t.words_.size()) + kNumSpecials;
      t.words_.push_back(w);
    }
    return t;
  }

  int vocab_size() const { return static_cast<int>(words_.size()) + kNumSpecials; }
  int num_words() const { return static_cast<int>(words_.size()); }

  int word_id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kUnk : it->second;
  }

  // Frequency rank 1..num_words() -> token id.
  int id_of_rank(int rank) const {
    if (rank < 1 || rank > num_words()) fail("tokenizer", "rank out of range");
    return rank - 1 + kNumSpecials;
  }

  // Token id -> frequency rank (0 for specials).
  int rank_of_id(int id) const {
    return id >= kNumSpecials ? id - kNumSpecials + 1 : 0;
  }

  bool is_special(int id) const { return id < kNumSpecials; }

  std::vector<int> encode_words(const std::string& text) const {
    std::vector<int> ids;
    for (const auto& w : tokenize_words(text)) ids.push_back(word_id(w));
    return ids;
  }

  std::string token_string(int id) const {
    switch (id) {
      case kPad: return "[pad]";
      case kCls: return "[cls]";
      case kSep: return "[sep]";
      case kUnk: return "[unk]";
      case kNone: return "[none]";
      default: break;
    }
    int w = id - kNumSpecials;
    if (w < 0 || w >= static_cast<int>(words_.size())) fail("tokenizer", "token id out of range");
    return words_[static_cast<std::size_t>(w)];
  }

  std::string decode(const std::vector<int>& ids, std::size_t begin, std::size_t end) const {
    std::string out;
    for (std::size_t i = begin; i < end && i < ids.size(); ++i) {
      if (!out.empty()) out.push_back(' ');
      out += token_string(ids[i]);
    }
    return out;
  }

  // Versioned vocab file: header line, then one word per line in rank order.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) fail("io", "cannot write vocab file: " + path);
    out << "dstkit-vocab 1\n";
    for (const auto& w : words_) out << w << "\n";
  }

  static Tokenizer load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot open vocab file: " + path);
    std::string header;
    std::getline(in, header);
    if (header != "dstkit-vocab 1") fail("parse", "unsupported vocab file header: " + header);
    Tokenizer t;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      t.index_[line] = static_cast<int>(t.words_.size()) + kNumSpecials;
      t.words_.push_back(line);
    }
    return t;
  }

  json to_json() const {
    json j;
    j["version"] = 1;
    j["words"] = words_;
    return j;
  }

  static Tokenizer from_json(const json& j) {
    Tokenizer t;
    for (const auto& w : j.at("words")) {
      t.index_[w.get<std::string>()] = static_cast<int>(t.words_.size()) + kNumSpecials;
      t.words_.push_back(w.get<std::string>());
    }
    return t;
  }

 private:
  std::vector<std::string> words_;  // rank order, most frequent first
  std::unordered_map<std::string, int> index_;
};

}  // namespace dst

#endif  // DST_TOKENIZER_HPP
