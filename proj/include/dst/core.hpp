// dst/core.hpp

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

#ifndef DST_CORE_HPP
#define DST_CORE_HPP

#include <Eigen/Dense>
#include <json.hpp>

#include <cctype>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dst {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using json = nlohmann::json;

// Error with a stable machine-readable kind plus an optional detail record.
// The CLI surfaces these as {"error": {"kind", "message", "detail"}}.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message, json detail = json::object())
      : std::runtime_error(message), kind_(std::move(kind)), detail_(std::move(detail)) {}
  const std::string& kind() const { return kind_; }
  const json& detail() const { return detail_; }

 private:
  std::string kind_;
  json detail_;
};

[[noreturn]] inline void fail(const std::string& kind, const std::string& message,
                              json detail = json::object()) {
  throw Error(kind, message, std::move(detail));
}

// ---------------------------------------------------------------------------
// Deterministic RNG.
//
// All stochastic components draw from Rng streams derived from one master
// seed. Bounded sampling is hand-rolled (rejection on the top bits) so that
// sequences are stable across standard library implementations.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return gen_(); }

  // Independent stream identified by (seed, salt); order of derivation does
  // not perturb the parent stream.
  Rng derive(std::uint64_t salt) const { return Rng(splitmix64(seed_ ^ (salt * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL))); }

  // Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [lo, hi], inclusive. Unbiased via rejection.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi < lo) fail("rng", "uniform_int: empty range");
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    if (span == 0) return static_cast<std::int64_t>(next_u64());  // full range
    std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % span + 1) % span;
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r > limit);
    return lo + static_cast<std::int64_t>(r % span);
  }

  double normal() {
    // Marsaglia polar method; deterministic given the stream.
    while (true) {
      double u = 2.0 * uniform() - 1.0;
      double v = 2.0 * uniform() - 1.0;
      double s = u * u + v * v;
      if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(items[i - 1], items[j]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    if (items.empty()) fail("rng", "pick from empty list");
    return items[static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(items.size()) - 1))];
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// FNV-1a digest, used for checkpoint/report fingerprints.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Text helpers. Values are normalized to lowercase with single internal
// spaces; word tokenization keeps hyphenated words (slot names) intact and
// splits sentence punctuation into standalone tokens.
// ---------------------------------------------------------------------------

inline std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::string normalize_value(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  bool in_space = true;
  for (char ch : raw) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!in_space && !out.empty()) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(static_cast<char>(std::tolower(c)));
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

inline bool is_word_char(unsigned char c) {
  return std::isalnum(c) || c == '-' || c == '_';
}

// Word-level tokenization: runs of [alnum_-] form tokens, punctuation marks
// become single-character tokens, everything lowercased.
inline std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> toks;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) {
      toks.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      flush();
    } else {
      flush();
      toks.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  flush();
  return toks;
}

inline std::string join_tokens(const std::vector<std::string>& toks, std::size_t begin, std::size_t end) {
  std::string out;
  for (std::size_t i = begin; i < end && i < toks.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

// All start positions where `needle` occurs as a contiguous subsequence.
inline std::vector<int> find_subsequence(const std::vector<std::string>& haystack,
                                         const std::vector<std::string>& needle) {
  std::vector<int> hits;
  if (needle.empty() || haystack.size() < needle.size()) return hits;
  for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (haystack[i + j] != needle[j]) {
        ok = false;
        break;
      }
    }
    if (ok) hits.push_back(static_cast<int>(i));
  }
  return hits;
}

}  // namespace dst

#endif  // DST_CORE_HPP
