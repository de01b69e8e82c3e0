// dst/protodst.hpp
//
// Spanless training. A proto tagger (encoder + sequence attention) learns to
// locate occurrences of random token sequences; it is then queried with
// state-label values to auto-generate span labels, smoothed by a
// morphological closing over the tag weights.

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

#ifndef DST_PROTODST_HPP
#define DST_PROTODST_HPP

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dst/autodiff.hpp"
#include "dst/core.hpp"
#include "dst/corpus.hpp"
#include "dst/encoder.hpp"
#include "dst/heads.hpp"
#include "dst/model.hpp"
#include "dst/tokenizer.hpp"

namespace dst {

struct ProtoConfig {
  int max_random_len = 4;
  double p_neg = 0.10;
  double nu = 0.3;  // closing threshold; kernel is fixed [1,1,1]
  int max_epochs = 30;
  std::uint64_t seed = 1;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.1;
  int batch_size = 16;
  double weight_decay = 0.01;
  bool use_none = true;  // disables negative sampling when false
  double probe_fraction = 0.1;
  int probe_count = 64;
  int restart_budget = 3;

  void validate() const {
    if (max_random_len < 1) fail("config", "max_random_len must be >= 1");
    if (nu < 0.0 || nu >= 1.0) fail("config", "nu must lie in [0,1)");
    if (p_neg < 0.0 || p_neg > 1.0) fail("config", "p_neg must lie in [0,1]");
  }

  json to_json() const {
    return json{{"max_random_len", max_random_len}, {"p_neg", p_neg},
                {"nu", nu},                         {"max_epochs", max_epochs},
                {"seed", seed},                     {"learning_rate", learning_rate},
                {"warmup_fraction", warmup_fraction}, {"batch_size", batch_size},
                {"weight_decay", weight_decay},     {"use_none", use_none},
                {"probe_fraction", probe_fraction}, {"probe_count", probe_count},
                {"restart_budget", restart_budget}};
  }
  static ProtoConfig from_json(const json& j) {
    ProtoConfig c;
    c.max_random_len = j.value("max_random_len", c.max_random_len);
    c.p_neg = j.value("p_neg", c.p_neg);
    c.nu = j.value("nu", c.nu);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.seed = j.value("seed", c.seed);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.use_none = j.value("use_none", c.use_none);
    c.probe_fraction = j.value("probe_fraction", c.probe_fraction);
    c.probe_count = j.value("probe_count", c.probe_count);
    c.restart_budget = j.value("restart_budget", c.restart_budget);
    return c;
  }
};

// ---------------------------------------------------------------------------
// Proto input: CLS NONE SEP U_t SEP M_t SEP — turns are tagged without their
// history.
// ---------------------------------------------------------------------------

struct ProtoInput {
  std::vector<int> ids;
  int none_position = 1;
  int user_start = 0, user_len = 0;
  int system_start = 0, system_len = 0;
  int vocab_size = 0;  // for corpus-foreign negative construction

  int length() const { return static_cast<int>(ids.size()); }

  // Attention mask for value tagging: user tokens plus the NONE position.
  std::vector<std::uint8_t> tagging_mask() const {
    std::vector<std::uint8_t> m(ids.size(), 0);
    m[static_cast<std::size_t>(none_position)] = 1;
    for (int i = 0; i < user_len; ++i) m[static_cast<std::size_t>(user_start + i)] = 1;
    return m;
  }
};

inline ProtoInput assemble_proto(const Turn& turn, const Tokenizer& tok, int max_len) {
  ProtoInput out;
  auto u = tok.encode_words(turn.user);
  auto m = tok.encode_words(turn.system);
  int need = 3 + static_cast<int>(u.size()) + 1 + static_cast<int>(m.size()) + 1;
  if (need > max_len) fail("oversize", "proto input exceeds max_len");
  out.vocab_size = tok.vocab_size();
  out.ids = {Tokenizer::kCls, Tokenizer::kNone, Tokenizer::kSep};
  out.user_start = static_cast<int>(out.ids.size());
  out.user_len = static_cast<int>(u.size());
  out.ids.insert(out.ids.end(), u.begin(), u.end());
  out.ids.push_back(Tokenizer::kSep);
  out.system_start = static_cast<int>(out.ids.size());
  out.system_len = static_cast<int>(m.size());
  out.ids.insert(out.ids.end(), m.begin(), m.end());
  out.ids.push_back(Tokenizer::kSep);
  return out;
}

inline std::vector<int> assemble_query(const std::vector<int>& word_ids) {
  std::vector<int> ids{Tokenizer::kCls};
  ids.insert(ids.end(), word_ids.begin(), word_ids.end());
  ids.push_back(Tokenizer::kSep);
  return ids;
}

// ---------------------------------------------------------------------------
// Query sampling (random self-labeled sequences)
// ---------------------------------------------------------------------------

struct SampledQuery {
  std::vector<int> query_ids;  // word ids only, without CLS/SEP
  Vector target;               // |X| over the proto input
  bool negative = false;
  bool fallback = false;  // negative construction failed; positive emitted
};

namespace detail {

// Marks all occurrences of `needle` inside [start, start+len) of ids.
inline int mark_occurrences(const std::vector<int>& ids, int start, int len,
                            const std::vector<int>& needle, Vector& target) {
  int hits = 0;
  if (needle.empty() || len < static_cast<int>(needle.size())) return 0;
  for (int i = start; i + static_cast<int>(needle.size()) <= start + len; ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < needle.size(); ++j)
      if (ids[static_cast<std::size_t>(i) + j] != needle[j]) {
        ok = false;
        break;
      }
    if (ok) {
      for (std::size_t j = 0; j < needle.size(); ++j)
        target(i + static_cast<int>(j)) = 1.0;
      ++hits;
    }
  }
  return hits;
}

inline bool occurs_anywhere(const ProtoInput& in, const std::vector<int>& needle) {
  Vector scratch = Vector::Zero(in.length());
  return mark_occurrences(in.ids, in.user_start, in.user_len, needle, scratch) +
             mark_occurrences(in.ids, in.system_start, in.system_len, needle, scratch) >
         0;
}

}  // namespace detail

// Draws a positive query (a contiguous run of word tokens from U_t or M_t,
// target spread over all its occurrences) or, with probability p_neg, a
// negative query absent from the input (target on x_NONE). Negative
// construction permutes a sampled run and falls back to a corpus-foreign
// token after bounded retries; if that fails too, a positive is emitted.
inline SampledQuery sample_query(const ProtoInput& input, const ProtoConfig& config, Rng& rng) {
  struct Region {
    int start, len;
  };
  std::vector<Region> regions;
  if (input.user_len > 0) regions.push_back({input.user_start, input.user_len});
  if (input.system_len > 0) regions.push_back({input.system_start, input.system_len});
  if (regions.empty()) fail("proto", "proto input has no word tokens");

  auto draw_run = [&]() {
    // Pick a start position uniformly over all word tokens.
    int total = 0;
    for (const auto& r : regions) total += r.len;
    int pick = static_cast<int>(rng.uniform_int(0, total - 1));
    Region reg = regions[0];
    for (const auto& r : regions) {
      if (pick < r.len) {
        reg = r;
        break;
      }
      pick -= r.len;
    }
    int remaining = reg.len - pick;
    int len = static_cast<int>(rng.uniform_int(1, std::min(config.max_random_len, remaining)));
    std::vector<int> ids(input.ids.begin() + reg.start + pick,
                         input.ids.begin() + reg.start + pick + len);
    return ids;
  };

  SampledQuery out;
  double p_neg = config.use_none ? config.p_neg : 0.0;
  if (rng.bernoulli(p_neg)) {
    for (int attempt = 0; attempt < 8; ++attempt) {
      std::vector<int> ids = draw_run();
      rng.shuffle(ids);
      if (!detail::occurs_anywhere(input, ids)) {
        out.query_ids = ids;
        out.negative = true;
        out.target = Vector::Zero(input.length());
        out.target(input.none_position) = 1.0;
        return out;
      }
    }
    // Corpus-foreign unigram: a random word id absent from the input.
    if (input.vocab_size > Tokenizer::kNumSpecials) {
      std::set<int> present(input.ids.begin(), input.ids.end());
      for (int attempt = 0; attempt < 16; ++attempt) {
        int id = static_cast<int>(
            rng.uniform_int(Tokenizer::kNumSpecials, input.vocab_size - 1));
        if (present.count(id)) continue;
        out.query_ids = {id};
        out.negative = true;
        out.target = Vector::Zero(input.length());
        out.target(input.none_position) = 1.0;
        return out;
      }
    }
    out.fallback = true;  // emit a positive below
  }
  std::vector<int> ids = draw_run();
  out.query_ids = ids;
  out.target = Vector::Zero(input.length());
  detail::mark_occurrences(input.ids, input.user_start, input.user_len, ids, out.target);
  detail::mark_occurrences(input.ids, input.system_start, input.system_len, ids, out.target);
  double s = out.target.sum();
  out.target /= s;  // scale to unit mass
  return out;
}

// ---------------------------------------------------------------------------
// Failed-start detection: near-uniform tag distributions across probes.
// True when the mean of (max weight - 2/|X|) over probes is negative.
// ---------------------------------------------------------------------------

inline bool detect_failed_start(const std::vector<Vector>& probe_predictions) {
  if (probe_predictions.empty()) fail("proto", "no probe predictions");
  double mean = 0.0;
  for (const Vector& p : probe_predictions)
    mean += p.maxCoeff() - 2.0 / static_cast<double>(p.size());
  return mean / static_cast<double>(probe_predictions.size()) < 0.0;
}

// ---------------------------------------------------------------------------
// Morphological closing over word-position tag weights: dilation (window-3
// sliding max, zero-padded), threshold > nu, erosion (window-3 sliding min,
// one-padded). Fills single-token gaps.
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> close_tags(const Vector& weights, double nu) {
  int n = static_cast<int>(weights.size());
  std::vector<std::uint8_t> out(static_cast<std::size_t>(n), 0);
  if (n == 0) return out;
  auto w_at = [&](int i) { return (i < 0 || i >= n) ? 0.0 : weights(i); };
  std::vector<std::uint8_t> binary(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double dil = std::max({w_at(i - 1), w_at(i), w_at(i + 1)});
    binary[static_cast<std::size_t>(i)] = dil > nu ? 1 : 0;
  }
  auto b_at = [&](int i) -> int {
    return (i < 0 || i >= n) ? 1 : binary[static_cast<std::size_t>(i)];
  };
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::min({b_at(i - 1), b_at(i), b_at(i + 1)}));
  return out;
}

// ---------------------------------------------------------------------------
// Proto forward pass and training
// ---------------------------------------------------------------------------

struct ProtoVars {
  EncoderVars enc;
  MhaVars mha_q;
};

inline ProtoVars bind_proto(Tape& tape, ProtoModel& model, bool with_grad) {
  return ProtoVars{bind_encoder(tape, model.encoder, with_grad),
                   bind_mha(tape, model.mha_q, with_grad)};
}

// Tag weights for a query over a proto input. No mask during training
// (queries may come from either side); value tagging applies the user mask.
inline Var proto_tag_weights(Tape& tape, const ProtoVars& pv, const ProtoInput& input,
                             const std::vector<int>& query_word_ids,
                             const std::vector<std::uint8_t>* mask, bool train, Rng* rng) {
  EncoderOutput turn_enc = encode(tape, pv.enc, input.ids, train, rng);
  EncoderOutput query_enc = encode(tape, pv.enc, assemble_query(query_word_ids), train, rng);
  MhaResult att = mha(tape, pv.mha_q, query_enc.pooled, turn_enc.tokens, turn_enc.tokens, mask);
  return att.weights;
}

struct ProtoTrainResult {
  int restarts = 0;
  int epochs_run = 0;
  int negative_fallbacks = 0;
  std::vector<double> epoch_loss;
};

inline ProtoTrainResult proto_train(ProtoModel& model, const Corpus& corpus,
                                    const ProtoConfig& cfg) {
  cfg.validate();
  struct Item {
    const Turn* turn;
  };
  std::vector<Item> items;
  for (const Dialogue& d : corpus)
    for (const Turn& t : d.turns)
      if (!tokenize_words(t.user).empty() || !tokenize_words(t.system).empty())
        items.push_back({&t});
  if (items.empty()) fail("proto", "corpus has no usable turns");

  ProtoTrainResult result;
  int probe_epoch = std::max(1, static_cast<int>(std::ceil(cfg.probe_fraction * cfg.max_epochs)));

  for (int restart = 0; restart <= cfg.restart_budget; ++restart) {
    std::uint64_t run_seed = splitmix64(cfg.seed + 0x5eed0000ULL * static_cast<std::uint64_t>(restart));
    model.init(model.schema, model.tokenizer, model.encoder.config, run_seed);
    AdamW opt;
    opt.weight_decay = cfg.weight_decay;
    std::vector<Param*> params = model.all_params();
    Rng shuffle_rng = Rng(run_seed).derive(21);
    long steps_per_epoch = (static_cast<long>(items.size()) + cfg.batch_size - 1) / cfg.batch_size;
    long total_steps = steps_per_epoch * cfg.max_epochs;
    long step = 0;
    bool failed_start = false;
    result.epoch_loss.clear();

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
      std::vector<std::size_t> order(items.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      shuffle_rng.shuffle(order);
      double epoch_loss = 0.0;
      long epoch_batches = 0;

      for (long b = 0; b < steps_per_epoch; ++b) {
        ++step;
        Tape tape;
        ProtoVars pv = bind_proto(tape, model, true);
        Var total;
        bool first = true;
        int batch_n = 0;
        for (long k = b * cfg.batch_size;
             k < std::min<long>((b + 1) * cfg.batch_size, static_cast<long>(items.size())); ++k) {
          Rng sample_rng = Rng(run_seed).derive(0x9a0000 + static_cast<std::uint64_t>(epoch) * 1000003 +
                                                static_cast<std::uint64_t>(order[static_cast<std::size_t>(k)]));
          const Turn& turn = *items[order[static_cast<std::size_t>(k)]].turn;
          ProtoInput input = assemble_proto(turn, model.tokenizer, model.encoder.config.max_len);
          SampledQuery q = sample_query(input, cfg, sample_rng);
          if (q.fallback) ++result.negative_fallbacks;
          Var weights =
              proto_tag_weights(tape, pv, input, q.query_ids, nullptr, true, &sample_rng);
          Var diff = tape.sub(weights, tape.constant(q.target.transpose()));
          Var loss = tape.mean_all(tape.hadamard(diff, diff));
          total = first ? loss : tape.add(total, loss);
          first = false;
          ++batch_n;
        }
        total = tape.scale(total, 1.0 / std::max(1, batch_n));
        double lv = tape.val(total)(0, 0);
        if (!std::isfinite(lv)) fail("divergence", "non-finite proto loss");
        epoch_loss += lv;
        ++epoch_batches;
        tape.backward(total);
        opt.step(params, scheduled_lr(cfg.learning_rate, step, total_steps, cfg.warmup_fraction));
      }
      result.epoch_loss.push_back(epoch_loss / static_cast<double>(epoch_batches));
      result.epochs_run = epoch;

      if (epoch == probe_epoch) {
        // Probe with positive queries; a near-uniform tagger is a failed start.
        Rng probe_rng = Rng(run_seed).derive(404);
        std::vector<Vector> probes;
        for (int p = 0; p < cfg.probe_count; ++p) {
          const Turn& turn = *items[static_cast<std::size_t>(probe_rng.uniform_int(
                                        0, static_cast<std::int64_t>(items.size()) - 1))]
                                  .turn;
          ProtoInput input = assemble_proto(turn, model.tokenizer, model.encoder.config.max_len);
          ProtoConfig pos_cfg = cfg;
          pos_cfg.p_neg = 0.0;
          SampledQuery q = sample_query(input, pos_cfg, probe_rng);
          Tape tape;
          ProtoVars pv = bind_proto(tape, model, false);
          Var w = proto_tag_weights(tape, pv, input, q.query_ids, nullptr, false, nullptr);
          probes.push_back(tape.val(w).row(0).transpose());
        }
        if (detect_failed_start(probes)) {
          failed_start = true;
          break;
        }
      }
    }
    if (!failed_start) return result;
    ++result.restarts;
  }
  fail("proto", "restart budget exhausted: proto training kept collapsing to uniform tags",
       json{{"restarts", result.restarts}});
}

// ---------------------------------------------------------------------------
// Value tagging and auto-labeling
// ---------------------------------------------------------------------------

struct TagValueResult {
  bool accepted = false;
  std::vector<std::uint8_t> tags;  // over U_t token positions
  Vector weights;                  // full |X| attention distribution
  double word_mass = 0.0;
};

// Queries the tagger with a state value; attention is restricted to user
// tokens plus x_NONE. Accepted iff more than half the mass lands on word
// tokens. Tags are normalized, then closed; the NONE position participates
// in the distribution but is excluded from IO decoding.
inline TagValueResult tag_value(ProtoModel& model, const Turn& turn, const std::string& value,
                                const ProtoConfig& cfg) {
  ProtoInput input = assemble_proto(turn, model.tokenizer, model.encoder.config.max_len);
  TagValueResult out;
  out.tags.assign(static_cast<std::size_t>(input.user_len), 0);
  if (input.user_len == 0) return out;
  std::vector<int> query_ids = model.tokenizer.encode_words(value);
  if (query_ids.empty()) return out;
  auto mask = input.tagging_mask();
  Tape tape;
  ProtoVars pv = bind_proto(tape, model, false);
  Var w = proto_tag_weights(tape, pv, input, query_ids, &mask, false, nullptr);
  out.weights = tape.val(w).row(0).transpose();
  for (int i = 0; i < input.user_len; ++i) out.word_mass += out.weights(input.user_start + i);
  out.accepted = out.word_mass > 0.5;
  if (!out.accepted) return out;
  // Close over the full array: the surrounding special positions carry
  // negative normalized weights and keep the kernel from bleeding across
  // region boundaries. NONE and specials are excluded from IO decoding.
  Vector normalized = normalize_tags(out.weights);
  auto closed = close_tags(normalized, cfg.nu);
  for (int i = 0; i < input.user_len; ++i)
    out.tags[static_cast<std::size_t>(i)] = closed[static_cast<std::size_t>(input.user_start + i)];
  return out;
}

struct AutolabelStats {
  std::map<std::string, int> attempts, accepted, rejected;
  int gate_conflicts = 0;
};

inline void write_rejection_stats(const AutolabelStats& stats, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write rejection stats: " + path);
  out << "slot,attempts,accepted,rejected\n";
  for (const auto& [slot, attempts] : stats.attempts) {
    int acc = stats.accepted.count(slot) ? stats.accepted.at(slot) : 0;
    int rej = stats.rejected.count(slot) ? stats.rejected.at(slot) : 0;
    out << slot << "," << attempts << "," << acc << "," << rej << "\n";
  }
}

// Replaces span labels with tagger output. Values are tagged per turn on the
// history-free input; a value shared by several slots yields identical tags
// for each. Gate labels are re-derived without the text-search witness, so
// rejected taggings resolve to none (counted, not fatal). History-region tag
// targets arise later from the per-turn spans during assembly.
inline Corpus autolabel(ProtoModel& model, const Corpus& corpus, const Schema& schema,
                        const ProtoConfig& cfg, AutolabelStats* stats_out = nullptr) {
  static const std::set<std::string> kNonExtractable{"dontcare", "true", "false"};
  AutolabelStats stats;
  Corpus out;
  for (const Dialogue& src : corpus) {
    bool any_state = false;
    for (const Turn& t : src.turns) any_state = any_state || !t.state.empty();
    if (!any_state) {
      out.push_back(src);
      continue;
    }
    Dialogue d = src;
    d.provenance = "auto";
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      Turn& turn = d.turns[t];
      turn.spans.clear();
      turn.gates.clear();
      turn.has_gates = false;
      // Distinct values first; slots sharing a value receive identical tags.
      std::map<std::string, std::vector<SpanRef>> value_spans;
      for (const auto& [slot, value] : turn.state) {
        if (kNonExtractable.count(value)) continue;
        if (value_spans.count(value)) continue;
        TagValueResult r = tag_value(model, turn, value, cfg);
        std::vector<SpanRef> refs;
        if (r.accepted) {
          int i = 0;
          int n = static_cast<int>(r.tags.size());
          while (i < n) {
            if (r.tags[static_cast<std::size_t>(i)]) {
              int s = i;
              while (i < n && r.tags[static_cast<std::size_t>(i)]) ++i;
              refs.push_back(SpanRef{static_cast<int>(t) + 1, s, i});
            } else {
              ++i;
            }
          }
        }
        value_spans[value] = refs;
      }
      for (const auto& [slot, value] : turn.state) {
        if (kNonExtractable.count(value)) continue;
        stats.attempts[slot] += 1;
        const auto& refs = value_spans.at(value);
        if (refs.empty()) {
          stats.rejected[slot] += 1;
        } else {
          stats.accepted[slot] += 1;
          turn.spans[slot] = refs;
        }
      }
    }
    DeriveStats ds;
    d = derive_gate_labels(d, schema, /*lenient=*/true, &ds, /*allow_text_witness=*/false);
    stats.gate_conflicts += ds.conflicts;
    out.push_back(std::move(d));
  }
  if (stats_out) *stats_out = stats;
  return out;
}

}  // namespace dst

#endif  // DST_PROTODST_HPP
