// dst/training.hpp
//
// Joint training: per-turn loss over the four heads, token and history
// dropout, informed-value masking, the per-step slot / per-epoch value
// re-encoding regime, AdamW with linear warmup and decay, early stopping and
// checkpointing.

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

#ifndef DST_TRAINING_HPP
#define DST_TRAINING_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dst/core.hpp"
#include "dst/corpus.hpp"
#include "dst/encoder.hpp"
#include "dst/eval.hpp"
#include "dst/heads.hpp"
#include "dst/model.hpp"
#include "dst/tokenizer.hpp"
#include "dst/tracker.hpp"

namespace dst {

enum class UnkMode { random_token, unk_token };

struct TrainConfig {
  double lambda_g = 0.8;
  double lambda_q = 0.1;
  double lambda_f = 0.1;
  double lambda_m = 0.1;
  double learning_rate = 5e-5;
  double warmup_fraction = 0.1;
  int max_epochs = 50;
  double patience_fraction = 0.2;
  int batch_size = 16;
  double p_td = 0.3;
  double p_hd = 0.3;
  UnkMode p_unk_mode = UnkMode::random_token;
  double token_dropout_K_fraction = 0.2;
  bool inform_masking = false;
  double none_class_weight = 0.1;
  double weight_decay = 0.01;
  double tau = 0.3;
  std::uint64_t seed = 1;

  void validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(p_td) || !prob(p_hd) || !prob(warmup_fraction) || !prob(patience_fraction))
      fail("config", "probabilities must lie in [0,1]");
    if (lambda_g < 0 || lambda_q < 0 || lambda_f < 0 || lambda_m < 0)
      fail("config", "loss weights must be non-negative");
    if (token_dropout_K_fraction <= 0.0 || token_dropout_K_fraction > 1.0)
      fail("config", "token_dropout_K_fraction must lie in (0,1]");
    if (batch_size < 1 || max_epochs < 1) fail("config", "bad batch size or epoch count");
  }

  json to_json() const {
    return json{{"lambda_g", lambda_g},
                {"lambda_q", lambda_q},
                {"lambda_f", lambda_f},
                {"lambda_m", lambda_m},
                {"learning_rate", learning_rate},
                {"warmup_fraction", warmup_fraction},
                {"max_epochs", max_epochs},
                {"patience_fraction", patience_fraction},
                {"batch_size", batch_size},
                {"p_td", p_td},
                {"p_hd", p_hd},
                {"p_unk_mode", p_unk_mode == UnkMode::random_token ? "random_token" : "unk_token"},
                {"token_dropout_K_fraction", token_dropout_K_fraction},
                {"inform_masking", inform_masking},
                {"none_class_weight", none_class_weight},
                {"weight_decay", weight_decay},
                {"tau", tau},
                {"seed", seed}};
  }

  static TrainConfig from_json(const json& j) {
    TrainConfig c;
    c.lambda_g = j.value("lambda_g", c.lambda_g);
    c.lambda_q = j.value("lambda_q", c.lambda_q);
    c.lambda_f = j.value("lambda_f", c.lambda_f);
    c.lambda_m = j.value("lambda_m", c.lambda_m);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience_fraction = j.value("patience_fraction", c.patience_fraction);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.p_td = j.value("p_td", c.p_td);
    c.p_hd = j.value("p_hd", c.p_hd);
    if (j.contains("p_unk_mode"))
      c.p_unk_mode = j["p_unk_mode"].get<std::string>() == "unk_token" ? UnkMode::unk_token
                                                                       : UnkMode::random_token;
    c.token_dropout_K_fraction = j.value("token_dropout_K_fraction", c.token_dropout_K_fraction);
    c.inform_masking = j.value("inform_masking", c.inform_masking);
    c.none_class_weight = j.value("none_class_weight", c.none_class_weight);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.tau = j.value("tau", c.tau);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

// ---------------------------------------------------------------------------
// Per-turn labels
// ---------------------------------------------------------------------------

struct SlotLabels {
  GateClass gate = GateClass::none;
  Vector tag_target;     // |X| 0/1 marks; empty when not span-gated
  int refer_target = -1; // schema slot index
  int match_target = -1; // candidate index
};

struct TurnSample {
  const Dialogue* dialogue = nullptr;
  int turn = 0;  // 1-based
  AssembledInput input;
  std::vector<SlotLabels> slots;  // schema order
};

// Builds the assembled input plus all per-slot targets for one turn, given
// the (possibly history-dropped) history list.
inline TurnSample build_sample(const Dialogue& d, int turn_index,
                               const std::vector<const Turn*>& history, const Schema& schema,
                               const Tokenizer& tok, int max_len,
                               bool strict = true) {
  const Turn& turn = d.turns[static_cast<std::size_t>(turn_index - 1)];
  if (!turn.has_gates)
    fail("labeling", "dialogue " + d.id + " lacks gate labels; derive or autolabel first");
  TurnSample sample;
  sample.dialogue = &d;
  sample.turn = turn_index;
  sample.input = assemble_turn(turn, history, turn_index, tok, max_len);

  auto mentions = value_mentions(d);
  int n = sample.input.length();

  // Union of all value mentions across retained user segments — the token
  // dropout targets.
  sample.input.value_target_mask.assign(static_cast<std::size_t>(n), 0);
  auto mark = [&](const Segment& seg, int s, int e, std::vector<std::uint8_t>& mask) {
    for (int p = s; p < e && p < seg.len; ++p)
      if (p >= 0) mask[static_cast<std::size_t>(seg.start + p)] = 1;
  };
  for (const Segment& seg : sample.input.segments) {
    if (seg.role != Segment::Role::cur_user && seg.role != Segment::Role::hist_user) continue;
    const auto& m = mentions[static_cast<std::size_t>(seg.turn - 1)];
    for (const auto& [value, spans] : m)
      for (auto [s, e] : spans) mark(seg, s, e, sample.input.value_target_mask);
  }

  // Informed values in system regions (current and history), for masking.
  sample.input.inform_mask.assign(static_cast<std::size_t>(n), 0);
  for (const Segment& seg : sample.input.segments) {
    if (seg.role != Segment::Role::cur_system && seg.role != Segment::Role::hist_system) continue;
    const Turn& src = d.turns[static_cast<std::size_t>(seg.turn - 1)];
    auto sys_tokens = tokenize_words(src.system);
    for (const auto& [slot, value] : src.informed) {
      auto needle = tokenize_words(value);
      for (int hit : find_subsequence(sys_tokens, needle))
        mark(seg, hit, hit + static_cast<int>(needle.size()), sample.input.inform_mask);
    }
  }

  // Per-slot targets.
  for (std::size_t i = 0; i < schema.slots.size(); ++i) {
    const SlotSpec& slot = schema.slots[i];
    SlotLabels labels;
    auto git = turn.gates.find(slot.name);
    labels.gate = git == turn.gates.end() ? GateClass::none : git->second;
    if (labels.gate == GateClass::span) {
      const std::string& value = turn.state.at(slot.name);
      labels.tag_target = Vector::Zero(n);
      std::vector<std::uint8_t> tmp(static_cast<std::size_t>(n), 0);
      for (const Segment& seg : sample.input.segments) {
        if (seg.role != Segment::Role::cur_user && seg.role != Segment::Role::hist_user) continue;
        const auto& m = mentions[static_cast<std::size_t>(seg.turn - 1)];
        auto vit = m.find(value);
        if (vit == m.end()) continue;
        for (auto [s, e] : vit->second) mark(seg, s, e, tmp);
      }
      for (int p = 0; p < n; ++p) labels.tag_target(p) = tmp[static_cast<std::size_t>(p)];
      if (labels.tag_target.sum() == 0.0) {
        if (strict)
          fail("labeling", "dialogue " + d.id + " turn " + std::to_string(turn_index) +
                               ": span-gated slot '" + slot.name + "' has an all-zero tag target");
        labels.gate = GateClass::none;
        labels.tag_target.resize(0);
      }
      if (labels.gate == GateClass::span && slot.is_categorical &&
          !slot.candidate_values.empty()) {
        auto vit = std::find(slot.candidate_values.begin(), slot.candidate_values.end(), value);
        labels.match_target =
            vit == slot.candidate_values.end()
                ? -1
                : static_cast<int>(vit - slot.candidate_values.begin());
      }
    } else if (labels.gate == GateClass::refer) {
      auto rit = turn.refer.find(slot.name);
      if (rit == turn.refer.end())
        fail("labeling", "dialogue " + d.id + " turn " + std::to_string(turn_index) +
                             ": refer-gated slot '" + slot.name + "' has no refer label");
      labels.refer_target = schema.slot_index(rit->second);
    }
    sample.slots.push_back(std::move(labels));
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Input-level dropout
// ---------------------------------------------------------------------------

// Replaces extractable-value tokens with probability p_td. random_token mode
// draws a replacement rank uniformly from 1..K of the frequency-sorted word
// vocabulary; unk_token mode substitutes UNK (the SVD baseline). Labels and
// masks are untouched.
inline AssembledInput token_dropout(const AssembledInput& input, double p_td, int K, UnkMode mode,
                                    Rng& rng) {
  if (input.value_target_mask.size() != input.ids.size())
    fail("config", "token dropout needs a value_target_mask");
  if (K < 1) fail("config", "token dropout cut-off K must be >= 1");
  AssembledInput out = input;
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    if (!out.value_target_mask[i]) continue;
    if (!rng.bernoulli(p_td)) continue;
    if (mode == UnkMode::unk_token) {
      out.ids[i] = Tokenizer::kUnk;
    } else {
      int rank = static_cast<int>(rng.uniform_int(1, K));
      out.ids[i] = rank - 1 + Tokenizer::kNumSpecials;
    }
  }
  return out;
}

// With probability p_hd, keeps only the c most recent history turns, with c
// uniform in {1..t-1}. A no-op at t = 1.
inline std::vector<const Turn*> history_dropout(const std::vector<const Turn*>& history,
                                                double p_hd, Rng& rng) {
  if (history.empty() || !rng.bernoulli(p_hd)) return history;
  auto c = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(history.size())));
  return std::vector<const Turn*>(history.begin(), history.begin() + static_cast<long>(c));
}

// Replaces informed-value tokens in system regions with UNK when enabled.
// User tokens are never touched. The rng parameter is unused by the current
// all-or-nothing policy but kept for partial-masking variants.
inline AssembledInput mask_informed(const AssembledInput& input, Rng& /*rng*/, bool enabled) {
  if (!enabled) return input;
  if (input.inform_mask.size() != input.ids.size())
    fail("config", "informed masking needs an inform_mask");
  AssembledInput out = input;
  for (std::size_t i = 0; i < out.ids.size(); ++i)
    if (out.inform_mask[i]) out.ids[i] = Tokenizer::kUnk;
  return out;
}

// ---------------------------------------------------------------------------
// Losses. Cross entropy for gate/refer, mean squared error for tag/match;
// tag targets are scaled to unit L1 mass.
// ---------------------------------------------------------------------------

struct LossComponents {
  double g = 0, q = 0, f = 0, m = 0;
};

inline double combine_losses(const LossComponents& c, double lg, double lq, double lf, double lm) {
  return lg * c.g + lq * c.q + lf * c.f + lm * c.m;
}

// Plain-vector reference implementations, used by evaluation and as an
// independent cross-check of the graph-built losses.
inline double gate_cross_entropy(const Vector& gate, GateClass label, double none_weight) {
  double w = label == GateClass::none ? none_weight : 1.0;
  return -w * std::log(std::max(gate(static_cast<int>(label)), 1e-300));
}

inline double tag_mse(const Vector& weights, const Vector& target01) {
  double norm = target01.sum();
  if (norm <= 0.0) fail("labeling", "tag target is all-zero");
  Vector t = target01 / norm;
  return (weights - t).squaredNorm() / static_cast<double>(weights.size());
}

inline double refer_cross_entropy(const Vector& weights, int target) {
  return -std::log(std::max(weights(target), 1e-300));
}

inline double match_mse(const Vector& weights, int target) {
  Vector t = Vector::Zero(weights.size());
  t(target) = 1.0;
  return (weights - t).squaredNorm() / static_cast<double>(weights.size());
}

// ---------------------------------------------------------------------------
// Training driver
// ---------------------------------------------------------------------------

struct TrainLogRow {
  int epoch = 0;
  long step = 0;
  double loss = 0, lg = 0, lq = 0, lf = 0, lm = 0;
  double dev_jga = std::numeric_limits<double>::quiet_NaN();
  double lr = 0;
};

struct TrainResult {
  double best_dev_jga = 0.0;
  int best_epoch = 0;
  int epochs_run = 0;
  std::vector<TrainLogRow> log;
  int skipped_match_targets = 0;
};

inline void write_train_log(const std::vector<TrainLogRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write training log: " + path);
  out << "epoch,step,L,L_g,L_q,L_f,L_m,dev_jga,lr\n";
  out.precision(10);
  for (const auto& r : rows) {
    out << r.epoch << "," << r.step << "," << r.loss << "," << r.lg << "," << r.lq << "," << r.lf
        << "," << r.lm << ",";
    if (!std::isnan(r.dev_jga)) out << r.dev_jga;
    out << "," << r.lr << "\n";
  }
}

inline TrainResult train(DstModel& model, const Corpus& train_corpus, const Corpus& dev_corpus,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (dev_corpus.empty()) fail("config", "empty dev split");
  if (train_corpus.empty()) fail("config", "empty train split");

  struct Item {
    const Dialogue* d;
    int turn;
  };
  std::vector<Item> items;
  for (const Dialogue& d : train_corpus)
    for (std::size_t t = 0; t < d.turns.size(); ++t)
      items.push_back({&d, static_cast<int>(t) + 1});

  long steps_per_epoch =
      (static_cast<long>(items.size()) + cfg.batch_size - 1) / cfg.batch_size;
  long total_steps = steps_per_epoch * cfg.max_epochs;
  int K = std::max(1, static_cast<int>(std::floor(cfg.token_dropout_K_fraction *
                                                  model.tokenizer.num_words())));

  AdamW opt;
  opt.weight_decay = cfg.weight_decay;
  std::vector<Param*> params = model.all_params();

  Rng shuffle_rng = Rng(cfg.seed).derive(1);
  TrackerOptions dev_opt;
  dev_opt.tau = cfg.tau;

  TrainResult result;
  int patience = std::max(1, static_cast<int>(std::ceil(cfg.patience_fraction * cfg.max_epochs)));
  int since_best = 0;
  std::vector<Matrix> best_values;
  auto snapshot = [&]() {
    best_values.clear();
    for (Param* p : params) best_values.push_back(p->value);
  };
  auto restore = [&]() {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  };
  snapshot();

  long step = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    // Stale value encodings: candidate values are re-encoded once per epoch
    // and held fixed; no gradient flows into them.
    ConceptEncodings epoch_values = encode_concepts(model, /*include_values=*/true);

    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(order);

    for (long b = 0; b < steps_per_epoch; ++b) {
      ++step;
      Tape tape;
      EncoderVars ev = bind_encoder(tape, model.encoder, true);
      HeadVars hv = bind_heads(tape, model.heads, true);

      // Slot descriptions are re-encoded every step, with gradients.
      Rng slot_rng = Rng(cfg.seed).derive(0x510000 + static_cast<std::uint64_t>(step));
      std::vector<Var> slot_reprs;
      for (const SlotSpec& s : model.schema.slots) {
        AssembledInput si = assemble_slot(s, model.tokenizer);
        EncoderOutput so = encode(tape, ev, si.ids, /*train=*/true, &slot_rng);
        slot_reprs.push_back(so.pooled);
      }
      Var all_slots = tape.vstack(slot_reprs);

      Var total;
      LossComponents sums;
      int batch_n = 0;
      bool first_loss = true;
      for (long k = b * cfg.batch_size;
           k < std::min<long>((b + 1) * cfg.batch_size, static_cast<long>(items.size())); ++k) {
        const Item& item = items[order[static_cast<std::size_t>(k)]];
        Rng sample_rng = Rng(cfg.seed).derive(
            0xda7a0000 + static_cast<std::uint64_t>(epoch) * 1000003 +
            static_cast<std::uint64_t>(order[static_cast<std::size_t>(k)]));

        std::vector<const Turn*> history;
        for (int t = item.turn - 1; t-- > 0;) history.push_back(&item.d->turns[static_cast<std::size_t>(t)]);
        history = history_dropout(history, cfg.p_hd, sample_rng);

        TurnSample sample = build_sample(*item.d, item.turn, history, model.schema,
                                         model.tokenizer, model.encoder.config.max_len);
        AssembledInput input = mask_informed(sample.input, sample_rng, cfg.inform_masking);
        input = token_dropout(input, cfg.p_td, K, cfg.p_unk_mode, sample_rng);

        EncoderOutput eo = encode(tape, ev, input.ids, /*train=*/true, &sample_rng);
        ++batch_n;

        for (std::size_t i = 0; i < model.schema.slots.size(); ++i) {
          const SlotLabels& labels = sample.slots[i];
          const SlotSpec& slot = model.schema.slots[i];
          SlotGateResult gate = slot_gate(tape, hv, slot_reprs[i], eo.tokens);
          double w = labels.gate == GateClass::none ? cfg.none_class_weight : 1.0;
          Var lg = tape.scale(
              tape.log(tape.pick(gate.gate, 0, static_cast<int>(labels.gate))), -w);
          sums.g += tape.val(lg)(0, 0);
          Var contrib = tape.scale(lg, cfg.lambda_g);

          if (labels.gate == GateClass::span) {
            SequenceTagResult tag =
                sequence_tag(tape, hv, slot_reprs[i], eo.tokens, input.user_mask);
            Vector target = labels.tag_target / labels.tag_target.sum();
            Var diff = tape.sub(tag.tag_weights, tape.constant(target.transpose()));
            Var lq = tape.mean_all(tape.hadamard(diff, diff));
            sums.q += tape.val(lq)(0, 0);
            contrib = tape.add(contrib, tape.scale(lq, cfg.lambda_q));
            if (labels.match_target >= 0 && !epoch_values.values[i].empty()) {
              Var vr = tape.constant(epoch_values.value_reprs[i]);
              Var mw = value_match_cached(tape, hv, tag.context_summary, vr);
              Vector onehot = Vector::Zero(static_cast<Eigen::Index>(epoch_values.values[i].size()));
              onehot(labels.match_target) = 1.0;
              Var mdiff = tape.sub(mw, tape.constant(onehot.transpose()));
              Var lm = tape.mean_all(tape.hadamard(mdiff, mdiff));
              sums.m += tape.val(lm)(0, 0);
              contrib = tape.add(contrib, tape.scale(lm, cfg.lambda_m));
            } else if (labels.gate == GateClass::span && slot.is_categorical &&
                       labels.match_target < 0) {
              ++result.skipped_match_targets;
            }
          } else if (labels.gate == GateClass::refer && labels.refer_target >= 0) {
            Var fw = refer_head(tape, hv, slot_reprs[i], gate.g2, all_slots);
            Var lf = tape.scale(tape.log(tape.pick(fw, 0, labels.refer_target)), -1.0);
            sums.f += tape.val(lf)(0, 0);
            contrib = tape.add(contrib, tape.scale(lf, cfg.lambda_f));
          }
          total = first_loss ? contrib : tape.add(total, contrib);
          first_loss = false;
        }
      }
      if (batch_n == 0) continue;
      total = tape.scale(total, 1.0 / batch_n);
      double loss_value = tape.val(total)(0, 0);
      if (!std::isfinite(loss_value))
        fail("divergence", "non-finite loss at step " + std::to_string(step),
             json{{"epoch", epoch}, {"step", step}});
      tape.backward(total);
      double lr = scheduled_lr(cfg.learning_rate, step, total_steps, cfg.warmup_fraction);
      opt.step(params, lr);

      TrainLogRow row;
      row.epoch = epoch;
      row.step = step;
      row.loss = loss_value;
      row.lg = sums.g / batch_n;
      row.lq = sums.q / batch_n;
      row.lf = sums.f / batch_n;
      row.lm = sums.m / batch_n;
      row.lr = lr;
      result.log.push_back(row);
    }

    double dev_jga = dev_joint_goal_accuracy(model, dev_corpus, dev_opt);
    result.log.back().dev_jga = dev_jga;
    result.epochs_run = epoch;
    if (dev_jga > result.best_dev_jga || epoch == 1) {
      result.best_dev_jga = dev_jga;
      result.best_epoch = epoch;
      since_best = 0;
      snapshot();
    } else {
      ++since_best;
      if (since_best >= patience) break;
    }
  }
  restore();
  model.best_dev_metric = result.best_dev_jga;
  return result;
}

}  // namespace dst

#endif  // DST_TRAINING_HPP
