// dst/encoder.hpp
//
// Input assembly for dialogue turns and concept descriptions, and the
// unified transformer encoder shared by all encoding tasks. One encoder
// instance produces turn, slot and value representations.

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

#ifndef DST_ENCODER_HPP
#define DST_ENCODER_HPP

#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "dst/autodiff.hpp"
#include "dst/core.hpp"
#include "dst/corpus.hpp"
#include "dst/tokenizer.hpp"

namespace dst {

struct EncoderConfig {
  int d = 48;
  int layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  int max_len = 180;
  double dropout = 0.3;  // encoder-output dropout, train mode only

  void validate() const {
    if (d <= 0 || heads <= 0 || d % heads != 0)
      fail("config", "encoder dim must be positive and divisible by head count");
    if (max_len < 8) fail("config", "encoder max_len too small");
  }

  json to_json() const {
    return json{{"d", d},       {"layers", layers},   {"heads", heads},
                {"ffn_dim", ffn_dim}, {"max_len", max_len}, {"dropout", dropout}};
  }
  static EncoderConfig from_json(const json& j) {
    EncoderConfig c;
    c.d = j.value("d", c.d);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
    c.max_len = j.value("max_len", c.max_len);
    c.dropout = j.value("dropout", c.dropout);
    return c;
  }
};

// ---------------------------------------------------------------------------
// Assembled inputs
// ---------------------------------------------------------------------------

struct Segment {
  enum class Role { special, cur_user, cur_system, hist_user, hist_system };
  Role role = Role::special;
  int turn = 0;  // 1-based turn index for utterance segments
  int start = 0;
  int len = 0;
};

struct AssembledInput {
  std::vector<int> ids;
  std::vector<Segment> segments;
  std::vector<std::uint8_t> user_mask;          // current + history user tokens
  std::vector<std::uint8_t> value_target_mask;  // extractable-value tokens (optional)
  std::vector<std::uint8_t> inform_mask;        // informed values in system regions (optional)

  int length() const { return static_cast<int>(ids.size()); }

  std::vector<int> sep_positions() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == Tokenizer::kSep) out.push_back(static_cast<int>(i));
    return out;
  }

  const Segment* find_segment(Segment::Role role, int turn) const {
    for (const auto& s : segments)
      if (s.role == role && s.turn == turn) return &s;
    return nullptr;
  }
};

// Layout: CLS + U_t + SEP + M_t + SEP + H_t + SEP, with the history
// interleaving user/system utterances most-recent-first. Overflow is cut
// from the oldest end of the history; the current turn is never truncated.
inline AssembledInput assemble_turn(const Turn& turn, const std::vector<const Turn*>& history,
                                    int turn_index, const Tokenizer& tok, int max_len) {
  AssembledInput out;
  auto u = tok.encode_words(turn.user);
  auto m = tok.encode_words(turn.system);
  int base = 1 + static_cast<int>(u.size()) + 1 + static_cast<int>(m.size()) + 1 + 1;
  if (base > max_len)
    fail("oversize", "turn " + std::to_string(turn_index) + " exceeds max_len without history",
         json{{"needed", base}, {"max_len", max_len}});

  auto push_segment = [&](Segment::Role role, int t, const std::vector<int>& ids) {
    Segment s;
    s.role = role;
    s.turn = t;
    s.start = static_cast<int>(out.ids.size());
    s.len = static_cast<int>(ids.size());
    out.ids.insert(out.ids.end(), ids.begin(), ids.end());
    out.segments.push_back(s);
  };
  auto push_special = [&](int id) {
    Segment s;
    s.role = Segment::Role::special;
    s.start = static_cast<int>(out.ids.size());
    s.len = 1;
    out.ids.push_back(id);
    out.segments.push_back(s);
  };

  push_special(Tokenizer::kCls);
  push_segment(Segment::Role::cur_user, turn_index, u);
  push_special(Tokenizer::kSep);
  push_segment(Segment::Role::cur_system, turn_index, m);
  push_special(Tokenizer::kSep);

  int budget = max_len - base;
  for (std::size_t k = 0; k < history.size() && budget > 0; ++k) {
    int ht = turn_index - 1 - static_cast<int>(k);
    auto hu = tok.encode_words(history[k]->user);
    auto hm = tok.encode_words(history[k]->system);
    if (static_cast<int>(hu.size()) > budget) hu.resize(static_cast<std::size_t>(budget));
    if (!hu.empty()) push_segment(Segment::Role::hist_user, ht, hu);
    budget -= static_cast<int>(hu.size());
    if (budget <= 0) break;
    if (static_cast<int>(hm.size()) > budget) hm.resize(static_cast<std::size_t>(budget));
    if (!hm.empty()) push_segment(Segment::Role::hist_system, ht, hm);
    budget -= static_cast<int>(hm.size());
  }
  push_special(Tokenizer::kSep);

  out.user_mask.assign(out.ids.size(), 0);
  for (const Segment& s : out.segments)
    if (s.role == Segment::Role::cur_user || s.role == Segment::Role::hist_user)
      for (int i = 0; i < s.len; ++i) out.user_mask[static_cast<std::size_t>(s.start + i)] = 1;
  return out;
}

// Slot description per the concept layout: CLS + name + "." + description + SEP.
inline AssembledInput assemble_slot(const SlotSpec& slot, const Tokenizer& tok) {
  if (slot.description.empty())
    std::cerr << "[warn] slot " << slot.name << " has an empty description\n";
  AssembledInput out;
  out.ids.push_back(Tokenizer::kCls);
  for (int id : tok.encode_words(slot.name)) out.ids.push_back(id);
  for (int id : tok.encode_words(".")) out.ids.push_back(id);
  for (int id : tok.encode_words(slot.description)) out.ids.push_back(id);
  out.ids.push_back(Tokenizer::kSep);
  out.user_mask.assign(out.ids.size(), 0);
  return out;
}

// Value phrase: CLS + slot name + "is" + value + SEP.
inline AssembledInput assemble_value(const SlotSpec& slot, const std::string& value,
                                     const Tokenizer& tok) {
  AssembledInput out;
  out.ids.push_back(Tokenizer::kCls);
  for (int id : tok.encode_words(slot.name)) out.ids.push_back(id);
  for (int id : tok.encode_words("is")) out.ids.push_back(id);
  for (int id : tok.encode_words(value)) out.ids.push_back(id);
  out.ids.push_back(Tokenizer::kSep);
  out.user_mask.assign(out.ids.size(), 0);
  return out;
}

// ---------------------------------------------------------------------------
// Transformer encoder
// ---------------------------------------------------------------------------

struct EncoderLayerParams {
  Param Wq, Wk, Wv, Wo, bq, bk, bv, bo;
  Param ln1_g, ln1_b, ln2_g, ln2_b;
  Param W1, b1, W2, b2;
};

struct EncoderParams {
  EncoderConfig config;
  Param tok_emb;  // vocab x d
  Param pos_emb;  // max_len x d
  Param emb_ln_g, emb_ln_b;
  std::vector<EncoderLayerParams> layers;

  void init(const EncoderConfig& cfg, int vocab_size, Rng& rng) {
    cfg.validate();
    config = cfg;
    tok_emb.reset("enc.tok_emb", vocab_size, cfg.d);
    pos_emb.reset("enc.pos_emb", cfg.max_len, cfg.d);
    init_normal(tok_emb, rng, 0.02);
    init_normal(pos_emb, rng, 0.02);
    emb_ln_g.reset("enc.emb_ln_g", 1, cfg.d);
    emb_ln_b.reset("enc.emb_ln_b", 1, cfg.d);
    emb_ln_g.value.setOnes();
    layers.resize(static_cast<std::size_t>(cfg.layers));
    for (int l = 0; l < cfg.layers; ++l) {
      auto& L = layers[static_cast<std::size_t>(l)];
      std::string p = "enc.l" + std::to_string(l) + ".";
      auto mat = [&](Param& w, const char* n) {
        w.reset(p + n, cfg.d, cfg.d);
        init_xavier(w, rng);
      };
      mat(L.Wq, "Wq");
      mat(L.Wk, "Wk");
      mat(L.Wv, "Wv");
      mat(L.Wo, "Wo");
      L.bq.reset(p + "bq", 1, cfg.d);
      L.bk.reset(p + "bk", 1, cfg.d);
      L.bv.reset(p + "bv", 1, cfg.d);
      L.bo.reset(p + "bo", 1, cfg.d);
      L.ln1_g.reset(p + "ln1_g", 1, cfg.d);
      L.ln1_b.reset(p + "ln1_b", 1, cfg.d);
      L.ln2_g.reset(p + "ln2_g", 1, cfg.d);
      L.ln2_b.reset(p + "ln2_b", 1, cfg.d);
      L.ln1_g.value.setOnes();
      L.ln2_g.value.setOnes();
      L.W1.reset(p + "W1", cfg.d, cfg.ffn_dim);
      L.b1.reset(p + "b1", 1, cfg.ffn_dim);
      L.W2.reset(p + "W2", cfg.ffn_dim, cfg.d);
      L.b2.reset(p + "b2", 1, cfg.d);
      init_xavier(L.W1, rng);
      init_xavier(L.W2, rng);
    }
  }

  std::vector<Param*> all() {
    std::vector<Param*> out{&tok_emb, &pos_emb, &emb_ln_g, &emb_ln_b};
    for (auto& L : layers)
      for (Param* p : {&L.Wq, &L.Wk, &L.Wv, &L.Wo, &L.bq, &L.bk, &L.bv, &L.bo, &L.ln1_g, &L.ln1_b,
                       &L.ln2_g, &L.ln2_b, &L.W1, &L.b1, &L.W2, &L.b2})
        out.push_back(p);
    return out;
  }
};

inline Var bind(Tape& tape, Param& p, bool with_grad) {
  return with_grad ? tape.param(p) : tape.constant(p.value);
}

struct EncoderLayerVars {
  Var Wq, Wk, Wv, Wo, bq, bk, bv, bo, ln1_g, ln1_b, ln2_g, ln2_b, W1, b1, W2, b2;
};

struct EncoderVars {
  const EncoderConfig* config = nullptr;
  Var tok_emb, pos_emb, emb_ln_g, emb_ln_b;
  std::vector<EncoderLayerVars> layers;
};

inline EncoderVars bind_encoder(Tape& tape, EncoderParams& p, bool with_grad) {
  EncoderVars v;
  v.config = &p.config;
  v.tok_emb = bind(tape, p.tok_emb, with_grad);
  v.pos_emb = bind(tape, p.pos_emb, with_grad);
  v.emb_ln_g = bind(tape, p.emb_ln_g, with_grad);
  v.emb_ln_b = bind(tape, p.emb_ln_b, with_grad);
  for (auto& L : p.layers) {
    EncoderLayerVars lv;
    lv.Wq = bind(tape, L.Wq, with_grad);
    lv.Wk = bind(tape, L.Wk, with_grad);
    lv.Wv = bind(tape, L.Wv, with_grad);
    lv.Wo = bind(tape, L.Wo, with_grad);
    lv.bq = bind(tape, L.bq, with_grad);
    lv.bk = bind(tape, L.bk, with_grad);
    lv.bv = bind(tape, L.bv, with_grad);
    lv.bo = bind(tape, L.bo, with_grad);
    lv.ln1_g = bind(tape, L.ln1_g, with_grad);
    lv.ln1_b = bind(tape, L.ln1_b, with_grad);
    lv.ln2_g = bind(tape, L.ln2_g, with_grad);
    lv.ln2_b = bind(tape, L.ln2_b, with_grad);
    lv.W1 = bind(tape, L.W1, with_grad);
    lv.b1 = bind(tape, L.b1, with_grad);
    lv.W2 = bind(tape, L.W2, with_grad);
    lv.b2 = bind(tape, L.b2, with_grad);
    v.layers.push_back(lv);
  }
  return v;
}

struct EncoderOutput {
  Var tokens;  // |X| x d
  Var pooled;  // 1 x d (first row)
};

// Full encoder stack. In train mode, encoder-output dropout is applied to the
// token matrix; infer mode is deterministic.
inline EncoderOutput encode(Tape& tape, const EncoderVars& enc, const std::vector<int>& ids,
                            bool train = false, Rng* rng = nullptr) {
  const EncoderConfig& cfg = *enc.config;
  int L = static_cast<int>(ids.size());
  if (L == 0) fail("encoder", "empty input");
  if (L > cfg.max_len) fail("oversize", "input longer than max_len");
  std::vector<int> positions(static_cast<std::size_t>(L));
  std::iota(positions.begin(), positions.end(), 0);

  Var x = tape.add(tape.gather_rows(enc.tok_emb, ids), tape.gather_rows(enc.pos_emb, positions));
  x = tape.layernorm_rows(x, enc.emb_ln_g, enc.emb_ln_b);

  int dk = cfg.d / cfg.heads;
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  for (const auto& lv : enc.layers) {
    Var Qp = tape.add_rowvec(tape.matmul(x, lv.Wq), lv.bq);
    Var Kp = tape.add_rowvec(tape.matmul(x, lv.Wk), lv.bk);
    Var Vp = tape.add_rowvec(tape.matmul(x, lv.Wv), lv.bv);
    std::vector<Var> head_outs;
    for (int h = 0; h < cfg.heads; ++h) {
      Var qh = tape.slice_cols(Qp, h * dk, dk);
      Var kh = tape.slice_cols(Kp, h * dk, dk);
      Var vh = tape.slice_cols(Vp, h * dk, dk);
      Var scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dk);
      Var attn = tape.softmax_rows(scores);
      head_outs.push_back(tape.matmul(attn, vh));
    }
    Var o = tape.add_rowvec(tape.matmul(tape.concat_cols(head_outs), lv.Wo), lv.bo);
    x = tape.layernorm_rows(tape.add(x, o), lv.ln1_g, lv.ln1_b);
    Var f = tape.add_rowvec(
        tape.matmul(tape.gelu(tape.add_rowvec(tape.matmul(x, lv.W1), lv.b1)), lv.W2), lv.b2);
    x = tape.layernorm_rows(tape.add(x, f), lv.ln2_g, lv.ln2_b);
  }
  if (train && cfg.dropout > 0.0) {
    if (!rng) fail("encoder", "train-mode encode needs an rng");
    x = tape.dropout(x, cfg.dropout, *rng, true);
  }
  return EncoderOutput{x, tape.row(x, 0)};
}

}  // namespace dst

#endif  // DST_ENCODER_HPP
