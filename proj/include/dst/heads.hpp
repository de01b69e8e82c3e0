// dst/heads.hpp
//
// Multi-head attention primitive and the four conditioned prediction heads:
// slot gate, sequence tagger, refer head and value matcher, plus tag
// normalization and IO decoding of tagged values.

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

#ifndef DST_HEADS_HPP
#define DST_HEADS_HPP

#include <optional>
#include <string>
#include <vector>

#include "dst/autodiff.hpp"
#include "dst/core.hpp"
#include "dst/corpus.hpp"
#include "dst/encoder.hpp"
#include "dst/tokenizer.hpp"

namespace dst {

// ---------------------------------------------------------------------------
// Generic multi-head attention
// ---------------------------------------------------------------------------

struct MhaParams {
  Param Wq, Wk, Wv, Wo, bq, bk, bv, bo;
  int heads = 1;

  void init(const std::string& name, int d, int n_heads, Rng& rng) {
    heads = n_heads;
    for (auto [p, n] : {std::pair<Param*, const char*>{&Wq, "Wq"}, {&Wk, "Wk"}, {&Wv, "Wv"},
                        {&Wo, "Wo"}}) {
      p->reset(name + "." + n, d, d);
      init_xavier(*p, rng);
    }
    bq.reset(name + ".bq", 1, d);
    bk.reset(name + ".bk", 1, d);
    bv.reset(name + ".bv", 1, d);
    bo.reset(name + ".bo", 1, d);
  }

  std::vector<Param*> all() { return {&Wq, &Wk, &Wv, &Wo, &bq, &bk, &bv, &bo}; }
};

struct MhaVars {
  Var Wq, Wk, Wv, Wo, bq, bk, bv, bo;
  int heads = 1;
};

inline MhaVars bind_mha(Tape& tape, MhaParams& p, bool with_grad) {
  MhaVars v;
  v.heads = p.heads;
  v.Wq = bind(tape, p.Wq, with_grad);
  v.Wk = bind(tape, p.Wk, with_grad);
  v.Wv = bind(tape, p.Wv, with_grad);
  v.Wo = bind(tape, p.Wo, with_grad);
  v.bq = bind(tape, p.bq, with_grad);
  v.bk = bind(tape, p.bk, with_grad);
  v.bv = bind(tape, p.bv, with_grad);
  v.bo = bind(tape, p.bo, with_grad);
  return v;
}

struct MhaResult {
  Var output;   // n x d
  Var weights;  // n x m, head-averaged attention distribution
};

// Scaled dot-product attention per head, concatenated and output-projected.
// Masked key positions receive additive -inf pre-softmax, so their weight is
// exactly zero. The returned weights are the mean over heads.
inline MhaResult mha(Tape& tape, const MhaVars& p, Var query, Var keys, Var values,
                     const std::vector<std::uint8_t>* key_mask = nullptr) {
  int d = static_cast<int>(tape.val(p.Wq).rows());
  if (tape.val(query).cols() != d || tape.val(keys).cols() != d || tape.val(values).cols() != d)
    fail("dim-mismatch", "attention inputs must have model width d");
  if (tape.val(keys).rows() != tape.val(values).rows())
    fail("dim-mismatch", "key/value row counts differ");
  int dk = d / p.heads;
  double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  Var Qp = tape.add_rowvec(tape.matmul(query, p.Wq), p.bq);
  Var Kp = tape.add_rowvec(tape.matmul(keys, p.Wk), p.bk);
  Var Vp = tape.add_rowvec(tape.matmul(values, p.Wv), p.bv);
  std::vector<Var> outs;
  Var weight_sum;
  for (int h = 0; h < p.heads; ++h) {
    Var qh = tape.slice_cols(Qp, h * dk, dk);
    Var kh = tape.slice_cols(Kp, h * dk, dk);
    Var vh = tape.slice_cols(Vp, h * dk, dk);
    Var attn = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt_dk), key_mask);
    outs.push_back(tape.matmul(attn, vh));
    weight_sum = h == 0 ? attn : tape.add(weight_sum, attn);
  }
  MhaResult r;
  r.output = tape.add_rowvec(tape.matmul(tape.concat_cols(outs), p.Wo), p.bo);
  r.weights = tape.scale(weight_sum, 1.0 / static_cast<double>(p.heads));
  return r;
}

// ---------------------------------------------------------------------------
// Head parameter bundle. MHA_q is shared between the sequence tagger and the
// value-representation step of the matcher.
// ---------------------------------------------------------------------------

struct HeadParams {
  MhaParams mha_g, mha_q, mha_f, mha_m;
  Param W3g, b3g, W4g, b4g, W5g, b5g;  // slot gate FFN
  Param W1f, b1f, W2f, b2f;            // refer FFN
  Param ln_g_g, ln_g_b;                // LayerNorm_g
  Param ln_q_g, ln_q_b;                // LayerNorm_q
  Param ln_v_g, ln_v_b;                // value-representation LayerNorm
  int d = 0;

  void init(int dim, int heads, Rng& rng) {
    d = dim;
    mha_g.init("head.mha_g", d, heads, rng);
    mha_q.init("head.mha_q", d, heads, rng);
    mha_f.init("head.mha_f", d, heads, rng);
    mha_m.init("head.mha_m", d, heads, rng);
    W3g.reset("head.W3g", d, d);
    b3g.reset("head.b3g", 1, d);
    W4g.reset("head.W4g", 2 * d, 2 * d);
    b4g.reset("head.b4g", 1, 2 * d);
    W5g.reset("head.W5g", 2 * d, kNumGateClasses);
    b5g.reset("head.b5g", 1, kNumGateClasses);
    W1f.reset("head.W1f", d, d);
    b1f.reset("head.b1f", 1, d);
    W2f.reset("head.W2f", 2 * d, d);
    b2f.reset("head.b2f", 1, d);
    for (Param* w : {&W3g, &W4g, &W5g, &W1f, &W2f}) init_xavier(*w, rng);
    ln_g_g.reset("head.ln_g_g", 1, d);
    ln_g_b.reset("head.ln_g_b", 1, d);
    ln_q_g.reset("head.ln_q_g", 1, d);
    ln_q_b.reset("head.ln_q_b", 1, d);
    ln_v_g.reset("head.ln_v_g", 1, d);
    ln_v_b.reset("head.ln_v_b", 1, d);
    ln_g_g.value.setOnes();
    ln_q_g.value.setOnes();
    ln_v_g.value.setOnes();
  }

  std::vector<Param*> all() {
    std::vector<Param*> out;
    for (MhaParams* m : {&mha_g, &mha_q, &mha_f, &mha_m})
      for (Param* p : m->all()) out.push_back(p);
    for (Param* p : {&W3g, &b3g, &W4g, &b4g, &W5g, &b5g, &W1f, &b1f, &W2f, &b2f, &ln_g_g, &ln_g_b,
                     &ln_q_g, &ln_q_b, &ln_v_g, &ln_v_b})
      out.push_back(p);
    return out;
  }
};

struct HeadVars {
  MhaVars mha_g, mha_q, mha_f, mha_m;
  Var W3g, b3g, W4g, b4g, W5g, b5g;
  Var W1f, b1f, W2f, b2f;
  Var ln_g_g, ln_g_b, ln_q_g, ln_q_b, ln_v_g, ln_v_b;
};

inline HeadVars bind_heads(Tape& tape, HeadParams& p, bool with_grad) {
  HeadVars v;
  v.mha_g = bind_mha(tape, p.mha_g, with_grad);
  v.mha_q = bind_mha(tape, p.mha_q, with_grad);
  v.mha_f = bind_mha(tape, p.mha_f, with_grad);
  v.mha_m = bind_mha(tape, p.mha_m, with_grad);
  v.W3g = bind(tape, p.W3g, with_grad);
  v.b3g = bind(tape, p.b3g, with_grad);
  v.W4g = bind(tape, p.W4g, with_grad);
  v.b4g = bind(tape, p.b4g, with_grad);
  v.W5g = bind(tape, p.W5g, with_grad);
  v.b5g = bind(tape, p.b5g, with_grad);
  v.W1f = bind(tape, p.W1f, with_grad);
  v.b1f = bind(tape, p.b1f, with_grad);
  v.W2f = bind(tape, p.W2f, with_grad);
  v.b2f = bind(tape, p.b2f, with_grad);
  v.ln_g_g = bind(tape, p.ln_g_g, with_grad);
  v.ln_g_b = bind(tape, p.ln_g_b, with_grad);
  v.ln_q_g = bind(tape, p.ln_q_g, with_grad);
  v.ln_q_b = bind(tape, p.ln_q_b, with_grad);
  v.ln_v_g = bind(tape, p.ln_v_g, with_grad);
  v.ln_v_b = bind(tape, p.ln_v_b, with_grad);
  return v;
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------

struct SlotGateResult {
  Var gate;  // 1 x 7 posterior
  Var g2;    // 1 x d, reused by the refer head
};

inline SlotGateResult slot_gate(Tape& tape, const HeadVars& h, Var slot_repr, Var turn_tokens) {
  MhaResult att = mha(tape, h.mha_g, slot_repr, turn_tokens, turn_tokens);
  Var g2 = tape.layernorm_rows(att.output, h.ln_g_g, h.ln_g_b);
  Var g3 = tape.gelu(tape.add_rowvec(tape.matmul(g2, h.W3g), h.b3g));
  Var g4 = tape.gelu(
      tape.add_rowvec(tape.matmul(tape.concat_cols({slot_repr, g3}), h.W4g), h.b4g));
  Var gate = tape.softmax_rows(tape.add_rowvec(tape.matmul(g4, h.W5g), h.b5g));
  return SlotGateResult{gate, g2};
}

struct SequenceTagResult {
  Var tag_weights;      // 1 x |X|
  Var context_summary;  // 1 x d (layer-normed attention output)
};

inline SequenceTagResult sequence_tag(Tape& tape, const HeadVars& h, Var slot_repr,
                                      Var turn_tokens, const std::vector<std::uint8_t>& user_mask) {
  MhaResult att = mha(tape, h.mha_q, slot_repr, turn_tokens, turn_tokens, &user_mask);
  Var q2 = tape.layernorm_rows(att.output, h.ln_q_g, h.ln_q_b);
  return SequenceTagResult{att.weights, q2};
}

inline Var refer_head(Tape& tape, const HeadVars& h, Var slot_repr, Var g2, Var all_slot_reprs) {
  if (tape.val(all_slot_reprs).rows() < 2)
    fail("dim-mismatch", "refer head needs at least 2 slots");
  Var f1 = tape.gelu(tape.add_rowvec(tape.matmul(g2, h.W1f), h.b1f));
  Var f2 = tape.gelu(
      tape.add_rowvec(tape.matmul(tape.concat_cols({slot_repr, f1}), h.W2f), h.b2f));
  MhaResult att = mha(tape, h.mha_f, f2, all_slot_reprs, all_slot_reprs);
  return att.weights;
}

// Value-representation step: r_V = LayerNorm(MHA_q(r_S, R_V, R_V) output).
inline Var value_representation(Tape& tape, const HeadVars& h, Var slot_repr,
                                Var value_token_encoding) {
  MhaResult att = mha(tape, h.mha_q, slot_repr, value_token_encoding, value_token_encoding);
  return tape.layernorm_rows(att.output, h.ln_v_g, h.ln_v_b);
}

// Matching of a context summary against pre-computed value representations
// (the stale-encoding path used by training and the tracker).
inline Var value_match_cached(Tape& tape, const HeadVars& h, Var context_summary,
                              Var value_reprs) {
  MhaResult att = mha(tape, h.mha_m, context_summary, value_reprs, value_reprs);
  return att.weights;
}

struct ValueMatchResult {
  Var match_weights;            // 1 x |V|
  Vector l2_scores;             // |V|, plain values (not differentiated)
  std::vector<Var> value_reprs; // 1 x d each
};

inline ValueMatchResult value_match(Tape& tape, const HeadVars& h, Var slot_repr,
                                    Var context_summary,
                                    const std::vector<Matrix>& value_token_encodings) {
  if (value_token_encodings.empty())
    fail("value-match", "empty candidate list; callers must skip value matching");
  ValueMatchResult r;
  std::vector<Var> reprs;
  for (const Matrix& enc : value_token_encodings) {
    Var rv = value_representation(tape, h, slot_repr, tape.constant(enc));
    reprs.push_back(rv);
  }
  Var stacked = tape.vstack(reprs);
  r.match_weights = value_match_cached(tape, h, context_summary, stacked);
  r.value_reprs = reprs;
  r.l2_scores = Vector(static_cast<Eigen::Index>(reprs.size()));
  for (std::size_t j = 0; j < reprs.size(); ++j)
    r.l2_scores(static_cast<Eigen::Index>(j)) =
        (tape.val(context_summary).row(0) - tape.val(reprs[j]).row(0)).norm();
  return r;
}

// ---------------------------------------------------------------------------
// Tag normalization and IO decoding
// ---------------------------------------------------------------------------

// q̂_j = (q_j - 1/|X|) / max(q). Entries > 0 carry the "I" tag.
inline Vector normalize_tags(const Vector& tag_weights) {
  if (tag_weights.size() == 0) fail("tags", "empty tag weight vector");
  double mx = tag_weights.maxCoeff();
  if (mx <= 0.0) fail("tags", "all-zero tag weights (max undefined)");
  double uniform = 1.0 / static_cast<double>(tag_weights.size());
  return (tag_weights.array() - uniform).matrix() / mx;
}

// Among maximal contiguous runs of positive entries, the run with the highest
// mean normalized weight wins; earliest run on ties. Returns the detokenized
// value, or nothing when no entry is positive.
inline std::optional<std::string> extract_value(const Vector& normalized,
                                                const std::vector<int>& ids,
                                                const Tokenizer& tok) {
  int n = static_cast<int>(normalized.size());
  double best_mean = 0.0;
  int best_s = -1, best_e = -1;
  int i = 0;
  while (i < n) {
    if (normalized(i) > 0.0) {
      int s = i;
      double sum = 0.0;
      while (i < n && normalized(i) > 0.0) {
        sum += normalized(i);
        ++i;
      }
      double mean = sum / static_cast<double>(i - s);
      if (best_s < 0 || mean > best_mean) {
        best_mean = mean;
        best_s = s;
        best_e = i;
      }
    } else {
      ++i;
    }
  }
  if (best_s < 0) return std::nullopt;
  return tok.decode(ids, static_cast<std::size_t>(best_s), static_cast<std::size_t>(best_e));
}

// ---------------------------------------------------------------------------
// Per-turn prediction record (inference side)
// ---------------------------------------------------------------------------

struct SlotPrediction {
  Vector gate;           // 7
  Vector tag_weights;    // |X| (empty when not computed)
  Vector context;        // d
  Vector refer_weights;  // |S| (empty when not computed)
  Vector match_weights;  // |V|
  Vector l2_scores;      // |V|
  std::optional<std::string> tagged_value;
};

struct TurnPrediction {
  std::vector<SlotPrediction> slots;  // schema order
};

}  // namespace dst

#endif  // DST_HEADS_HPP
