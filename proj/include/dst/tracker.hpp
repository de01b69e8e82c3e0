// dst/tracker.hpp
//
// Inference: the concept database, per-turn prediction, confidence-gated
// value selection and the dialogue-state update machine.

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

#ifndef DST_TRACKER_HPP
#define DST_TRACKER_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dst/core.hpp"
#include "dst/corpus.hpp"
#include "dst/heads.hpp"
#include "dst/model.hpp"

namespace dst {

// ---------------------------------------------------------------------------
// Concept database
// ---------------------------------------------------------------------------

struct ConceptDB {
  int version = 1;
  std::vector<std::string> slot_names;                // schema order
  Matrix slot_reprs;                                  // |S| x d
  std::vector<std::vector<std::string>> values;       // per slot
  std::vector<std::vector<Matrix>> value_token_encs;  // per slot, per value
  std::vector<Matrix> value_reprs;                    // per slot, |V| x d

  int slot_index(const std::string& name) const {
    for (std::size_t i = 0; i < slot_names.size(); ++i)
      if (slot_names[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline ConceptDB build_db(DstModel& model) {
  ConceptEncodings enc = encode_concepts(model, /*include_values=*/true);
  ConceptDB db;
  for (const SlotSpec& s : model.schema.slots) db.slot_names.push_back(s.name);
  db.slot_reprs = std::move(enc.slot_reprs);
  db.values = std::move(enc.values);
  db.value_token_encs = std::move(enc.value_token_encs);
  db.value_reprs = std::move(enc.value_reprs);
  return db;
}

// Runtime value addition: extends one slot's candidate list in place.
inline void db_add_value(ConceptDB& db, DstModel& model, const std::string& slot_name,
                         const std::string& value) {
  int i = db.slot_index(slot_name);
  if (i < 0) fail("schema-mismatch", "unknown slot: " + slot_name);
  const SlotSpec& slot = model.schema.slot(slot_name);
  std::string norm = normalize_value(value);
  Tape tape;
  EncoderVars ev = bind_encoder(tape, model.encoder, false);
  HeadVars hv = bind_heads(tape, model.heads, false);
  AssembledInput in = assemble_value(slot, norm, model.tokenizer);
  EncoderOutput eo = encode(tape, ev, in.ids);
  Var rv = value_representation(tape, hv, tape.constant(db.slot_reprs.row(i)), eo.tokens);
  auto& reprs = db.value_reprs[static_cast<std::size_t>(i)];
  Matrix grown(reprs.rows() + 1, reprs.cols());
  grown.topRows(reprs.rows()) = reprs;
  grown.bottomRows(1) = tape.val(rv);
  reprs = std::move(grown);
  db.values[static_cast<std::size_t>(i)].push_back(norm);
  db.value_token_encs[static_cast<std::size_t>(i)].push_back(tape.val(eo.tokens));
}

inline json db_to_json(const ConceptDB& db) {
  json j;
  j["version"] = db.version;
  j["slot_names"] = db.slot_names;
  j["slot_reprs"] = matrix_to_json(db.slot_reprs);
  j["values"] = db.values;
  json reprs = json::array(), tokens = json::array();
  for (std::size_t i = 0; i < db.value_reprs.size(); ++i) {
    reprs.push_back(matrix_to_json(db.value_reprs[i]));
    json per_slot = json::array();
    for (const Matrix& m : db.value_token_encs[i]) per_slot.push_back(matrix_to_json(m));
    tokens.push_back(per_slot);
  }
  j["value_reprs"] = reprs;
  j["value_token_encs"] = tokens;
  return j;
}

inline ConceptDB db_from_json(const json& j) {
  ConceptDB db;
  db.version = j.value("version", 1);
  db.slot_names = j.at("slot_names").get<std::vector<std::string>>();
  db.slot_reprs = matrix_from_json(j.at("slot_reprs"));
  db.values = j.at("values").get<std::vector<std::vector<std::string>>>();
  for (const auto& e : j.at("value_reprs")) db.value_reprs.push_back(matrix_from_json(e));
  for (const auto& per_slot : j.at("value_token_encs")) {
    std::vector<Matrix> ms;
    for (const auto& e : per_slot) ms.push_back(matrix_from_json(e));
    db.value_token_encs.push_back(std::move(ms));
  }
  return db;
}

// ---------------------------------------------------------------------------
// Confidence: Conf(C) = 1 - min(C) / (((sum C) - min C) / |C|), exactly as
// printed. Peaked score multisets approach 1; the n-uniform multiset gives
// -1/(n-1).
// ---------------------------------------------------------------------------

inline double confidence(const Vector& scores) {
  if (scores.size() < 2) fail("confidence", "needs at least 2 scores");
  double mn = scores.minCoeff();
  double rest = scores.sum() - mn;
  if (rest == 0.0)
    fail("undefined-confidence", "sum of scores equals the minimum; confidence undefined");
  return 1.0 - mn / (rest / static_cast<double>(scores.size()));
}

// ---------------------------------------------------------------------------
// Value resolution for span-gated slots
// ---------------------------------------------------------------------------

enum class Provenance { tag, match_attention, match_l2, inform, refer, dontcare, boolean };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::tag: return "tag";
    case Provenance::match_attention: return "match_attention";
    case Provenance::match_l2: return "match_l2";
    case Provenance::inform: return "inform";
    case Provenance::refer: return "refer";
    case Provenance::dontcare: return "dontcare";
    case Provenance::boolean: return "boolean";
  }
  return "?";
}

struct TrackerOptions {
  double tau = 0.3;
  bool value_matching = true;      // the "no vm" configuration when false
  bool l2_literal_argmax = false;  // reproduce the literal argmax reading
};

struct ResolvedValue {
  std::optional<std::string> value;
  Provenance provenance = Provenance::tag;
  bool flagged = false;
};

namespace detail {

inline double safe_confidence(const Vector& scores) {
  try {
    return confidence(scores);
  } catch (const Error&) {
    return -std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

// Confidence-gated choice between value matching and the tagged value.
// Categorical slots consult the attention weights first, then the L2 scores;
// non-categorical slots with candidates consult only the L2 scores. Fewer
// than 2 candidates (or matching disabled) bypasses the gate entirely.
inline ResolvedValue resolve_span_value(const SlotPrediction& pred, const SlotSpec& slot,
                                        const std::vector<std::string>& candidates,
                                        const TrackerOptions& opt) {
  ResolvedValue out;
  out.provenance = Provenance::tag;
  out.value = pred.tagged_value;
  bool gate_usable = opt.value_matching && candidates.size() >= 2 &&
                     pred.match_weights.size() == static_cast<Eigen::Index>(candidates.size());
  if (gate_usable) {
    auto best_l2 = [&]() {
      Eigen::Index arg;
      if (opt.l2_literal_argmax)
        pred.l2_scores.maxCoeff(&arg);
      else
        pred.l2_scores.minCoeff(&arg);
      return candidates[static_cast<std::size_t>(arg)];
    };
    if (slot.is_categorical) {
      if (detail::safe_confidence(pred.match_weights) > opt.tau) {
        Eigen::Index arg;
        pred.match_weights.maxCoeff(&arg);
        out.value = candidates[static_cast<std::size_t>(arg)];
        out.provenance = Provenance::match_attention;
        return out;
      }
      if (detail::safe_confidence(pred.l2_scores) > opt.tau) {
        out.value = best_l2();
        out.provenance = Provenance::match_l2;
        return out;
      }
    } else {
      if (detail::safe_confidence(pred.l2_scores) > opt.tau) {
        out.value = best_l2();
        out.provenance = Provenance::match_l2;
        return out;
      }
    }
  }
  if (!out.value.has_value()) out.flagged = true;
  return out;
}

// ---------------------------------------------------------------------------
// Dialogue state
// ---------------------------------------------------------------------------

struct DialogueStateT {
  std::map<std::string, std::string> assignments;
  std::map<std::string, Provenance> provenance;
  std::vector<std::string> flags;
};

using InformMemory = std::map<std::string, std::string>;  // rebuilt every turn

// Applies the per-slot gate decisions to the previous state. Refer copies
// from the previous turn's completed state; slots are never deleted.
inline DialogueStateT update_state(const DialogueStateT& prev, const TurnPrediction& pred,
                                   const InformMemory& inform, const Schema& schema,
                                   const TrackerOptions& opt,
                                   const std::vector<std::vector<std::string>>* candidate_lists =
                                       nullptr) {
  if (pred.slots.size() != schema.slots.size())
    fail("tracker", "prediction does not cover all slots");
  DialogueStateT next = prev;
  next.flags.clear();
  for (std::size_t i = 0; i < schema.slots.size(); ++i) {
    const SlotSpec& slot = schema.slots[i];
    const SlotPrediction& sp = pred.slots[i];
    Eigen::Index arg;
    sp.gate.maxCoeff(&arg);
    GateClass g = static_cast<GateClass>(arg);
    switch (g) {
      case GateClass::none:
        break;
      case GateClass::dontcare:
        next.assignments[slot.name] = "dontcare";
        next.provenance[slot.name] = Provenance::dontcare;
        break;
      case GateClass::true_:
      case GateClass::false_:
        next.assignments[slot.name] = g == GateClass::true_ ? "true" : "false";
        next.provenance[slot.name] = Provenance::boolean;
        break;
      case GateClass::inform: {
        auto it = inform.find(slot.name);
        if (it == inform.end()) {
          next.flags.push_back("inform gate without informed value: " + slot.name);
        } else {
          next.assignments[slot.name] = it->second;
          next.provenance[slot.name] = Provenance::inform;
        }
        break;
      }
      case GateClass::refer: {
        if (sp.refer_weights.size() == 0) {
          next.flags.push_back("refer gate without refer weights: " + slot.name);
          break;
        }
        Eigen::Index src;
        sp.refer_weights.maxCoeff(&src);
        const std::string& src_name = schema.slots[static_cast<std::size_t>(src)].name;
        auto it = prev.assignments.find(src_name);
        if (it == prev.assignments.end()) {
          next.flags.push_back("refer to empty slot " + src_name + " for " + slot.name);
        } else {
          next.assignments[slot.name] = it->second;
          next.provenance[slot.name] = Provenance::refer;
        }
        break;
      }
      case GateClass::span: {
        const std::vector<std::string>* cands = nullptr;
        if (candidate_lists) cands = &(*candidate_lists)[i];
        static const std::vector<std::string> kEmpty;
        ResolvedValue rv = resolve_span_value(sp, slot, cands ? *cands : kEmpty, opt);
        if (rv.value.has_value()) {
          next.assignments[slot.name] = normalize_value(*rv.value);
          next.provenance[slot.name] = rv.provenance;
        } else {
          next.flags.push_back("span gate with no tagged value and no confident match: " +
                               slot.name);
        }
        break;
      }
    }
  }
  return next;
}

// ---------------------------------------------------------------------------
// Per-turn prediction and full-dialogue tracking
// ---------------------------------------------------------------------------

inline TurnPrediction predict_turn(DstModel& model, const ConceptDB& db,
                                   const AssembledInput& input, const TrackerOptions& opt) {
  TurnPrediction out;
  Tape tape;
  EncoderVars ev = bind_encoder(tape, model.encoder, false);
  HeadVars hv = bind_heads(tape, model.heads, false);
  EncoderOutput eo = encode(tape, ev, input.ids);
  Var all_slots = tape.constant(db.slot_reprs);
  bool any_user = false;
  for (auto m : input.user_mask) any_user = any_user || (m != 0);
  for (std::size_t i = 0; i < model.schema.slots.size(); ++i) {
    SlotPrediction sp;
    Var slot_repr = tape.constant(db.slot_reprs.row(static_cast<Eigen::Index>(i)));
    SlotGateResult gate = slot_gate(tape, hv, slot_repr, eo.tokens);
    sp.gate = tape.val(gate.gate).row(0).transpose();
    Eigen::Index arg;
    sp.gate.maxCoeff(&arg);
    GateClass g = static_cast<GateClass>(arg);
    if (g == GateClass::span && any_user) {
      SequenceTagResult tag = sequence_tag(tape, hv, slot_repr, eo.tokens, input.user_mask);
      sp.tag_weights = tape.val(tag.tag_weights).row(0).transpose();
      sp.context = tape.val(tag.context_summary).row(0).transpose();
      sp.tagged_value =
          extract_value(normalize_tags(sp.tag_weights), input.ids, model.tokenizer);
      const auto& vals = db.values[i];
      if (opt.value_matching && !vals.empty()) {
        Var ctx = tag.context_summary;
        Var vr = tape.constant(db.value_reprs[i]);
        Var mw = value_match_cached(tape, hv, ctx, vr);
        sp.match_weights = tape.val(mw).row(0).transpose();
        sp.l2_scores = Vector(static_cast<Eigen::Index>(vals.size()));
        for (std::size_t j = 0; j < vals.size(); ++j)
          sp.l2_scores(static_cast<Eigen::Index>(j)) =
              (tape.val(ctx).row(0) - db.value_reprs[i].row(static_cast<Eigen::Index>(j))).norm();
      }
    } else if (g == GateClass::refer) {
      Var refer_w = refer_head(tape, hv, slot_repr, gate.g2, all_slots);
      sp.refer_weights = tape.val(refer_w).row(0).transpose();
    }
    out.slots.push_back(std::move(sp));
  }
  return out;
}

struct TrackedTurn {
  DialogueStateT state;
  TurnPrediction prediction;
  bool skipped = false;
};

inline std::vector<TrackedTurn> track_dialogue(DstModel& model, const ConceptDB& db,
                                               const Dialogue& dialogue,
                                               const TrackerOptions& opt) {
  std::vector<TrackedTurn> out;
  DialogueStateT state;
  for (std::size_t t = 0; t < dialogue.turns.size(); ++t) {
    const Turn& turn = dialogue.turns[t];
    std::vector<const Turn*> history;
    for (std::size_t k = t; k-- > 0;) history.push_back(&dialogue.turns[k]);
    TrackedTurn tracked;
    try {
      AssembledInput input = assemble_turn(turn, history, static_cast<int>(t) + 1,
                                           model.tokenizer, model.encoder.config.max_len);
      tracked.prediction = predict_turn(model, db, input, opt);
      InformMemory inform;
      for (const auto& [k, v] : turn.informed) inform[k] = v;
      state = update_state(state, tracked.prediction, inform, model.schema, opt, &db.values);
    } catch (const Error& e) {
      if (e.kind() != "oversize") throw;
      tracked.skipped = true;
      state.flags = {std::string("oversize turn skipped: ") + e.what()};
    }
    tracked.state = state;
    out.push_back(std::move(tracked));
  }
  return out;
}

}  // namespace dst

#endif  // DST_TRACKER_HPP
