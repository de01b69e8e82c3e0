// Gold-label replay: builds per-turn predictions directly from gold
// gate/span/inform/refer labels (no model) so the state-update machinery can
// be exercised as a pure state machine.

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

#ifndef DST_TESTS_REPLAY_HPP
#define DST_TESTS_REPLAY_HPP

#include <string>
#include <vector>

#include "dst/corpus.hpp"
#include "dst/tracker.hpp"

namespace dst::testing {

// One-hot gate posterior.
inline Vector gate_onehot(GateClass g) {
  Vector v = Vector::Zero(kNumGateClasses);
  v(static_cast<int>(g)) = 1.0;
  return v;
}

// Replays gold labels of one dialogue through update_state and returns the
// state sequence. Span-gated slots contribute the detokenized span surface as
// tagged value plus, when the slot has >= 2 candidates, perfect match
// evidence for the gold value (attention weight 1, L2 distance 0).
inline std::vector<StateMap> replay_dialogue(const Dialogue& d, const Schema& schema,
                                             double tau = 0.3) {
  std::vector<std::vector<std::string>> candidates;
  for (const SlotSpec& s : schema.slots) candidates.push_back(s.candidate_values);

  TrackerOptions opt;
  opt.tau = tau;
  DialogueStateT state;
  std::vector<StateMap> out;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    const Turn& turn = d.turns[t];
    TurnPrediction pred;
    for (std::size_t i = 0; i < schema.slots.size(); ++i) {
      const SlotSpec& slot = schema.slots[i];
      SlotPrediction sp;
      auto git = turn.gates.find(slot.name);
      GateClass g = git == turn.gates.end() ? GateClass::none : git->second;
      sp.gate = gate_onehot(g);
      if (g == GateClass::refer) {
        sp.refer_weights = Vector::Zero(static_cast<Eigen::Index>(schema.slots.size()));
        int src = schema.slot_index(turn.refer.at(slot.name));
        sp.refer_weights(src) = 1.0;
      } else if (g == GateClass::span) {
        // Tagged surface from the first recorded span.
        const auto& refs = turn.spans.at(slot.name);
        const SpanRef& r = refs.front();
        auto toks = tokenize_words(d.turns[static_cast<std::size_t>(r.turn - 1)].user);
        sp.tagged_value = join_tokens(toks, static_cast<std::size_t>(r.start),
                                      static_cast<std::size_t>(r.end));
        const auto& cands = slot.candidate_values;
        if (cands.size() >= 2) {
          const std::string& value = turn.state.at(slot.name);
          auto vit = std::find(cands.begin(), cands.end(), value);
          if (vit != cands.end()) {
            Eigen::Index vi = vit - cands.begin();
            sp.match_weights = Vector::Zero(static_cast<Eigen::Index>(cands.size()));
            sp.match_weights(vi) = 1.0;
            sp.l2_scores = Vector::Ones(static_cast<Eigen::Index>(cands.size()));
            sp.l2_scores(vi) = 0.0;
          }
        }
      }
      pred.slots.push_back(std::move(sp));
    }
    InformMemory inform(turn.informed.begin(), turn.informed.end());
    state = update_state(state, pred, inform, schema, opt, &candidates);
    out.push_back(state.assignments);
  }
  return out;
}

}  // namespace dst::testing

#endif  // DST_TESTS_REPLAY_HPP
