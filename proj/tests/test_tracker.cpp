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

#include <catch2/catch_amalgamated.hpp>

#include "dst/generator.hpp"
#include "dst/tracker.hpp"
#include "support/replay.hpp"

using namespace dst;

TEST_CASE("confidence reproduces the hand-computed values", "[tracker][confidence]") {
  Vector peaked(3);
  peaked << 0.98, 0.01, 0.01;
  CHECK(confidence(peaked) == Catch::Approx(0.969696969697).margin(1e-4));

  Vector uniform3 = Vector::Constant(3, 1.0 / 3.0);
  CHECK(confidence(uniform3) == Catch::Approx(-0.5).margin(1e-12));

  Vector two = Vector::Constant(2, 0.5);
  CHECK(confidence(two) == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("confidence properties: scale invariance, uniform value, errors", "[tracker][confidence]") {
  Rng rng(41);
  for (int it = 0; it < 1000; ++it) {
    int n = static_cast<int>(rng.uniform_int(2, 12));
    Vector c(n);
    for (int i = 0; i < n; ++i) c(i) = rng.uniform() + 1e-3;
    double alpha = rng.uniform() * 10.0 + 1e-3;
    double base = confidence(c);
    double scaled = confidence(alpha * c);
    CHECK(std::abs(base - scaled) < 1e-9);
  }
  for (int n = 2; n <= 8; ++n) {
    Vector u = Vector::Constant(n, 0.37);
    CHECK(confidence(u) == Catch::Approx(-1.0 / (n - 1)).margin(1e-12));
  }
  Vector one(1);
  one << 1.0;
  REQUIRE_THROWS_AS(confidence(one), Error);
  Vector zeros = Vector::Zero(3);
  try {
    confidence(zeros);
    FAIL("expected undefined-confidence");
  } catch (const Error& e) {
    CHECK(e.kind() == "undefined-confidence");
  }
}

namespace {

SlotPrediction span_pred(const std::string& tagged, const Vector& match, const Vector& l2) {
  SlotPrediction sp;
  sp.gate = dst::testing::gate_onehot(GateClass::span);
  sp.tagged_value = tagged;
  sp.match_weights = match;
  sp.l2_scores = l2;
  return sp;
}

}  // namespace

TEST_CASE("resolve_span_value follows the confidence gating rules", "[tracker][resolve]") {
  SlotSpec cat{"hotel-price", "price", true, false, {"cheap", "moderate", "expensive"}};
  SlotSpec open{"hotel-name", "name", false, false, {"palace hotel", "city lodge", "river inn"}};
  Vector peaked(3);
  peaked << 0.98, 0.01, 0.01;
  Vector uniform = Vector::Constant(3, 1.0 / 3.0);
  Vector l2_good(3);
  l2_good << 0.9, 0.05, 0.9;  // best = index 1

  TrackerOptions opt;
  opt.tau = 0.5;

  // Categorical with confident attention: top match candidate.
  auto r1 = resolve_span_value(span_pred("tagged words", peaked, l2_good), cat,
                               cat.candidate_values, opt);
  CHECK(r1.provenance == Provenance::match_attention);
  CHECK(*r1.value == "cheap");

  // Categorical, unconfident attention but confident L2: best-by-L2 (argmin).
  auto r2 = resolve_span_value(span_pred("tagged words", uniform, l2_good), cat,
                               cat.candidate_values, opt);
  CHECK(r2.provenance == Provenance::match_l2);
  CHECK(*r2.value == "moderate");

  // Literal argmax switch reproduces the printed reading.
  TrackerOptions lit = opt;
  lit.l2_literal_argmax = true;
  auto r2b = resolve_span_value(span_pred("tagged words", uniform, l2_good), cat,
                                cat.candidate_values, lit);
  CHECK(r2b.provenance == Provenance::match_l2);
  CHECK(*r2b.value == "cheap");  // argmax of {0.9, 0.05, 0.9} -> first maximal

  // tau = 1.0 disables matching entirely.
  TrackerOptions tau1 = opt;
  tau1.tau = 1.0;
  auto r3 = resolve_span_value(span_pred("tagged words", peaked, l2_good), cat,
                               cat.candidate_values, tau1);
  CHECK(r3.provenance == Provenance::tag);
  CHECK(*r3.value == "tagged words");

  // Non-categorical with uniform L2: confidence below tau, tagged value wins.
  Vector l2_uniform = Vector::Constant(3, 0.4);
  auto r4 = resolve_span_value(span_pred("graffiti", uniform, l2_uniform), open,
                               open.candidate_values, opt);
  CHECK(r4.provenance == Provenance::tag);
  CHECK(*r4.value == "graffiti");

  // Fewer than 2 candidates bypasses the gate.
  auto r5 = resolve_span_value(span_pred("graffiti", Vector(), Vector()), open, {"only"}, opt);
  CHECK(r5.provenance == Provenance::tag);

  // No tagged value and no confident match: flagged none.
  SlotPrediction sp;
  sp.gate = dst::testing::gate_onehot(GateClass::span);
  sp.match_weights = uniform;
  sp.l2_scores = l2_uniform;
  auto r6 = resolve_span_value(sp, cat, cat.candidate_values, opt);
  CHECK_FALSE(r6.value.has_value());
  CHECK(r6.flagged);
}

TEST_CASE("update_state applies each gate class", "[tracker][update]") {
  Schema schema;
  schema.domains = {"hotel", "taxi", "restaurant"};
  schema.slots = {
      SlotSpec{"hotel-name", "name of the hotel", false, false, {}},
      SlotSpec{"taxi-destination", "destination of the taxi", false, false, {}},
      SlotSpec{"restaurant-name", "name of the restaurant", false, false, {}},
      SlotSpec{"hotel-parking", "parking", false, true, {"true", "false"}},
  };
  TrackerOptions opt;

  DialogueStateT prev;
  prev.assignments = {{"restaurant-name", "graffiti"}};

  // All gates none: unchanged.
  TurnPrediction all_none;
  for (int i = 0; i < 4; ++i) {
    SlotPrediction sp;
    sp.gate = dst::testing::gate_onehot(GateClass::none);
    all_none.slots.push_back(sp);
  }
  DialogueStateT s1 = update_state(prev, all_none, {}, schema, opt);
  CHECK(s1.assignments == prev.assignments);

  // inform copies from the inform memory; refer copies across slots; booleans
  // and dontcare materialize literals.
  TurnPrediction mixed;
  {
    SlotPrediction inform_sp;
    inform_sp.gate = dst::testing::gate_onehot(GateClass::inform);
    mixed.slots.push_back(inform_sp);

    SlotPrediction refer_sp;
    refer_sp.gate = dst::testing::gate_onehot(GateClass::refer);
    refer_sp.refer_weights = Vector::Zero(4);
    refer_sp.refer_weights(2) = 1.0;  // restaurant-name
    mixed.slots.push_back(refer_sp);

    SlotPrediction dc;
    dc.gate = dst::testing::gate_onehot(GateClass::dontcare);
    mixed.slots.push_back(dc);

    SlotPrediction tru;
    tru.gate = dst::testing::gate_onehot(GateClass::true_);
    mixed.slots.push_back(tru);
  }
  InformMemory inform{{"hotel-name", "palace hotel"}};
  DialogueStateT s2 = update_state(prev, mixed, inform, schema, opt);
  CHECK(s2.assignments.at("hotel-name") == "palace hotel");
  CHECK(s2.assignments.at("taxi-destination") == "graffiti");
  CHECK(s2.assignments.at("restaurant-name") == "dontcare");
  CHECK(s2.assignments.at("hotel-parking") == "true");
  CHECK(s2.provenance.at("taxi-destination") == Provenance::refer);

  // refer to an empty slot or inform without memory: unchanged + flag.
  TurnPrediction bad;
  {
    SlotPrediction inform_sp;
    inform_sp.gate = dst::testing::gate_onehot(GateClass::inform);
    bad.slots.push_back(inform_sp);
    SlotPrediction refer_sp;
    refer_sp.gate = dst::testing::gate_onehot(GateClass::refer);
    refer_sp.refer_weights = Vector::Zero(4);
    refer_sp.refer_weights(1) = 1.0;  // taxi-destination, empty in prev
    bad.slots.push_back(refer_sp);
    SlotPrediction none_sp;
    none_sp.gate = dst::testing::gate_onehot(GateClass::none);
    bad.slots.push_back(none_sp);
    bad.slots.push_back(none_sp);
  }
  DialogueStateT s3 = update_state(prev, bad, {}, schema, opt);
  CHECK_FALSE(s3.assignments.count("hotel-name"));
  CHECK_FALSE(s3.assignments.count("taxi-destination"));
  CHECK(s3.flags.size() == 2);
  CHECK(s3.assignments.count("restaurant-name"));  // never deleted
}

TEST_CASE("replaying gold labels reconstructs the state on generated corpora", "[tracker][replay]") {
  GeneratorConfig cfg = default_generator_config();
  cfg.dialogues = 60;
  auto [schema, corpus] = gen_synthetic(cfg, 31);
  long turns = 0, correct = 0;
  for (const Dialogue& d : corpus) {
    auto states = dst::testing::replay_dialogue(d, schema);
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      ++turns;
      StateMap pred = states[t];
      if (pred == d.turns[t].state) ++correct;
      INFO(d.id << " turn " << t + 1);
      CHECK(pred == d.turns[t].state);
    }
  }
  REQUIRE(turns == correct);
}

TEST_CASE("db build is deterministic and value addition is local", "[tracker][db]") {
  GeneratorConfig cfg = default_generator_config();
  cfg.dialogues = 10;
  auto [schema, corpus] = gen_synthetic(cfg, 77);
  Tokenizer tok = Tokenizer::build(corpus, schema);
  EncoderConfig ec;
  ec.d = 16;
  ec.layers = 1;
  ec.heads = 2;
  ec.ffn_dim = 32;
  ec.max_len = 96;
  DstModel model;
  model.init(schema, tok, ec, 5);

  ConceptDB a = build_db(model);
  ConceptDB b = build_db(model);
  CHECK(a.slot_reprs == b.slot_reprs);
  REQUIRE(a.slot_names.size() == schema.slots.size());
  for (std::size_t i = 0; i < a.value_reprs.size(); ++i) CHECK(a.value_reprs[i] == b.value_reprs[i]);

  int slot = a.slot_index("hotel-name");
  REQUIRE(slot >= 0);
  std::size_t before = a.values[static_cast<std::size_t>(slot)].size();
  db_add_value(a, model, "hotel-name", "north star hotel");
  CHECK(a.values[static_cast<std::size_t>(slot)].size() == before + 1);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    if (static_cast<int>(i) == slot) continue;
    CHECK(a.value_reprs[i] == b.value_reprs[i]);
    CHECK(a.values[i] == b.values[i]);
  }
}

TEST_CASE("track_dialogue is deterministic and skips oversize turns", "[tracker][track]") {
  GeneratorConfig cfg = default_generator_config();
  cfg.dialogues = 6;
  auto [schema, corpus] = gen_synthetic(cfg, 91);
  Tokenizer tok = Tokenizer::build(corpus, schema);
  EncoderConfig ec;
  ec.d = 16;
  ec.layers = 1;
  ec.heads = 2;
  ec.ffn_dim = 32;
  ec.max_len = 96;
  DstModel model;
  model.init(schema, tok, ec, 6);
  ConceptDB db = build_db(model);
  TrackerOptions opt;

  auto a = track_dialogue(model, db, corpus[0], opt);
  auto b = track_dialogue(model, db, corpus[0], opt);
  REQUIRE(a.size() == b.size());
  for (std::size_t t = 0; t < a.size(); ++t)
    CHECK(a[t].state.assignments == b[t].state.assignments);

  // A turn whose current text alone exceeds max_len is skipped with the
  // previous state carried forward.
  Dialogue big = corpus[0];
  std::string long_utt;
  for (int i = 0; i < 200; ++i) long_utt += "word ";
  Turn extra;
  extra.user = long_utt;
  extra.state = big.turns.back().state;
  big.turns.push_back(extra);
  auto tracked = track_dialogue(model, db, big, opt);
  CHECK(tracked.back().skipped);
  CHECK(tracked.back().state.assignments == tracked[tracked.size() - 2].state.assignments);
}
