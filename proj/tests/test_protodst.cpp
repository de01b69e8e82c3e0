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
#include "dst/protodst.hpp"

using namespace dst;

TEST_CASE("close_tags reproduces the hand-computed closing", "[protodst][closing]") {
  Vector w(5);
  w << 0.8, 0.0, 0.9, 0.0, 0.0;
  auto tags = close_tags(w, 0.3);
  std::vector<std::uint8_t> want{1, 1, 1, 0, 0};  // single-token gap filled
  CHECK(tags == want);

  Vector low(4);
  low << 0.1, 0.2, 0.05, 0.25;
  auto none = close_tags(low, 0.3);
  CHECK(none == std::vector<std::uint8_t>(4, 0));

  // An already-binary interior block is unchanged (closing is extensive at
  // the array edges per the gap-filling boundary convention, so the block
  // needs clearance from them).
  Vector block(7);
  block << 0, 0, 1, 1, 1, 0, 0;
  auto closed = close_tags(block, 0.3);
  std::vector<std::uint8_t> want_block{0, 0, 1, 1, 1, 0, 0};
  CHECK(closed == want_block);
}

TEST_CASE("closing is idempotent on its own output", "[protodst][closing]") {
  Rng rng(17);
  for (int it = 0; it < 1000; ++it) {
    int n = static_cast<int>(rng.uniform_int(1, 24));
    Vector w(n);
    for (int i = 0; i < n; ++i) w(i) = rng.uniform() * 1.4 - 0.2;
    double nu = rng.uniform() * 0.9;
    auto once = close_tags(w, nu);
    Vector binary(n);
    for (int i = 0; i < n; ++i) binary(i) = once[static_cast<std::size_t>(i)];
    auto twice = close_tags(binary, nu);
    INFO("n=" << n << " nu=" << nu);
    CHECK(once == twice);
  }
}

TEST_CASE("closing never creates tags far from super-threshold inputs", "[protodst][closing]") {
  Rng rng(19);
  for (int it = 0; it < 500; ++it) {
    int n = static_cast<int>(rng.uniform_int(1, 20));
    Vector w(n);
    for (int i = 0; i < n; ++i) w(i) = rng.uniform();
    double nu = 0.25 + rng.uniform() * 0.5;
    auto tags = close_tags(w, nu);
    for (int i = 0; i < n; ++i) {
      if (!tags[static_cast<std::size_t>(i)]) continue;
      bool near = false;
      for (int j = std::max(0, i - 1); j <= std::min(n - 1, i + 1); ++j)
        near = near || w(j) > nu;
      CHECK(near);
    }
  }
}

namespace {

ProtoInput proto_from_text(const std::string& user, const std::string& system,
                           const Tokenizer& tok) {
  Turn t;
  t.user = user;
  t.system = system;
  return assemble_proto(t, tok, 180);
}

struct ProtoFixture {
  Schema schema;
  Corpus corpus;
  Tokenizer tok;
  ProtoFixture() {
    GeneratorConfig cfg = default_generator_config();
    cfg.dialogues = 24;
    auto [s, c] = gen_synthetic(cfg, 301);
    schema = s;
    corpus = c;
    tok = Tokenizer::build(corpus, schema);
  }
};

const ProtoFixture& pf() {
  static ProtoFixture f;
  return f;
}

}  // namespace

TEST_CASE("proto input layout has NONE at position 1 and no history", "[protodst]") {
  ProtoInput in = proto_from_text("book a table", "how about graffiti ?", pf().tok);
  CHECK(in.none_position == 1);
  CHECK(in.ids[0] == Tokenizer::kCls);
  CHECK(in.ids[1] == Tokenizer::kNone);
  CHECK(in.ids[2] == Tokenizer::kSep);
  CHECK(in.user_len == 3);
  CHECK(in.system_len == 4);
  CHECK(in.ids.back() == Tokenizer::kSep);
  auto mask = in.tagging_mask();
  CHECK(mask[1] == 1);  // NONE participates
  CHECK(mask[static_cast<std::size_t>(in.user_start)] == 1);
  CHECK(mask[static_cast<std::size_t>(in.system_start)] == 0);
}

TEST_CASE("positive queries spread the target over all occurrences", "[protodst][sample]") {
  ProtoInput in = proto_from_text("book a table for a party", "", pf().tok);
  ProtoConfig cfg;
  cfg.p_neg = 0.0;
  Rng rng(7);
  bool saw_multi = false, saw_pair = false;
  for (int it = 0; it < 300; ++it) {
    SampledQuery q = sample_query(in, cfg, rng);
    REQUIRE_FALSE(q.negative);
    CHECK(q.target.sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK(q.target(in.none_position) == 0.0);
    if (q.query_ids.size() == 1 && q.query_ids[0] == pf().tok.word_id("a")) {
      // "a" occurs twice: both occurrences get 0.5
      int marked = 0;
      for (int i = 0; i < in.length(); ++i)
        if (q.target(i) > 0) {
          ++marked;
          CHECK(q.target(i) == Catch::Approx(0.5));
          CHECK(in.ids[static_cast<std::size_t>(i)] == pf().tok.word_id("a"));
        }
      CHECK(marked == 2);
      saw_multi = true;
    }
    if (q.query_ids.size() == 2) saw_pair = true;
  }
  CHECK(saw_multi);
  CHECK(saw_pair);
}

TEST_CASE("negative queries target x_NONE and never occur in the input", "[protodst][sample]") {
  ProtoInput in = proto_from_text("i want a cheap hotel", "okay .", pf().tok);
  ProtoConfig cfg;
  cfg.p_neg = 1.0;
  Rng rng(23);
  for (int it = 0; it < 200; ++it) {
    SampledQuery q = sample_query(in, cfg, rng);
    if (q.fallback) continue;
    REQUIRE(q.negative);
    CHECK(q.target(in.none_position) == 1.0);
    CHECK(q.target.sum() == Catch::Approx(1.0));
    bool occurs = false;
    for (int i = 0; i + static_cast<int>(q.query_ids.size()) <= in.length(); ++i) {
      bool ok = true;
      for (std::size_t j = 0; j < q.query_ids.size(); ++j)
        if (in.ids[static_cast<std::size_t>(i) + j] != q.query_ids[j]) {
          ok = false;
          break;
        }
      occurs = occurs || ok;
    }
    CHECK_FALSE(occurs);
  }
}

TEST_CASE("use_none=false disables negative sampling", "[protodst][sample]") {
  ProtoInput in = proto_from_text("i want a cheap hotel", "", pf().tok);
  ProtoConfig cfg;
  cfg.p_neg = 1.0;
  cfg.use_none = false;
  Rng rng(29);
  for (int it = 0; it < 50; ++it) {
    SampledQuery q = sample_query(in, cfg, rng);
    CHECK_FALSE(q.negative);
  }
}

TEST_CASE("detect_failed_start separates uniform from peaked taggers", "[protodst]") {
  std::vector<Vector> uniform, peaked;
  for (int i = 0; i < 8; ++i) {
    uniform.push_back(Vector::Constant(20, 1.0 / 20.0));
    Vector p = Vector::Zero(20);
    p(i) = 1.0;
    peaked.push_back(p);
  }
  CHECK(detect_failed_start(uniform));
  CHECK_FALSE(detect_failed_start(peaked));
  REQUIRE_THROWS_AS(detect_failed_start({}), Error);
}

TEST_CASE("autolabel: zero state labels leave the corpus unchanged", "[protodst][autolabel]") {
  Dialogue d;
  d.id = "empty";
  Turn t;
  t.user = "hello there";
  t.system = "";
  d.turns = {t};
  Corpus corpus{d};

  EncoderConfig ec;
  ec.d = 16;
  ec.layers = 1;
  ec.heads = 2;
  ec.ffn_dim = 32;
  ec.max_len = 64;
  ProtoModel model;
  model.init(pf().schema, pf().tok, ec, 3);
  ProtoConfig cfg;
  AutolabelStats stats;
  Corpus out = autolabel(model, corpus, pf().schema, cfg, &stats);
  REQUIRE(out.size() == 1);
  CHECK(dialogue_to_json(out[0]) == dialogue_to_json(corpus[0]));
  CHECK(stats.attempts.empty());
}

TEST_CASE("autolabel assigns identical tags to slots sharing a value", "[protodst][autolabel]") {
  Dialogue d;
  d.id = "share";
  Turn t;
  t.user = "somewhere in the north please";
  t.system = "";
  t.state = {{"hotel-area", "north"}, {"restaurant-area", "north"}};
  d.turns = {t};

  EncoderConfig ec;
  ec.d = 16;
  ec.layers = 1;
  ec.heads = 2;
  ec.ffn_dim = 32;
  ec.max_len = 64;
  ProtoModel model;
  model.init(pf().schema, pf().tok, ec, 4);
  ProtoConfig cfg;
  AutolabelStats stats;
  Corpus out = autolabel(model, {d}, pf().schema, cfg, &stats);
  REQUIRE(out.size() == 1);
  const Turn& lt = out[0].turns[0];
  CHECK(lt.has_gates);
  bool a = lt.spans.count("hotel-area") > 0;
  bool b = lt.spans.count("restaurant-area") > 0;
  CHECK(a == b);  // identical treatment for a shared value
  if (a) CHECK(lt.spans.at("hotel-area") == lt.spans.at("restaurant-area"));
  CHECK(stats.attempts.at("hotel-area") == 1);
  CHECK(stats.attempts.at("restaurant-area") == 1);
  CHECK(out[0].provenance == "auto");
}
