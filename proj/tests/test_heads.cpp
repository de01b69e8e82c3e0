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

#include "dst/heads.hpp"
#include "support/gradcheck.hpp"

using namespace dst;
using dst::testing::gradcheck;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("mha: singleton key gets weight one; identical keys get uniform weights", "[heads]") {
  Rng rng(3);
  MhaParams p;
  p.init("m", 8, 2, rng);
  Tape tape;
  MhaVars mv = bind_mha(tape, p, false);
  Var q = tape.constant(random_matrix(1, 8, rng));
  Var k1 = tape.constant(random_matrix(1, 8, rng));
  MhaResult single = mha(tape, mv, q, k1, k1);
  CHECK(tape.val(single.weights)(0, 0) == Catch::Approx(1.0));

  Matrix same = random_matrix(1, 8, rng);
  Matrix keys(4, 8);
  for (int i = 0; i < 4; ++i) keys.row(i) = same.row(0);
  Var k4 = tape.constant(keys);
  MhaResult uni = mha(tape, mv, q, k4, k4);
  for (int j = 0; j < 4; ++j) CHECK(tape.val(uni.weights)(0, j) == Catch::Approx(0.25));
}

TEST_CASE("mha: weights sum to one and masked entries are zero on random instances", "[heads]") {
  Rng rng(5);
  for (int it = 0; it < 20; ++it) {
    MhaParams p;
    p.init("m", 8, 2, rng);
    int m = static_cast<int>(rng.uniform_int(2, 9));
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(m), 0);
    int allowed = static_cast<int>(rng.uniform_int(1, m));
    for (int i = 0; i < allowed; ++i) mask[static_cast<std::size_t>(i)] = 1;
    rng.shuffle(mask);
    Tape tape;
    MhaVars mv = bind_mha(tape, p, false);
    Var q = tape.constant(random_matrix(1, 8, rng));
    Var keys = tape.constant(random_matrix(m, 8, rng));
    MhaResult r = mha(tape, mv, q, keys, keys, &mask);
    double sum = tape.val(r.weights).row(0).sum();
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    for (int j = 0; j < m; ++j)
      if (!mask[static_cast<std::size_t>(j)]) CHECK(tape.val(r.weights)(0, j) == 0.0);
  }
}

TEST_CASE("slot gate is a proper posterior; zero last layer gives uniform", "[heads]") {
  Rng rng(7);
  HeadParams hp;
  hp.init(8, 2, rng);
  Tape tape;
  HeadVars hv = bind_heads(tape, hp, false);
  Var slot = tape.constant(random_matrix(1, 8, rng));
  Var tokens = tape.constant(random_matrix(6, 8, rng));
  SlotGateResult r = slot_gate(tape, hv, slot, tokens);
  const Matrix& gate = tape.val(r.gate);
  REQUIRE(gate.cols() == 7);
  double sum = 0;
  for (int j = 0; j < 7; ++j) {
    CHECK(gate(0, j) > 0.0);
    sum += gate(0, j);
  }
  CHECK(sum == Catch::Approx(1.0).margin(1e-12));

  hp.W5g.value.setZero();
  hp.b5g.value.setZero();
  Tape t2;
  HeadVars hv2 = bind_heads(t2, hp, false);
  SlotGateResult r2 = slot_gate(t2, hv2, t2.constant(random_matrix(1, 8, rng)),
                                t2.constant(random_matrix(6, 8, rng)));
  for (int j = 0; j < 7; ++j) CHECK(t2.val(r2.gate)(0, j) == Catch::Approx(1.0 / 7.0));
}

TEST_CASE("sequence tagger respects the user mask", "[heads]") {
  Rng rng(9);
  HeadParams hp;
  hp.init(8, 2, rng);
  Tape tape;
  HeadVars hv = bind_heads(tape, hp, false);
  Var slot = tape.constant(random_matrix(1, 8, rng));
  Var tokens = tape.constant(random_matrix(7, 8, rng));
  std::vector<std::uint8_t> mask{0, 1, 1, 0, 0, 1, 0};
  SequenceTagResult r = sequence_tag(tape, hv, slot, tokens, mask);
  const Matrix& w = tape.val(r.tag_weights);
  CHECK(w.row(0).sum() == Catch::Approx(1.0).margin(1e-12));
  for (int j = 0; j < 7; ++j)
    if (!mask[static_cast<std::size_t>(j)]) CHECK(w(0, j) == 0.0);
  CHECK(tape.val(r.context_summary).cols() == 8);

  std::vector<std::uint8_t> empty(7, 0);
  REQUIRE_THROWS_AS(sequence_tag(tape, hv, slot, tokens, empty), Error);
}

TEST_CASE("normalize_tags reproduces the hand-computed vectors", "[heads][tags]") {
  Vector uniform(4);
  uniform << 0.25, 0.25, 0.25, 0.25;
  Vector nu = normalize_tags(uniform);
  for (int i = 0; i < 4; ++i) CHECK(nu(i) == Catch::Approx(0.0).margin(1e-12));

  Vector peaked(4);
  peaked << 0.7, 0.1, 0.1, 0.1;
  Vector np = normalize_tags(peaked);
  CHECK(np(0) == Catch::Approx(0.642857142857).epsilon(1e-9));
  for (int i = 1; i < 4; ++i) CHECK(np(i) == Catch::Approx(-0.214285714286).epsilon(1e-9));

  Vector pair(4);
  pair << 0.45, 0.45, 0.05, 0.05;
  Vector npair = normalize_tags(pair);
  CHECK(npair(0) == Catch::Approx(0.444444444444).epsilon(1e-9));
  CHECK(npair(1) == Catch::Approx(0.444444444444).epsilon(1e-9));
  CHECK(npair(2) == Catch::Approx(-0.444444444444).epsilon(1e-9));

  Vector zero = Vector::Zero(3);
  REQUIRE_THROWS_AS(normalize_tags(zero), Error);
  Vector empty(0);
  REQUIRE_THROWS_AS(normalize_tags(empty), Error);
}

TEST_CASE("normalize_tags: max position positive on non-uniform input", "[heads][tags]") {
  Rng rng(31);
  for (int it = 0; it < 50; ++it) {
    int n = static_cast<int>(rng.uniform_int(2, 12));
    Vector w(n);
    double s = 0;
    for (int i = 0; i < n; ++i) {
      w(i) = rng.uniform() + 1e-6;
      s += w(i);
    }
    w /= s;
    Vector nw = normalize_tags(w);
    int arg;
    w.maxCoeff(&arg);
    double mean = 1.0 / n;
    if ((w.array() - mean).abs().maxCoeff() > 1e-12) CHECK(nw(arg) > 0.0);
    for (int i = 0; i < n; ++i)
      if (std::abs(w(i) - mean) < 1e-15) CHECK(std::abs(nw(i)) < 1e-12);
  }
}

TEST_CASE("extract_value picks the run with the highest mean weight", "[heads][tags]") {
  // Build a tokenizer over a toy corpus to detokenize against.
  Dialogue d;
  d.id = "x";
  Turn t;
  t.user = "aa bb cc dd ee";
  d.turns = {t};
  Schema s;
  s.domains = {"z"};
  s.slots = {SlotSpec{"z-a", "", false, false, {}}};
  Tokenizer tok = Tokenizer::build({d}, s);
  std::vector<int> ids = tok.encode_words("aa bb cc dd ee");

  Vector none = Vector::Constant(5, -0.2);
  CHECK_FALSE(extract_value(none, ids, tok).has_value());

  // runs: {0.6} at pos 0 vs {0.5, 0.55} at pos 2-3: first wins (0.6 > 0.525)
  Vector v(5);
  v << 0.6, -0.1, 0.5, 0.55, -0.2;
  auto got = extract_value(v, ids, tok);
  REQUIRE(got.has_value());
  CHECK(*got == "aa");

  // tie goes to the earliest run
  Vector tie(5);
  tie << 0.5, -0.1, 0.5, -0.1, 0.1;
  auto got2 = extract_value(tie, ids, tok);
  REQUIRE(got2.has_value());
  CHECK(*got2 == "aa");
}

TEST_CASE("refer head: weights over slots sum to one; identical slots tie", "[heads]") {
  Rng rng(11);
  HeadParams hp;
  hp.init(8, 2, rng);
  Tape tape;
  HeadVars hv = bind_heads(tape, hp, false);
  Var slot = tape.constant(random_matrix(1, 8, rng));
  Var g2 = tape.constant(random_matrix(1, 8, rng));
  Matrix same = random_matrix(1, 8, rng);
  Matrix slots(2, 8);
  slots.row(0) = same.row(0);
  slots.row(1) = same.row(0);
  Var rs = tape.constant(slots);
  Var w = refer_head(tape, hv, slot, g2, rs);
  CHECK(tape.val(w)(0, 0) == Catch::Approx(0.5));
  CHECK(tape.val(w)(0, 1) == Catch::Approx(0.5));
  CHECK(tape.val(w).row(0).sum() == Catch::Approx(1.0).margin(1e-12));

  Var one_slot = tape.constant(random_matrix(1, 8, rng));
  REQUIRE_THROWS_AS(refer_head(tape, hv, slot, g2, one_slot), Error);
}

TEST_CASE("value matcher: singleton weight, duplicate symmetry, l2 properties", "[heads]") {
  Rng rng(13);
  HeadParams hp;
  hp.init(8, 2, rng);
  Tape tape;
  HeadVars hv = bind_heads(tape, hp, false);
  Var slot = tape.constant(random_matrix(1, 8, rng));
  Var ctx = tape.constant(random_matrix(1, 8, rng));

  Matrix enc1 = random_matrix(3, 8, rng);
  auto single = value_match(tape, hv, slot, ctx, {enc1});
  CHECK(tape.val(single.match_weights)(0, 0) == Catch::Approx(1.0));

  auto dup = value_match(tape, hv, slot, ctx, {enc1, enc1});
  CHECK(tape.val(dup.match_weights)(0, 0) == Catch::Approx(0.5));
  CHECK(dup.l2_scores(0) == Catch::Approx(dup.l2_scores(1)));
  CHECK(dup.l2_scores(0) >= 0.0);

  // l2 is zero iff the representation equals the context summary.
  Tape t2;
  HeadVars hv2 = bind_heads(t2, hp, false);
  Var slot2 = t2.constant(random_matrix(1, 8, rng));
  auto probe = value_match(t2, hv2, slot2, t2.constant(random_matrix(1, 8, rng)), {enc1});
  CHECK(probe.l2_scores(0) > 0.0);
  Var ctx_eq = t2.constant(t2.val(probe.value_reprs[0]));
  auto eq = value_match(t2, hv2, slot2, ctx_eq, {enc1});
  CHECK(eq.l2_scores(0) == Catch::Approx(0.0).margin(1e-12));

  REQUIRE_THROWS_AS(value_match(tape, hv, slot, ctx, {}), Error);
}

TEST_CASE("dot-product / cosine link: identity projections preserve cosine order", "[heads]") {
  Rng rng(17);
  int d = 8;
  MhaParams p;
  p.init("m", d, 1, rng);
  p.Wq.value = Matrix::Identity(d, d);
  p.Wk.value = Matrix::Identity(d, d);
  p.bq.value.setZero();
  p.bk.value.setZero();
  for (int it = 0; it < 30; ++it) {
    int n = static_cast<int>(rng.uniform_int(2, 8));
    Matrix q = random_matrix(1, d, rng);
    Matrix keys = random_matrix(n, d, rng);
    for (int i = 0; i < n; ++i) keys.row(i) /= keys.row(i).norm();  // unit-norm candidates
    Tape tape;
    MhaVars mv = bind_mha(tape, p, false);
    MhaResult r = mha(tape, mv, tape.constant(q), tape.constant(keys), tape.constant(keys));
    // cosine similarities against the raw query
    std::vector<int> by_weight(static_cast<std::size_t>(n)), by_cos(static_cast<std::size_t>(n));
    std::iota(by_weight.begin(), by_weight.end(), 0);
    by_cos = by_weight;
    const Matrix& w = tape.val(r.weights);
    Vector cos(n);
    for (int i = 0; i < n; ++i) cos(i) = q.row(0).dot(keys.row(i)) / q.row(0).norm();
    std::sort(by_weight.begin(), by_weight.end(), [&](int a, int b) { return w(0, a) > w(0, b); });
    std::sort(by_cos.begin(), by_cos.end(), [&](int a, int b) { return cos(a) > cos(b); });
    CHECK(by_weight == by_cos);
  }
}

TEST_CASE("every head passes a finite-difference gradient check", "[heads][grad]") {
  Rng rng(19);
  int d = 8;
  HeadParams hp;
  hp.init(d, 2, rng);
  Matrix slot = random_matrix(1, d, rng);
  Matrix tokens = random_matrix(5, d, rng);
  Matrix all_slots = random_matrix(3, d, rng);
  std::vector<Matrix> vals = {random_matrix(3, d, rng), random_matrix(4, d, rng)};
  std::vector<std::uint8_t> mask{0, 1, 1, 1, 0};

  auto forward = [&](Tape& tape) {
    HeadVars hv = bind_heads(tape, hp, true);
    Var s = tape.constant(slot);
    Var tk = tape.constant(tokens);
    SlotGateResult g = slot_gate(tape, hv, s, tk);
    SequenceTagResult q = sequence_tag(tape, hv, s, tk, mask);
    Var f = refer_head(tape, hv, s, g.g2, tape.constant(all_slots));
    auto m = value_match(tape, hv, s, q.context_summary, vals);
    // A scalar touching every head's outputs.
    Var loss = tape.add(tape.add(tape.mean_all(tape.hadamard(g.gate, g.gate)),
                                 tape.mean_all(tape.hadamard(q.tag_weights, q.tag_weights))),
                        tape.add(tape.mean_all(tape.hadamard(f, f)),
                                 tape.mean_all(tape.hadamard(m.match_weights, m.match_weights))));
    return loss;
  };
  auto loss = [&]() {
    Tape tape;
    return tape.val(forward(tape))(0, 0);
  };
  auto backward = [&]() {
    Tape tape;
    tape.backward(forward(tape));
  };
  Rng pick(23);
  auto rep = gradcheck(loss, backward, hp.all(), pick, 4);
  INFO("worst " << rep.worst << " rel " << rep.max_rel_error);
  CHECK(rep.max_rel_error < 1e-4);
}
