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

#include "dst/autodiff.hpp"
#include "support/gradcheck.hpp"

using namespace dst;
using dst::testing::gradcheck;

namespace {

Param make_param(const std::string& name, int r, int c, Rng& rng) {
  Param p;
  p.reset(name, r, c);
  init_xavier(p, rng);
  return p;
}

}  // namespace

TEST_CASE("composite expression gradients match finite differences", "[autodiff]") {
  Rng rng(7);
  Param A = make_param("A", 3, 4, rng);
  Param B = make_param("B", 4, 5, rng);
  Param b = make_param("b", 1, 5, rng);
  Param g = make_param("g", 1, 5, rng);
  Param h = make_param("h", 1, 5, rng);
  g.value.setOnes();

  auto forward = [&](Tape& tape) {
    Var a = tape.param(A);
    Var bb = tape.param(B);
    Var x = tape.matmul(a, bb);
    x = tape.add_rowvec(x, tape.param(b));
    x = tape.gelu(x);
    x = tape.layernorm_rows(x, tape.param(g), tape.param(h));
    Var sm = tape.softmax_rows(x);
    return tape.mean_all(tape.hadamard(sm, x));
  };
  auto loss = [&]() {
    Tape tape;
    return tape.val(forward(tape))(0, 0);
  };
  auto backward = [&]() {
    Tape tape;
    tape.backward(forward(tape));
  };
  std::vector<Param*> params{&A, &B, &b, &g, &h};
  Rng pick(3);
  auto rep = gradcheck(loss, backward, params, pick, 10);
  INFO("worst " << rep.worst);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("masked softmax zeroes masked keys and their gradients", "[autodiff]") {
  Rng rng(9);
  Param S = make_param("S", 2, 5, rng);
  std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
  Tape tape;
  Var sm = tape.softmax_rows(tape.param(S), &mask);
  const Matrix& y = tape.val(sm);
  for (int r = 0; r < 2; ++r) {
    CHECK(y(r, 1) == 0.0);
    CHECK(y(r, 4) == 0.0);
    CHECK(y.row(r).sum() == Catch::Approx(1.0).margin(1e-12));
  }
  std::vector<std::uint8_t> all_zero(5, 0);
  Tape t2;
  REQUIRE_THROWS_AS(t2.softmax_rows(t2.param(S), &all_zero), Error);
}

TEST_CASE("gather_rows scatters gradients into the table", "[autodiff]") {
  Rng rng(11);
  Param T = make_param("T", 6, 3, rng);
  std::vector<int> ids{2, 2, 5};
  auto forward = [&](Tape& tape) {
    Var t = tape.param(T);
    return tape.sum_all(tape.gather_rows(t, ids));
  };
  Tape tape;
  tape.backward(forward(tape));
  CHECK(T.grad.row(2).sum() == Catch::Approx(6.0));  // two hits, 3 cols each grad 1
  CHECK(T.grad.row(5).sum() == Catch::Approx(3.0));
  CHECK(T.grad.row(0).sum() == 0.0);
  Tape t2;
  std::vector<int> bad{7};
  REQUIRE_THROWS_AS(t2.gather_rows(t2.param(T), bad), Error);
}

TEST_CASE("dropout is identity at p=0 and scales kept entries", "[autodiff]") {
  Rng rng(13);
  Param X = make_param("X", 4, 4, rng);
  Tape tape;
  Var x = tape.param(X);
  Var y = tape.dropout(x, 0.0, rng, true);
  CHECK(tape.val(y) == X.value);
  Rng rng2(14);
  Tape t2;
  Var z = t2.dropout(t2.param(X), 0.5, rng2, true);
  const Matrix& zv = t2.val(z);
  for (int i = 0; i < zv.rows(); ++i)
    for (int j = 0; j < zv.cols(); ++j) {
      bool zero = zv(i, j) == 0.0;
      bool scaled = std::abs(zv(i, j) - 2.0 * X.value(i, j)) < 1e-12;
      CHECK((zero || scaled));
    }
}

TEST_CASE("AdamW applies decoupled weight decay", "[autodiff]") {
  Param p;
  p.reset("w", 1, 1);
  p.value(0, 0) = 1.0;
  p.grad(0, 0) = 0.0;
  AdamW opt;
  opt.weight_decay = 0.1;
  opt.step({&p}, 0.5);
  // Zero gradient: the only update is the decay term lr * wd * w.
  CHECK(p.value(0, 0) == Catch::Approx(1.0 - 0.5 * 0.1 * 1.0));
}

TEST_CASE("backward requires a scalar", "[autodiff]") {
  Rng rng(15);
  Param X = make_param("X", 2, 2, rng);
  Tape tape;
  Var x = tape.param(X);
  REQUIRE_THROWS_AS(tape.backward(x), Error);
}
