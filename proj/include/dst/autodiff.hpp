// dst/autodiff.hpp
//
// Reverse-mode automatic differentiation over Eigen double matrices. A Tape
// records the forward graph for one step; backward() replays it in reverse.
// Parameters live outside the tape and receive accumulated gradients when
// their leaf nodes are reached.

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

#ifndef DST_AUTODIFF_HPP
#define DST_AUTODIFF_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dst/core.hpp"

namespace dst {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix m, v;  // optimizer moments

  void reset(const std::string& n, int rows, int cols) {
    name = n;
    value = Matrix::Zero(rows, cols);
    grad = Matrix::Zero(rows, cols);
    m = Matrix::Zero(rows, cols);
    v = Matrix::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(); }
};

inline void init_xavier(Param& p, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(p.value.rows() + p.value.cols()));
  for (Eigen::Index i = 0; i < p.value.rows(); ++i)
    for (Eigen::Index j = 0; j < p.value.cols(); ++j)
      p.value(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
}

inline void init_normal(Param& p, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < p.value.rows(); ++i)
    for (Eigen::Index j = 0; j < p.value.cols(); ++j) p.value(i, j) = rng.normal() * stddev;
}

struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

class Tape {
 public:
  Tape() { nodes_.reserve(512); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const Matrix& val(Var v) const { return nodes_[static_cast<std::size_t>(v.i)].val; }
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.i)].grad; }

  Var constant(Matrix m) { return push(std::move(m), false, {}); }

  Var param(Param& p) {
    Var v = push(p.value, true, {});
    Param* pp = &p;
    int idx = v.i;
    nodes_[static_cast<std::size_t>(idx)].back = [this, idx, pp]() {
      pp->grad += nodes_[static_cast<std::size_t>(idx)].grad;
    };
    return v;
  }

  Var matmul(Var a, Var b) {
    Var out = push(val(a) * val(b), needs(a) || needs(b), {a, b});
    int o = out.i, ai = a.i, bi = b.i;
    node(o).back = [this, o, ai, bi]() {
      const Matrix& g = node(o).grad;
      if (node(ai).needs_grad) ensure(ai).noalias() += g * node(bi).val.transpose();
      if (node(bi).needs_grad) ensure(bi).noalias() += node(ai).val.transpose() * g;
    };
    return out;
  }

  // a * b^T
  Var matmul_nt(Var a, Var b) {
    Var out = push(val(a) * val(b).transpose(), needs(a) || needs(b), {a, b});
    int o = out.i, ai = a.i, bi = b.i;
    node(o).back = [this, o, ai, bi]() {
      const Matrix& g = node(o).grad;
      if (node(ai).needs_grad) ensure(ai).noalias() += g * node(bi).val;
      if (node(bi).needs_grad) ensure(bi).noalias() += g.transpose() * node(ai).val;
    };
    return out;
  }

  Var add(Var a, Var b) {
    Var out = push(val(a) + val(b), needs(a) || needs(b), {a, b});
    int o = out.i, ai = a.i, bi = b.i;
    node(o).back = [this, o, ai, bi]() {
      const Matrix& g = node(o).grad;
      if (node(ai).needs_grad) ensure(ai) += g;
      if (node(bi).needs_grad) ensure(bi) += g;
    };
    return out;
  }

  Var sub(Var a, Var b) {
    Var out = push(val(a) - val(b), needs(a) || needs(b), {a, b});
    int o = out.i, ai = a.i, bi = b.i;
    node(o).back = [this, o, ai, bi]() {
      const Matrix& g = node(o).grad;
      if (node(ai).needs_grad) ensure(ai) += g;
      if (node(bi).needs_grad) ensure(bi) -= g;
    };
    return out;
  }

  Var hadamard(Var a, Var b) {
    Var out = push(val(a).cwiseProduct(val(b)), needs(a) || needs(b), {a, b});
    int o = out.i, ai = a.i, bi = b.i;
    node(o).back = [this, o, ai, bi]() {
      const Matrix& g = node(o).grad;
      if (node(ai).needs_grad) ensure(ai) += g.cwiseProduct(node(bi).val);
      if (node(bi).needs_grad) ensure(bi) += g.cwiseProduct(node(ai).val);
    };
    return out;
  }

  // Broadcast-add a 1 x cols row vector to every row of a.
  Var add_rowvec(Var a, Var b) {
    Matrix m = val(a);
    m.rowwise() += val(b).row(0);
    Var out = push(std::move(m), needs(a) || needs(b), {a, b});
    int o = out.i, ai = a.i, bi = b.i;
    node(o).back = [this, o, ai, bi]() {
      const Matrix& g = node(o).grad;
      if (node(ai).needs_grad) ensure(ai) += g;
      if (node(bi).needs_grad) ensure(bi) += g.colwise().sum();
    };
    return out;
  }

  Var scale(Var a, double s) {
    Var out = push(val(a) * s, needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai, s]() {
      if (node(ai).needs_grad) ensure(ai) += node(o).grad * s;
    };
    return out;
  }

  Var slice_cols(Var a, int c0, int n) {
    Var out = push(val(a).middleCols(c0, n), needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai, c0, n]() {
      if (node(ai).needs_grad) ensure(ai).middleCols(c0, n) += node(o).grad;
    };
    return out;
  }

  Var concat_cols(const std::vector<Var>& parts) {
    Eigen::Index rows = val(parts[0]).rows(), cols = 0;
    bool ng = false;
    for (Var p : parts) {
      cols += val(p).cols();
      ng = ng || needs(p);
    }
    Matrix m(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
      m.middleCols(c, val(p).cols()) = val(p);
      c += val(p).cols();
    }
    Var out = push(std::move(m), ng, parts);
    int o = out.i;
    std::vector<int> ids;
    for (Var p : parts) ids.push_back(p.i);
    node(o).back = [this, o, ids]() {
      Eigen::Index c = 0;
      for (int pi : ids) {
        Eigen::Index w = node(pi).val.cols();
        if (node(pi).needs_grad) ensure(pi) += node(o).grad.middleCols(c, w);
        c += w;
      }
    };
    return out;
  }

  Var row(Var a, int r) {
    Var out = push(val(a).row(r), needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai, r]() {
      if (node(ai).needs_grad) ensure(ai).row(r) += node(o).grad.row(0);
    };
    return out;
  }

  Var vstack(const std::vector<Var>& parts) {
    Eigen::Index cols = val(parts[0]).cols(), rows = 0;
    bool ng = false;
    for (Var p : parts) {
      rows += val(p).rows();
      ng = ng || needs(p);
    }
    Matrix m(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
      m.middleRows(r, val(p).rows()) = val(p);
      r += val(p).rows();
    }
    Var out = push(std::move(m), ng, parts);
    int o = out.i;
    std::vector<int> ids;
    for (Var p : parts) ids.push_back(p.i);
    node(o).back = [this, o, ids]() {
      Eigen::Index r = 0;
      for (int pi : ids) {
        Eigen::Index h = node(pi).val.rows();
        if (node(pi).needs_grad) ensure(pi) += node(o).grad.middleRows(r, h);
        r += h;
      }
    };
    return out;
  }

  // Row-wise softmax with an optional key mask over columns. Masked columns
  // receive -inf pre-softmax, so their post-softmax weight is exactly zero.
  Var softmax_rows(Var a, const std::vector<std::uint8_t>* key_mask = nullptr) {
    const Matrix& x = val(a);
    if (key_mask) {
      if (static_cast<Eigen::Index>(key_mask->size()) != x.cols())
        fail("attention", "key mask length does not match key count");
      bool any = false;
      for (auto m : *key_mask) any = any || (m != 0);
      if (!any) fail("attention", "all key positions are masked");
    }
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        if (key_mask && !(*key_mask)[static_cast<std::size_t>(c)]) continue;
        mx = std::max(mx, x(r, c));
      }
      double sum = 0;
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double e = (key_mask && !(*key_mask)[static_cast<std::size_t>(c)])
                       ? 0.0
                       : std::exp(x(r, c) - mx);
        y(r, c) = e;
        sum += e;
      }
      y.row(r) /= sum;
    }
    Var out = push(std::move(y), needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai]() {
      if (!node(ai).needs_grad) return;
      const Matrix& yv = node(o).val;
      const Matrix& g = node(o).grad;
      Matrix& gx = ensure(ai);
      for (Eigen::Index r = 0; r < yv.rows(); ++r) {
        double dot = g.row(r).cwiseProduct(yv.row(r)).sum();
        gx.row(r) += yv.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
      }
    };
    return out;
  }

  // Row-wise layer normalization with learned gain and bias (1 x d each).
  Var layernorm_rows(Var a, Var gain, Var bias, double eps = 1e-5) {
    const Matrix& x = val(a);
    Eigen::Index d = x.cols();
    Matrix xhat(x.rows(), d), y(x.rows(), d);
    Vector inv_sigma(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      double mu = x.row(r).mean();
      double var = (x.row(r).array() - mu).square().mean();
      double is = 1.0 / std::sqrt(var + eps);
      inv_sigma(r) = is;
      xhat.row(r) = (x.row(r).array() - mu).matrix() * is;
      y.row(r) = xhat.row(r).cwiseProduct(val(gain).row(0)) + val(bias).row(0);
    }
    Var out = push(std::move(y), needs(a) || needs(gain) || needs(bias), {a, gain, bias});
    int o = out.i, ai = a.i, gi = gain.i, bi = bias.i;
    auto xh = std::make_shared<Matrix>(std::move(xhat));
    auto isg = std::make_shared<Vector>(std::move(inv_sigma));
    node(o).back = [this, o, ai, gi, bi, xh, isg]() {
      const Matrix& g = node(o).grad;
      Eigen::Index d = g.cols();
      if (node(gi).needs_grad) ensure(gi) += g.cwiseProduct(*xh).colwise().sum();
      if (node(bi).needs_grad) ensure(bi) += g.colwise().sum();
      if (node(ai).needs_grad) {
        Matrix& gx = ensure(ai);
        for (Eigen::Index r = 0; r < g.rows(); ++r) {
          Eigen::RowVectorXd gh = g.row(r).cwiseProduct(node(gi).val.row(0));
          double mean_gh = gh.mean();
          double mean_ghx = gh.cwiseProduct(xh->row(r)).mean();
          gx.row(r) += ((*isg)(r)) * (gh.array() - mean_gh - xh->row(r).array() * mean_ghx).matrix();
        }
      }
    };
    return out;
  }

  // Exact GeLU: 0.5 x (1 + erf(x / sqrt(2))).
  Var gelu(Var a) {
    constexpr double kInvSqrt2 = 0.7071067811865475244;
    constexpr double kInvSqrt2Pi = 0.3989422804014326779;
    const Matrix& x = val(a);
    Matrix y = x.unaryExpr([&](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
    Var out = push(std::move(y), needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai]() {
      if (!node(ai).needs_grad) return;
      const Matrix& x = node(ai).val;
      Matrix d = x.unaryExpr([&](double v) {
        double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        double pdf = std::exp(-0.5 * v * v) * kInvSqrt2Pi;
        return cdf + v * pdf;
      });
      ensure(ai) += node(o).grad.cwiseProduct(d);
    };
    return out;
  }

  Var log(Var a) {
    Var out = push(val(a).array().log().matrix(), needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai]() {
      if (node(ai).needs_grad)
        ensure(ai) += node(o).grad.cwiseQuotient(node(ai).val);
    };
    return out;
  }

  Var sum_all(Var a) {
    Matrix s(1, 1);
    s(0, 0) = val(a).sum();
    Var out = push(std::move(s), needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai]() {
      if (node(ai).needs_grad)
        ensure(ai).array() += node(o).grad(0, 0);
    };
    return out;
  }

  Var mean_all(Var a) {
    double n = static_cast<double>(val(a).size());
    return scale(sum_all(a), 1.0 / n);
  }

  Var pick(Var a, int r, int c) {
    Matrix s(1, 1);
    s(0, 0) = val(a)(r, c);
    Var out = push(std::move(s), needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai, r, c]() {
      if (node(ai).needs_grad) ensure(ai)(r, c) += node(o).grad(0, 0);
    };
    return out;
  }

  // Embedding lookup: rows of `table` selected by ids.
  Var gather_rows(Var table, const std::vector<int>& ids) {
    const Matrix& t = val(table);
    Matrix m(static_cast<Eigen::Index>(ids.size()), t.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= t.rows()) fail("encoder", "token id out of vocabulary range");
      m.row(static_cast<Eigen::Index>(i)) = t.row(ids[i]);
    }
    Var out = push(std::move(m), needs(table), {table});
    int o = out.i, ti = table.i;
    auto idv = std::make_shared<std::vector<int>>(ids);
    node(o).back = [this, o, ti, idv]() {
      if (!node(ti).needs_grad) return;
      Matrix& g = ensure(ti);
      for (std::size_t i = 0; i < idv->size(); ++i)
        g.row((*idv)[i]) += node(o).grad.row(static_cast<Eigen::Index>(i));
    };
    return out;
  }

  // Inverted dropout; identity when p == 0 or train == false.
  Var dropout(Var a, double p, Rng& rng, bool train) {
    if (!train || p <= 0.0) return a;
    const Matrix& x = val(a);
    auto mask = std::make_shared<Matrix>(x.rows(), x.cols());
    double keep = 1.0 - p;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        (*mask)(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
    Var out = push(x.cwiseProduct(*mask), needs(a), {a});
    int o = out.i, ai = a.i;
    node(o).back = [this, o, ai, mask]() {
      if (node(ai).needs_grad) ensure(ai) += node(o).grad.cwiseProduct(*mask);
    };
    return out;
  }

  void backward(Var loss) {
    Node& last = node(loss.i);
    if (last.val.rows() != 1 || last.val.cols() != 1) fail("autodiff", "backward needs a scalar");
    for (auto& n : nodes_)
      if (n.grad.size() != 0) n.grad.setZero();
    ensure(loss.i)(0, 0) = 1.0;
    for (int i = loss.i; i >= 0; --i) {
      Node& n = node(i);
      if (n.back && n.grad.size() != 0) n.back();
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix val;
    Matrix grad;
    std::function<void()> back;
    bool needs_grad = false;
  };

  Node& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.i)].needs_grad; }

  Matrix& ensure(int i) {
    Node& n = node(i);
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }

  Var push(Matrix m, bool needs_grad, const std::vector<Var>&) {
    Node n;
    n.val = std::move(m);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

// Linear warmup to the peak rate, then linear decay to zero at total_steps.
inline double scheduled_lr(double peak, long step, long total_steps, double warmup_fraction) {
  long warmup = std::max<long>(
      1, static_cast<long>(std::ceil(warmup_fraction * static_cast<double>(total_steps))));
  if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  if (step >= total_steps) return 0.0;
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

// ---------------------------------------------------------------------------
// AdamW: adaptive moments with decoupled weight decay.
// ---------------------------------------------------------------------------

struct AdamW {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  long step_count = 0;

  void step(const std::vector<Param*>& params, double lr) {
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (Param* p : params) {
      p->m = beta1 * p->m + (1.0 - beta1) * p->grad;
      p->v = beta2 * p->v + (1.0 - beta2) * p->grad.cwiseProduct(p->grad);
      Matrix denom = (p->v / bc2).cwiseSqrt();
      denom.array() += eps;
      p->value -= lr * ((p->m / bc1).cwiseQuotient(denom) + weight_decay * p->value);
      p->zero_grad();
    }
  }
};

}  // namespace dst

#endif  // DST_AUTODIFF_HPP
