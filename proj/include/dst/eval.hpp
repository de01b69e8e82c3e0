// dst/eval.hpp
//
// Metrics (joint goal accuracy, per-domain JGA, slot-gate accuracy, tagging
// joint accuracy), threshold sweeps, and curve emission as CSV + SVG.

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

#ifndef DST_EVAL_HPP
#define DST_EVAL_HPP

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dst/core.hpp"
#include "dst/corpus.hpp"
#include "dst/model.hpp"
#include "dst/protodst.hpp"
#include "dst/tracker.hpp"

namespace dst {

// ---------------------------------------------------------------------------
// Joint goal accuracy: a turn counts iff every slot matches gold exactly,
// absent slots counting as none on both sides.
// ---------------------------------------------------------------------------

inline bool states_equal(const StateMap& a, const StateMap& b) {
  for (const auto& [k, v] : a) {
    auto it = b.find(k);
    if (it == b.end() || normalize_value(it->second) != normalize_value(v)) return false;
  }
  for (const auto& [k, v] : b)
    if (!a.count(k)) return false;
  return true;
}

inline double joint_goal_accuracy(const std::vector<std::vector<StateMap>>& pred_states,
                                  const std::vector<std::vector<StateMap>>& gold_states) {
  if (pred_states.size() != gold_states.size())
    fail("eval", "dialogue counts differ between prediction and gold");
  long correct = 0, total = 0;
  for (std::size_t d = 0; d < pred_states.size(); ++d) {
    if (pred_states[d].size() != gold_states[d].size())
      fail("eval", "turn counts differ in dialogue " + std::to_string(d));
    for (std::size_t t = 0; t < pred_states[d].size(); ++t) {
      ++total;
      if (states_equal(pred_states[d][t], gold_states[d][t])) ++correct;
    }
  }
  if (total == 0) fail("eval", "no turns to evaluate");
  return static_cast<double>(correct) / static_cast<double>(total);
}

inline StateMap restrict_to_domain(const StateMap& state, const Schema& schema,
                                   const std::string& domain) {
  StateMap out;
  for (const auto& [k, v] : state)
    if (schema.slot(k).domain() == domain) out[k] = v;
  return out;
}

// ---------------------------------------------------------------------------
// Slot-gate accuracy with per-class confusion counts
// ---------------------------------------------------------------------------

struct GateAccuracy {
  double accuracy = 0.0;
  std::array<std::array<long, kNumGateClasses>, kNumGateClasses> confusion{};  // [gold][pred]
};

inline GateAccuracy slot_gate_accuracy(const std::vector<GateClass>& pred,
                                       const std::vector<GateClass>& gold) {
  if (pred.size() != gold.size()) fail("eval", "gate sequences differ in length");
  if (pred.empty()) fail("eval", "no gates to evaluate");
  GateAccuracy out;
  long correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(pred[i])] += 1;
    if (pred[i] == gold[i]) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  return out;
}

// ---------------------------------------------------------------------------
// Tagging joint accuracy: a (turn, query) pair counts iff every token label
// matches.
// ---------------------------------------------------------------------------

struct TaggingAccuracy {
  double accuracy = 0.0;
  std::map<std::string, double> per_slot;
};

inline TaggingAccuracy tagging_joint_accuracy(
    const std::vector<std::vector<std::uint8_t>>& pred,
    const std::vector<std::vector<std::uint8_t>>& gold,
    const std::vector<std::string>* slots = nullptr) {
  if (pred.size() != gold.size()) fail("eval", "tag sequences differ in count");
  if (pred.empty()) fail("eval", "no tag sequences to evaluate");
  long correct = 0;
  std::map<std::string, std::pair<long, long>> per_slot;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gold[i].size()) fail("eval", "tag length mismatch");
    bool ok = pred[i] == gold[i];
    if (ok) ++correct;
    if (slots) {
      auto& [c, n] = per_slot[(*slots)[i]];
      c += ok ? 1 : 0;
      n += 1;
    }
  }
  TaggingAccuracy out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
  for (const auto& [slot, cn] : per_slot)
    out.per_slot[slot] = static_cast<double>(cn.first) / static_cast<double>(cn.second);
  return out;
}

// ---------------------------------------------------------------------------
// Corpus evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  double jga = 0.0;
  std::map<std::string, double> per_domain_jga;
  double slot_gate_accuracy = 0.0;
  std::optional<double> tagging_joint_accuracy;
  std::map<std::string, double> per_slot_accuracy;
  long turn_count = 0;
  GateAccuracy gates;

  json to_json() const {
    json j;
    j["jga"] = jga;
    j["per_domain_jga"] = per_domain_jga;
    j["slot_gate_accuracy"] = slot_gate_accuracy;
    if (tagging_joint_accuracy) j["tagging_joint_accuracy"] = *tagging_joint_accuracy;
    j["per_slot_accuracy"] = per_slot_accuracy;
    j["turn_count"] = turn_count;
    json conf = json::array();
    for (int g = 0; g < kNumGateClasses; ++g) {
      json row = json::array();
      for (int p = 0; p < kNumGateClasses; ++p)
        row.push_back(gates.confusion[static_cast<std::size_t>(g)][static_cast<std::size_t>(p)]);
      conf.push_back(row);
    }
    j["gate_confusion"] = conf;
    return j;
  }
};

struct EvalOutput {
  EvalReport report;
  std::vector<std::vector<StateMap>> pred_states;
  std::vector<std::vector<StateMap>> gold_states;
};

inline EvalOutput evaluate_corpus(DstModel& model, const ConceptDB& db, const Corpus& corpus,
                                  const TrackerOptions& opt) {
  EvalOutput out;
  std::vector<GateClass> pred_gates, gold_gates;
  for (const Dialogue& d : corpus) {
    Dialogue gold = d.turns.front().has_gates ? d : derive_gate_labels(d, model.schema, true);
    auto tracked = track_dialogue(model, db, d, opt);
    std::vector<StateMap> pred_row, gold_row;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      pred_row.push_back(tracked[t].state.assignments);
      gold_row.push_back(d.turns[t].state);
      for (std::size_t i = 0; i < model.schema.slots.size(); ++i) {
        const std::string& name = model.schema.slots[i].name;
        auto git = gold.turns[t].gates.find(name);
        gold_gates.push_back(git == gold.turns[t].gates.end() ? GateClass::none : git->second);
        if (tracked[t].skipped || tracked[t].prediction.slots.size() != model.schema.slots.size()) {
          pred_gates.push_back(GateClass::none);
        } else {
          Eigen::Index arg;
          tracked[t].prediction.slots[i].gate.maxCoeff(&arg);
          pred_gates.push_back(static_cast<GateClass>(arg));
        }
      }
      ++out.report.turn_count;
    }
    out.pred_states.push_back(std::move(pred_row));
    out.gold_states.push_back(std::move(gold_row));
  }
  out.report.jga = joint_goal_accuracy(out.pred_states, out.gold_states);
  out.report.gates = slot_gate_accuracy(pred_gates, gold_gates);
  out.report.slot_gate_accuracy = out.report.gates.accuracy;

  for (const std::string& domain : model.schema.domains) {
    std::vector<std::vector<StateMap>> pd, gd;
    for (std::size_t d = 0; d < out.pred_states.size(); ++d) {
      std::vector<StateMap> pr, gr;
      for (std::size_t t = 0; t < out.pred_states[d].size(); ++t) {
        pr.push_back(restrict_to_domain(out.pred_states[d][t], model.schema, domain));
        gr.push_back(restrict_to_domain(out.gold_states[d][t], model.schema, domain));
      }
      pd.push_back(std::move(pr));
      gd.push_back(std::move(gr));
    }
    out.report.per_domain_jga[domain] = joint_goal_accuracy(pd, gd);
  }

  // Per-slot value accuracy over all turns.
  for (const SlotSpec& s : model.schema.slots) {
    long ok = 0, n = 0;
    for (std::size_t d = 0; d < out.pred_states.size(); ++d)
      for (std::size_t t = 0; t < out.pred_states[d].size(); ++t) {
        ++n;
        auto pv = out.pred_states[d][t].find(s.name);
        auto gv = out.gold_states[d][t].find(s.name);
        bool p_has = pv != out.pred_states[d][t].end();
        bool g_has = gv != out.gold_states[d][t].end();
        if (p_has == g_has && (!p_has || normalize_value(pv->second) == normalize_value(gv->second)))
          ++ok;
      }
    out.report.per_slot_accuracy[s.name] = static_cast<double>(ok) / static_cast<double>(n);
  }
  return out;
}

inline double dev_joint_goal_accuracy(DstModel& model, const Corpus& dev,
                                      const TrackerOptions& opt) {
  ConceptDB db = build_db(model);
  std::vector<std::vector<StateMap>> pred, gold;
  for (const Dialogue& d : dev) {
    auto tracked = track_dialogue(model, db, d, opt);
    std::vector<StateMap> pr, gr;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      pr.push_back(tracked[t].state.assignments);
      gr.push_back(d.turns[t].state);
    }
    pred.push_back(std::move(pr));
    gold.push_back(std::move(gr));
  }
  return joint_goal_accuracy(pred, gold);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct SweepPoint {
  double x = 0.0;
  double y = 0.0;
};

struct TauSweepResult {
  double best_tau = 1.0;
  std::vector<SweepPoint> curve;
};

// Dev JGA per tau on the grid; the best tau is the argmax, ties resolved
// toward the larger tau (less matching).
inline TauSweepResult sweep_tau(DstModel& model, const ConceptDB& db, const Corpus& dev,
                                const std::vector<double>& grid) {
  if (dev.empty()) fail("config", "empty dev set");
  TauSweepResult out;
  double best = -1.0;
  for (double tau : grid) {
    if (tau < 0.0 || tau > 1.0) fail("config", "tau grid must lie in [0,1]");
    TrackerOptions opt;
    opt.tau = tau;
    EvalOutput eo = evaluate_corpus(model, db, dev, opt);
    out.curve.push_back({tau, eo.report.jga});
    if (eo.report.jga >= best) {  // >= keeps the larger tau on ties (grid ascends)
      best = eo.report.jga;
      out.best_tau = tau;
    }
  }
  return out;
}

struct NuSweepResult {
  double best_nu = 0.3;
  std::vector<SweepPoint> curve;
};

// Tagging joint accuracy per closing threshold on positive (turn, value)
// pairs; gold tags are the value-based union of span labels per turn.
inline NuSweepResult sweep_nu(ProtoModel& model, const Corpus& corpus, const ProtoConfig& cfg,
                              const std::vector<double>& grid) {
  struct Item {
    const Turn* turn;
    std::string value;
    std::vector<std::uint8_t> gold;
  };
  std::vector<Item> items;
  for (const Dialogue& d : corpus) {
    auto mentions = value_mentions(d);
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      int len = static_cast<int>(tokenize_words(d.turns[t].user).size());
      for (const auto& [value, spans] : mentions[t]) {
        Item item;
        item.turn = &d.turns[t];
        item.value = value;
        item.gold.assign(static_cast<std::size_t>(len), 0);
        bool in_range = true;
        for (auto [s, e] : spans) {
          if (s < 0 || e > len) in_range = false;
          for (int p = s; p < e && p < len; ++p) item.gold[static_cast<std::size_t>(p)] = 1;
        }
        if (in_range) items.push_back(std::move(item));
      }
    }
  }
  if (items.empty()) fail("eval", "no positive tagging pairs in corpus");

  NuSweepResult out;
  double best = -1.0;
  for (double nu : grid) {
    ProtoConfig c = cfg;
    c.nu = nu;
    std::vector<std::vector<std::uint8_t>> pred, gold;
    for (const Item& item : items) {
      TagValueResult r = tag_value(model, *item.turn, item.value, c);
      std::vector<std::uint8_t> tags = r.tags;
      tags.resize(item.gold.size(), 0);
      pred.push_back(std::move(tags));
      gold.push_back(item.gold);
    }
    double acc = tagging_joint_accuracy(pred, gold).accuracy;
    out.curve.push_back({nu, acc});
    if (acc > best) {
      best = acc;
      out.best_nu = nu;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Curve emission: CSV plus a static SVG line chart.
// ---------------------------------------------------------------------------

inline void write_curve_csv(const std::vector<SweepPoint>& curve, const std::string& x_name,
                            const std::string& y_name, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write curve: " + path);
  out << x_name << "," << y_name << "\n";
  out.precision(10);
  for (const auto& p : curve) out << p.x << "," << p.y << "\n";
}

inline void write_curve_svg(const std::vector<SweepPoint>& curve, const std::string& title,
                            const std::string& x_name, const std::string& y_name,
                            const std::string& path) {
  const int W = 640, H = 420, ML = 70, MR = 20, MT = 40, MB = 50;
  double xmin = curve.front().x, xmax = curve.front().x, ymin = 0.0, ymax = 1.0;
  for (const auto& p : curve) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  auto X = [&](double x) { return ML + (x - xmin) / (xmax - xmin) * (W - ML - MR); };
  auto Y = [&](double y) { return H - MB - (y - ymin) / (ymax - ymin) * (H - MT - MB); };
  std::ofstream out(path);
  if (!out) fail("io", "cannot write svg: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  out << "<line x1='" << ML << "' y1='" << H - MB << "' x2='" << W - MR << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  out << "<line x1='" << ML << "' y1='" << MT << "' x2='" << ML << "' y2='" << H - MB
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    double y = ymin + (ymax - ymin) * i / 5.0;
    out << "<text x='" << ML - 8 << "' y='" << Y(y) + 4
        << "' text-anchor='end' font-size='11'>" << y << "</text>\n";
    out << "<line x1='" << ML - 4 << "' y1='" << Y(y) << "' x2='" << ML << "' y2='" << Y(y)
        << "' stroke='black'/>\n";
  }
  for (const auto& p : curve) {
    out << "<text x='" << X(p.x) << "' y='" << H - MB + 18
        << "' text-anchor='middle' font-size='11'>" << p.x << "</text>\n";
    out << "<line x1='" << X(p.x) << "' y1='" << H - MB << "' x2='" << X(p.x) << "' y2='"
        << H - MB + 4 << "' stroke='black'/>\n";
  }
  out << "<text x='" << (ML + W - MR) / 2 << "' y='" << H - 12
      << "' text-anchor='middle' font-size='13'>" << x_name << "</text>\n";
  out << "<text x='18' y='" << (MT + H - MB) / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 " << (MT + H - MB) / 2
      << ")'>" << y_name << "</text>\n";
  out << "<polyline fill='none' stroke='steelblue' stroke-width='2' points='";
  for (const auto& p : curve) out << X(p.x) << "," << Y(p.y) << " ";
  out << "'/>\n";
  for (const auto& p : curve)
    out << "<circle cx='" << X(p.x) << "' cy='" << Y(p.y) << "' r='3' fill='steelblue'/>\n";
  out << "</svg>\n";
}

}  // namespace dst

#endif  // DST_EVAL_HPP
