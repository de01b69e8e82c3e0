// dst/corpus.hpp
//
// Data model for dialogues and schemas, JSONL corpus I/O, gate-label
// derivation from state annotations, domain splits, and conversion of
// dialogue data into non-dialogue (review / faq) formats.

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

#ifndef DST_CORPUS_HPP
#define DST_CORPUS_HPP

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dst/core.hpp"

namespace dst {

// Slot-update decision classes, in fixed posterior order.
enum class GateClass : int {
  none = 0,
  dontcare = 1,
  span = 2,
  inform = 3,
  refer = 4,
  true_ = 5,
  false_ = 6,
};

constexpr int kNumGateClasses = 7;

inline const char* gate_name(GateClass g) {
  switch (g) {
    case GateClass::none: return "none";
    case GateClass::dontcare: return "dontcare";
    case GateClass::span: return "span";
    case GateClass::inform: return "inform";
    case GateClass::refer: return "refer";
    case GateClass::true_: return "true";
    case GateClass::false_: return "false";
  }
  return "?";
}

inline GateClass gate_from_name(const std::string& s) {
  for (int i = 0; i < kNumGateClasses; ++i) {
    GateClass g = static_cast<GateClass>(i);
    if (s == gate_name(g)) return g;
  }
  fail("gate-class", "unknown gate class: " + s);
}

struct SlotSpec {
  std::string name;         // "domain-slot"
  std::string description;  // natural language
  bool is_categorical = false;
  bool is_boolean = false;
  std::vector<std::string> candidate_values;

  std::string domain() const {
    auto pos = name.find('-');
    return pos == std::string::npos ? name : name.substr(0, pos);
  }
};

struct Schema {
  std::vector<SlotSpec> slots;  // order defines slot index i
  std::vector<std::string> domains;

  int slot_index(const std::string& name) const {
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i].name == name) return static_cast<int>(i);
    return -1;
  }

  const SlotSpec& slot(const std::string& name) const {
    int i = slot_index(name);
    if (i < 0) fail("schema-mismatch", "unknown slot name: " + name);
    return slots[static_cast<std::size_t>(i)];
  }

  bool has_domain(const std::string& d) const {
    return std::find(domains.begin(), domains.end(), d) != domains.end();
  }

  void validate() const {
    std::set<std::string> seen;
    for (const auto& s : slots) {
      if (s.name.empty()) fail("schema", "slot with empty name");
      if (!seen.insert(s.name).second) fail("schema", "duplicate slot name: " + s.name);
      if (!has_domain(s.domain()))
        fail("schema", "slot domain not listed in schema domains: " + s.name);
      std::set<std::string> vals;
      for (const auto& v : s.candidate_values) {
        if (!vals.insert(v).second)
          fail("schema", "duplicate candidate value '" + v + "' for slot " + s.name);
        if (s.is_boolean && v != "true" && v != "false")
          fail("schema", "boolean slot " + s.name + " has non-boolean candidate: " + v);
      }
    }
  }
};

// One token span inside a user utterance: turn is the 1-based turn index of
// the utterance, [start, end) the token range after word tokenization.
struct SpanRef {
  int turn = 0;
  int start = 0;
  int end = 0;
  bool operator==(const SpanRef&) const = default;
};

struct Turn {
  std::string system;  // system utterance preceding the user turn (may be "")
  std::string user;
  std::map<std::string, std::string> state;     // cumulative slot -> value
  std::map<std::string, std::string> informed;  // values offered by the system this turn
  std::map<std::string, GateClass> gates;       // optional (empty when absent)
  std::map<std::string, std::vector<SpanRef>> spans;
  std::map<std::string, std::string> refer;  // slot -> source slot
  bool has_gates = false;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  std::string provenance = "gold";
};

using Corpus = std::vector<Dialogue>;
using StateMap = std::map<std::string, std::string>;

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline void validate_dialogue(const Dialogue& d, const Schema& schema) {
  if (d.turns.empty()) fail("corpus", "dialogue " + d.id + " has no turns");
  std::map<std::string, std::string> prev;
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    const Turn& turn = d.turns[t];
    auto check_slot = [&](const std::string& name, const char* where) {
      if (schema.slot_index(name) < 0)
        fail("schema-mismatch",
             "dialogue " + d.id + " turn " + std::to_string(t + 1) + ": unknown slot '" + name +
                 "' in " + where);
    };
    for (const auto& [k, v] : turn.state) check_slot(k, "state");
    for (const auto& [k, v] : turn.informed) check_slot(k, "informed");
    for (const auto& [k, v] : turn.gates) check_slot(k, "gate");
    for (const auto& [k, v] : turn.spans) check_slot(k, "spans");
    for (const auto& [k, v] : turn.refer) {
      check_slot(k, "refer");
      check_slot(v, "refer target");
    }
    // Monotone consistency: this turn's state is the previous one overlaid
    // with updates; keys never disappear.
    for (const auto& [k, v] : prev) {
      if (!turn.state.count(k))
        fail("corpus", "dialogue " + d.id + " turn " + std::to_string(t + 1) +
                           ": state drops slot '" + k + "' set in an earlier turn");
    }
    // Span ranges must lie inside the referenced (tokenized) user utterance.
    for (const auto& [slot, refs] : turn.spans) {
      for (const SpanRef& r : refs) {
        if (r.turn < 1 || r.turn > static_cast<int>(t) + 1)
          fail("corpus", "dialogue " + d.id + " turn " + std::to_string(t + 1) +
                             ": span references turn " + std::to_string(r.turn));
        auto toks = tokenize_words(d.turns[static_cast<std::size_t>(r.turn - 1)].user);
        if (r.start < 0 || r.end <= r.start || r.end > static_cast<int>(toks.size()))
          fail("corpus", "dialogue " + d.id + " turn " + std::to_string(t + 1) + ": span [" +
                             std::to_string(r.start) + "," + std::to_string(r.end) +
                             ") outside utterance of turn " + std::to_string(r.turn));
      }
    }
    prev = turn.state;
  }
}

// ---------------------------------------------------------------------------
// Corpus file format: one JSON record per line (JSONL).
//
//   {"id": "...", "provenance": "gold",
//    "turns": [{"system": "...", "user": "...",
//               "state": {...}, "informed": {...},
//               "gate": {...}, "spans": {"slot": [[turn,start,end],...]},
//               "refer": {...}}, ...]}
//
// Schema file: a single JSON record with "domains" and "slots".
// ---------------------------------------------------------------------------

inline json schema_to_json(const Schema& s) {
  json j;
  j["domains"] = s.domains;
  j["slots"] = json::array();
  for (const auto& sl : s.slots) {
    json e;
    e["name"] = sl.name;
    e["description"] = sl.description;
    e["categorical"] = sl.is_categorical;
    e["boolean"] = sl.is_boolean;
    e["values"] = sl.candidate_values;
    j["slots"].push_back(e);
  }
  return j;
}

inline Schema schema_from_json(const json& j) {
  Schema s;
  for (const auto& d : j.at("domains")) s.domains.push_back(d.get<std::string>());
  for (const auto& e : j.at("slots")) {
    SlotSpec sl;
    sl.name = e.at("name").get<std::string>();
    sl.description = e.value("description", std::string());
    sl.is_categorical = e.value("categorical", false);
    sl.is_boolean = e.value("boolean", false);
    if (e.contains("values"))
      for (const auto& v : e["values"]) sl.candidate_values.push_back(normalize_value(v.get<std::string>()));
    s.slots.push_back(sl);
  }
  s.validate();
  return s;
}

inline void save_schema(const Schema& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write schema file: " + path);
  out << schema_to_json(s).dump(2) << "\n";
}

inline Schema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open schema file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("parse", "schema file " + path + ": " + e.what());
  }
  return schema_from_json(j);
}

inline json dialogue_to_json(const Dialogue& d) {
  json j;
  j["id"] = d.id;
  if (d.provenance != "gold") j["provenance"] = d.provenance;
  j["turns"] = json::array();
  for (const Turn& t : d.turns) {
    json e;
    e["system"] = t.system;
    e["user"] = t.user;
    e["state"] = t.state;
    e["informed"] = t.informed;
    if (t.has_gates) {
      json g = json::object();
      for (const auto& [k, v] : t.gates) g[k] = gate_name(v);
      e["gate"] = g;
    }
    if (!t.spans.empty()) {
      json sp = json::object();
      for (const auto& [k, refs] : t.spans) {
        json arr = json::array();
        for (const SpanRef& r : refs) arr.push_back({r.turn, r.start, r.end});
        sp[k] = arr;
      }
      e["spans"] = sp;
    }
    if (!t.refer.empty()) e["refer"] = t.refer;
    j["turns"].push_back(e);
  }
  return j;
}

inline Dialogue dialogue_from_json(const json& j) {
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  d.provenance = j.value("provenance", std::string("gold"));
  for (const auto& e : j.at("turns")) {
    Turn t;
    t.system = e.value("system", std::string());
    t.user = e.value("user", std::string());
    if (e.contains("state"))
      for (auto it = e["state"].begin(); it != e["state"].end(); ++it)
        t.state[it.key()] = normalize_value(it.value().get<std::string>());
    if (e.contains("informed"))
      for (auto it = e["informed"].begin(); it != e["informed"].end(); ++it)
        t.informed[it.key()] = normalize_value(it.value().get<std::string>());
    if (e.contains("gate")) {
      t.has_gates = true;
      for (auto it = e["gate"].begin(); it != e["gate"].end(); ++it)
        t.gates[it.key()] = gate_from_name(it.value().get<std::string>());
    }
    if (e.contains("spans"))
      for (auto it = e["spans"].begin(); it != e["spans"].end(); ++it) {
        std::vector<SpanRef> refs;
        for (const auto& a : it.value())
          refs.push_back(SpanRef{a.at(0).get<int>(), a.at(1).get<int>(), a.at(2).get<int>()});
        t.spans[it.key()] = refs;
      }
    if (e.contains("refer"))
      for (auto it = e["refer"].begin(); it != e["refer"].end(); ++it)
        t.refer[it.key()] = it.value().get<std::string>();
    d.turns.push_back(std::move(t));
  }
  return d;
}

inline void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write corpus file: " + path);
  for (const Dialogue& d : corpus) out << dialogue_to_json(d).dump() << "\n";
}

inline Corpus load_corpus(const std::string& path, const Schema& schema) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open corpus file: " + path);
  Corpus corpus;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail("parse", "corpus file " + path + " line " + std::to_string(lineno) + ": " + e.what());
    }
    Dialogue d;
    try {
      d = dialogue_from_json(j);
    } catch (const json::exception& e) {
      std::string id = j.is_object() && j.contains("id") ? j["id"].get<std::string>() : "?";
      fail("parse", "corpus file " + path + " dialogue " + id + ": " + e.what());
    }
    validate_dialogue(d, schema);
    corpus.push_back(std::move(d));
  }
  return corpus;
}

// Per-turn value mention spans keyed by canonical value. Two slots sharing a
// value contribute the same (deduplicated) spans; used for tag targets,
// token-dropout masks and tagging oracles.
inline std::vector<std::map<std::string, std::vector<std::pair<int, int>>>> value_mentions(
    const Dialogue& d) {
  std::vector<std::map<std::string, std::vector<std::pair<int, int>>>> out(d.turns.size());
  for (std::size_t t = 0; t < d.turns.size(); ++t) {
    for (const auto& [slot, refs] : d.turns[t].spans) {
      auto vit = d.turns[t].state.find(slot);
      if (vit == d.turns[t].state.end()) continue;
      for (const SpanRef& r : refs) {
        if (r.turn < 1 || r.turn > static_cast<int>(out.size())) continue;
        auto& spans = out[static_cast<std::size_t>(r.turn - 1)][vit->second];
        std::pair<int, int> p{r.start, r.end};
        if (std::find(spans.begin(), spans.end(), p) == spans.end()) spans.push_back(p);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gate-label derivation.
//
// Given state / informed / refer annotations, fill in the update class per
// slot and turn. Precedence: unchanged -> none; "dontcare"; boolean
// true/false; informed value; refer annotation; otherwise span. A new value
// that fits no class and cannot be located in any user utterance is a
// labeling conflict (error in strict mode, `none` + counted in lenient mode,
// which auto-labeling uses).
// ---------------------------------------------------------------------------

struct DeriveStats {
  int conflicts = 0;
  std::map<std::string, int> conflicts_per_slot;
};

inline Dialogue derive_gate_labels(const Dialogue& dialogue, const Schema& schema,
                                   bool lenient = false, DeriveStats* stats = nullptr,
                                   bool allow_text_witness = true) {
  Dialogue out = dialogue;
  std::map<std::string, std::string> prev;
  for (std::size_t t = 0; t < out.turns.size(); ++t) {
    Turn& turn = out.turns[t];
    turn.gates.clear();
    turn.has_gates = true;
    for (const SlotSpec& slot : schema.slots) {
      auto it = turn.state.find(slot.name);
      std::string value = it == turn.state.end() ? std::string() : it->second;
      auto pit = prev.find(slot.name);
      std::string prev_value = pit == prev.end() ? std::string() : pit->second;
      GateClass g;
      if (value == prev_value) {
        g = GateClass::none;
      } else if (value == "dontcare") {
        g = GateClass::dontcare;
      } else if (slot.is_boolean && (value == "true" || value == "false")) {
        g = value == "true" ? GateClass::true_ : GateClass::false_;
      } else if (turn.informed.count(slot.name) && turn.informed.at(slot.name) == value) {
        g = GateClass::inform;
      } else if (turn.refer.count(slot.name)) {
        g = GateClass::refer;
      } else {
        g = GateClass::span;
        bool witnessed = turn.spans.count(slot.name) && !turn.spans.at(slot.name).empty();
        if (!witnessed && allow_text_witness) {
          auto needle = tokenize_words(value);
          for (std::size_t k = 0; k <= t && !witnessed; ++k) {
            auto hay = tokenize_words(out.turns[k].user);
            witnessed = !find_subsequence(hay, needle).empty();
          }
        }
        if (!witnessed) {
          if (!lenient)
            fail("labeling-conflict",
                 "dialogue " + out.id + " turn " + std::to_string(t + 1) + ": slot '" + slot.name +
                     "' gains value '" + value +
                     "' that is neither informed, referred, dontcare, nor findable in any user "
                     "utterance");
          g = GateClass::none;
          if (stats) {
            stats->conflicts++;
            stats->conflicts_per_slot[slot.name]++;
          }
        }
      }
      turn.gates[slot.name] = g;
    }
    prev = turn.state;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Leave-one-domain-out split. A dialogue "touches" a domain when any of its
// annotations name a slot of that domain; mixed-domain dialogues go entirely
// to the test side.
// ---------------------------------------------------------------------------

inline bool dialogue_touches_domain(const Dialogue& d, const std::string& domain) {
  auto slot_in_domain = [&](const std::string& name) {
    auto pos = name.find('-');
    return name.substr(0, pos == std::string::npos ? name.size() : pos) == domain;
  };
  for (const Turn& t : d.turns) {
    for (const auto& [k, v] : t.state)
      if (slot_in_domain(k)) return true;
    for (const auto& [k, v] : t.informed)
      if (slot_in_domain(k)) return true;
    for (const auto& [k, v] : t.refer)
      if (slot_in_domain(k) || slot_in_domain(v)) return true;
  }
  return false;
}

inline std::pair<Corpus, Corpus> leave_out_domain(const Corpus& corpus, const Schema& schema,
                                                  const std::string& domain) {
  if (!schema.has_domain(domain)) fail("schema-mismatch", "unknown domain: " + domain);
  Corpus train, test;
  for (const Dialogue& d : corpus) {
    if (dialogue_touches_domain(d, domain))
      test.push_back(d);
    else
      train.push_back(d);
  }
  return {train, test};
}

// ---------------------------------------------------------------------------
// Non-dialogue format conversion.
//
// review:   every non-question, non-empty system utterance becomes an
//           isolated single-turn example (empty user side); domain slot
//           values found in the text are kept as state and marked informed.
// faq:      a question-bearing user utterance paired with the next turn's
//           non-question system utterance, roles kept as in the source.
// faq_plus: review + faq + user questions as separate examples.
//
// All emitted examples carry no history; state labels are restricted to
// values present in the emitted text. Question detection: contains '?'.
// ---------------------------------------------------------------------------

enum class NonDialogueStyle { review, faq, faq_plus };

inline NonDialogueStyle nondialogue_style_from_name(const std::string& s) {
  if (s == "review") return NonDialogueStyle::review;
  if (s == "faq") return NonDialogueStyle::faq;
  if (s == "faq_plus") return NonDialogueStyle::faq_plus;
  fail("config", "unknown non-dialogue style: " + s);
}

inline bool is_question(const std::string& utterance) {
  return utterance.find('?') != std::string::npos;
}

namespace detail {

// Keep only `domain` slots whose value occurs verbatim in the emitted text;
// values on the system side are additionally marked informed.
inline std::optional<Turn> project_example(const std::map<std::string, std::string>& state,
                                           const Schema& schema, const std::string& domain,
                                           const std::string& user, const std::string& system) {
  Turn t;
  t.user = user;
  t.system = system;
  auto user_toks = tokenize_words(user);
  auto sys_toks = tokenize_words(system);
  for (const auto& [slot, value] : state) {
    if (schema.slot(slot).domain() != domain) continue;
    auto needle = tokenize_words(value);
    auto user_hits = find_subsequence(user_toks, needle);
    if (!user_hits.empty()) {
      t.state[slot] = value;
      for (int h : user_hits)
        t.spans[slot].push_back(SpanRef{1, h, h + static_cast<int>(needle.size())});
      continue;
    }
    if (!find_subsequence(sys_toks, needle).empty()) {
      t.state[slot] = value;
      t.informed[slot] = value;
    }
  }
  return t;
}

}  // namespace detail

inline Corpus to_nondialogue(const Corpus& corpus, const Schema& schema, const std::string& domain,
                             NonDialogueStyle style) {
  if (!schema.has_domain(domain)) fail("schema-mismatch", "unknown domain: " + domain);
  Corpus review, faq, questions;
  for (const Dialogue& d : corpus) {
    if (!dialogue_touches_domain(d, domain)) continue;
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      const Turn& turn = d.turns[t];
      // review: isolated non-question system statements.
      if (!turn.system.empty() && !is_question(turn.system)) {
        auto ex = detail::project_example(turn.state, schema, domain, "", turn.system);
        Dialogue e;
        e.id = d.id + ":rev:" + std::to_string(t + 1);
        e.turns.push_back(*ex);
        review.push_back(e);
      }
      // faq: user question + following non-question system utterance.
      if (is_question(turn.user) && t + 1 < d.turns.size()) {
        const std::string& reply = d.turns[t + 1].system;
        if (!reply.empty() && !is_question(reply)) {
          auto ex = detail::project_example(d.turns[t + 1].state, schema, domain, turn.user, reply);
          Dialogue e;
          e.id = d.id + ":faq:" + std::to_string(t + 1);
          e.turns.push_back(*ex);
          faq.push_back(e);
        }
      }
      // user questions alone (faq_plus extras).
      if (is_question(turn.user)) {
        auto ex = detail::project_example(turn.state, schema, domain, turn.user, "");
        Dialogue e;
        e.id = d.id + ":uq:" + std::to_string(t + 1);
        e.turns.push_back(*ex);
        questions.push_back(e);
      }
    }
  }
  Corpus out;
  auto append = [&out](const Corpus& part) { out.insert(out.end(), part.begin(), part.end()); };
  switch (style) {
    case NonDialogueStyle::review: append(review); break;
    case NonDialogueStyle::faq: append(faq); break;
    case NonDialogueStyle::faq_plus:
      append(review);
      append(faq);
      append(questions);
      break;
  }
  for (Dialogue& d : out) d = derive_gate_labels(d, schema, /*lenient=*/true);
  return out;
}

}  // namespace dst

#endif  // DST_CORPUS_HPP
