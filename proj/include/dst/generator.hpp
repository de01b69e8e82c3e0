// dst/generator.hpp
//
// Deterministic synthetic corpus generation. Dialogues are realized from
// token-level templates so that span labels are exact by construction; the
// emitted gate labels double as a held-out oracle for spanless training.

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

#ifndef DST_GENERATOR_HPP
#define DST_GENERATOR_HPP

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dst/corpus.hpp"
#include "dst/core.hpp"

namespace dst {

struct SlotTemplates {
  std::vector<std::string> user;           // span mentions, "{v}" placeholder
  std::vector<std::string> user_question;  // question-form mentions
  std::vector<std::string> dontcare;
  std::vector<std::string> system_inform;  // offers; the user accepts in the same turn
  std::vector<std::string> system_echo;    // statements usable as review-style sources
  std::vector<std::string> set_true;       // boolean slots only
  std::vector<std::string> set_false;
};

struct GenSlot {
  SlotSpec spec;
  SlotTemplates templates;
};

struct GenDomain {
  std::string name;
  std::vector<GenSlot> slots;
};

struct ReferTemplate {
  std::string target;  // slot that gets the copied value
  std::string source;  // slot the value is copied from
  std::vector<std::string> templates;
};

struct GeneratorConfig {
  int dialogues = 200;
  int min_turns = 2;
  int max_turns = 6;
  double p_multi_domain = 0.80;
  double p_second_opener_slot = 0.75;
  double p_dontcare = 0.50;
  double p_boolean = 0.95;
  double p_inform = 0.55;
  double p_name_mention = 0.30;
  double p_refer = 1.0;
  double p_history_mention = 0.35;
  double p_question_form = 0.18;
  double p_variant = 0.22;
  double p_echo = 0.40;
  double p_filler_turn = 0.15;
  // Documented emission targets; checked by the corpus tests.
  double min_class_frequency = 0.02;

  std::vector<GenDomain> domains;
  std::vector<ReferTemplate> refer_templates;
  std::map<std::string, std::vector<std::string>> variants;  // canonical -> surfaces
  std::vector<std::string> acceptance_templates;
  std::vector<std::string> ack_templates;
  std::vector<std::string> filler_templates;
  // History re-mention pairs: (slot of the later domain, peer slot of the
  // earlier domain whose value is repeated verbatim).
  std::vector<std::pair<std::string, std::string>> history_mention_pairs;
  std::map<std::string, std::vector<std::string>> history_mention_templates;  // slot -> templates
};

// ---------------------------------------------------------------------------
// Default configuration: two domains, nine slots, value inventories with
// surface variants for price slots and for one hotel name.
// ---------------------------------------------------------------------------

inline GeneratorConfig default_generator_config() {
  GeneratorConfig c;

  auto cat = [](std::string name, std::string desc, std::vector<std::string> values,
                SlotTemplates t) {
    GenSlot s;
    s.spec.name = std::move(name);
    s.spec.description = std::move(desc);
    s.spec.is_categorical = true;
    s.spec.candidate_values = std::move(values);
    s.templates = std::move(t);
    return s;
  };
  auto open = [](std::string name, std::string desc, std::vector<std::string> values,
                 SlotTemplates t) {
    GenSlot s;
    s.spec.name = std::move(name);
    s.spec.description = std::move(desc);
    s.spec.is_categorical = false;
    s.spec.candidate_values = std::move(values);
    s.templates = std::move(t);
    return s;
  };
  auto boolean = [](std::string name, std::string desc, SlotTemplates t) {
    GenSlot s;
    s.spec.name = std::move(name);
    s.spec.description = std::move(desc);
    s.spec.is_boolean = true;
    s.spec.candidate_values = {"true", "false"};
    s.templates = std::move(t);
    return s;
  };

  GenDomain hotel;
  hotel.name = "hotel";
  hotel.slots.push_back(cat(
      "hotel-area", "area or part of town of the hotel",
      {"north", "south", "centre", "east", "west"},
      {.user = {"i want a hotel in the {v}", "the hotel should be in the {v}",
                "find me a place to stay in the {v} part of town"},
       .user_question = {"do you have a hotel in the {v} ?"},
       .dontcare = {"any area is fine for the hotel", "i dont mind where the hotel is"},
       .system_inform = {},
       .system_echo = {"the hotel is in the {v} ."}}));
  hotel.slots.push_back(cat(
      "hotel-price", "price range of the hotel",
      {"cheap", "moderate", "expensive"},
      {.user = {"i want a {v} hotel", "something {v} to stay at would be great",
                "the hotel should be {v}"},
       .user_question = {"is there a {v} hotel available ?"},
       .dontcare = {"the hotel price does not matter", "any price range works for the hotel"},
       .system_inform = {},
       .system_echo = {"it is a {v} hotel ."}}));
  hotel.slots.push_back(open(
      "hotel-name", "name of the hotel",
      {"palace hotel", "city lodge", "river inn", "sunset arms", "grand palace hotel",
       "old mill house"},
      {.user = {"i would like to stay at {v}", "book me into {v}"},
       .user_question = {"can you get me a room at {v} ?"},
       .dontcare = {},
       .system_inform = {"how about the {v} ?", "i recommend the {v} . shall i book it ?",
                         "the {v} would suit you . want me to book it ?"},
       .system_echo = {"the {v} has rooms left ."}}));
  hotel.slots.push_back(boolean(
      "hotel-parking", "whether the hotel offers parking",
      {.user = {},
       .user_question = {},
       .dontcare = {},
       .system_inform = {},
       .system_echo = {},
       .set_true = {"i need free parking at the hotel", "the hotel must have parking"},
       .set_false = {"no parking needed at the hotel", "i do not need parking"}}));

  GenDomain restaurant;
  restaurant.name = "restaurant";
  restaurant.slots.push_back(cat(
      "restaurant-area", "area or part of town of the restaurant",
      {"north", "south", "centre", "east", "west"},
      {.user = {"i want a restaurant in the {v}", "the restaurant should be in the {v}",
                "we would like to eat in the {v}"},
       .user_question = {"is there a restaurant in the {v} ?"},
       .dontcare = {"anywhere in town works for the restaurant", "i dont mind the restaurant area"},
       .system_inform = {},
       .system_echo = {"the restaurant is in the {v} ."}}));
  restaurant.slots.push_back(cat(
      "restaurant-price", "price range of the restaurant",
      {"cheap", "moderate", "expensive"},
      {.user = {"i want a {v} restaurant", "we fancy somewhere {v} to eat",
                "the restaurant should be {v}"},
       .user_question = {"do you know a {v} restaurant ?"},
       .dontcare = {"the restaurant price does not matter"},
       .system_inform = {},
       .system_echo = {"it is a {v} restaurant ."}}));
  restaurant.slots.push_back(cat(
      "restaurant-food", "type of cuisine the restaurant serves",
      {"italian", "chinese", "indian", "british", "thai"},
      {.user = {"i want {v} food", "find me a {v} restaurant", "we are craving {v} tonight"},
       .user_question = {"do you have a good {v} restaurant ?"},
       .dontcare = {"any cuisine is fine"},
       .system_inform = {},
       .system_echo = {"the restaurant serves {v} food ."}}));
  restaurant.slots.push_back(open(
      "restaurant-name", "name of the restaurant",
      {"graffiti", "golden wok", "river bar", "spice garden", "little blue lagoon",
       "old spice kitchen"},
      {.user = {"how about a table at {v}", "book {v} please"},
       .user_question = {"could we get a table at {v} ?"},
       .dontcare = {},
       .system_inform = {"how about the {v} ?", "i suggest the {v} . does that sound good ?"},
       .system_echo = {"the {v} has a table free ."}}));
  restaurant.slots.push_back(boolean(
      "restaurant-outdoor", "whether the restaurant has outdoor seating",
      {.user = {},
       .user_question = {},
       .dontcare = {},
       .system_inform = {},
       .system_echo = {},
       .set_true = {"we want to sit outside at the restaurant", "outdoor seating please"},
       .set_false = {"inside seating is fine", "no outdoor seating for us"}}));

  c.domains = {hotel, restaurant};

  c.variants = {
      {"expensive", {"upscale", "fancy"}},
      {"cheap", {"budget"}},
      {"palace hotel", {"palace", "the palace"}},
  };

  c.refer_templates = {
      {"restaurant-area", "hotel-area",
       {"the restaurant should be in the same area as the hotel",
        "same area as the hotel please"}},
      {"restaurant-price", "hotel-price",
       {"the restaurant should be in the same price range as the hotel"}},
      {"hotel-area", "restaurant-area",
       {"the hotel should be in the same area as the restaurant"}},
      {"hotel-price", "restaurant-price",
       {"the hotel should be in the same price range as the restaurant"}},
  };

  c.history_mention_pairs = {
      {"restaurant-area", "hotel-area"},
      {"hotel-area", "restaurant-area"},
  };
  c.history_mention_templates = {
      {"restaurant-area", {"the restaurant should be in the {v} too", "also in the {v} please"}},
      {"hotel-area", {"the hotel should be in the {v} too", "also in the {v} please"}},
  };

  c.acceptance_templates = {"yes , that works", "yes please", "yes , sounds good",
                            "perfect , yes"};
  c.ack_templates = {"okay .", "sure .", "alright .", "noted ."};
  c.filler_templates = {"thank you", "that is all for now", "great , thanks"};
  return c;
}

// ---------------------------------------------------------------------------
// Config validation and (de)serialization
// ---------------------------------------------------------------------------

inline void validate_generator_config(const GeneratorConfig& c) {
  if (c.domains.size() < 2) fail("config", "generator needs at least 2 domains");
  bool noncat_variant_ok = false;
  for (const auto& d : c.domains) {
    if (d.slots.size() < 3)
      fail("config", "domain " + d.name + " needs at least 3 slots");
    for (const auto& s : d.slots) {
      if (s.spec.is_boolean && (s.templates.set_true.empty() || s.templates.set_false.empty()))
        fail("config", "boolean slot " + s.spec.name + " lacks true/false templates");
      if (!s.spec.is_categorical && !s.spec.is_boolean) {
        int with_variants = 0;
        for (const auto& v : s.spec.candidate_values) {
          auto it = c.variants.find(v);
          if (it != c.variants.end() && it->second.size() >= 2) ++with_variants;
        }
        if (with_variants > 0) noncat_variant_ok = true;
      }
    }
  }
  if (!noncat_variant_ok)
    fail("config",
         "at least one non-categorical slot needs a value with >= 2 surface variants");
  if (c.dialogues < 1 || c.max_turns < c.min_turns || c.min_turns < 1)
    fail("config", "bad dialogue/turn counts");
}

inline json generator_config_to_json(const GeneratorConfig& c) {
  json j;
  j["dialogues"] = c.dialogues;
  j["min_turns"] = c.min_turns;
  j["max_turns"] = c.max_turns;
  j["p_multi_domain"] = c.p_multi_domain;
  j["p_second_opener_slot"] = c.p_second_opener_slot;
  j["p_dontcare"] = c.p_dontcare;
  j["p_boolean"] = c.p_boolean;
  j["p_inform"] = c.p_inform;
  j["p_name_mention"] = c.p_name_mention;
  j["p_refer"] = c.p_refer;
  j["p_history_mention"] = c.p_history_mention;
  j["p_question_form"] = c.p_question_form;
  j["p_variant"] = c.p_variant;
  j["p_echo"] = c.p_echo;
  j["p_filler_turn"] = c.p_filler_turn;
  j["min_class_frequency"] = c.min_class_frequency;
  j["variants"] = c.variants;
  j["acceptance_templates"] = c.acceptance_templates;
  j["ack_templates"] = c.ack_templates;
  j["filler_templates"] = c.filler_templates;
  j["domains"] = json::array();
  for (const auto& d : c.domains) {
    json dj;
    dj["name"] = d.name;
    dj["slots"] = json::array();
    for (const auto& s : d.slots) {
      json sj;
      sj["name"] = s.spec.name;
      sj["description"] = s.spec.description;
      sj["categorical"] = s.spec.is_categorical;
      sj["boolean"] = s.spec.is_boolean;
      sj["values"] = s.spec.candidate_values;
      sj["templates"] = {{"user", s.templates.user},
                         {"user_question", s.templates.user_question},
                         {"dontcare", s.templates.dontcare},
                         {"system_inform", s.templates.system_inform},
                         {"system_echo", s.templates.system_echo},
                         {"set_true", s.templates.set_true},
                         {"set_false", s.templates.set_false}};
      dj["slots"].push_back(sj);
    }
    j["domains"].push_back(dj);
  }
  j["refer_templates"] = json::array();
  for (const auto& r : c.refer_templates)
    j["refer_templates"].push_back({{"target", r.target}, {"source", r.source}, {"templates", r.templates}});
  j["history_mention_pairs"] = json::array();
  for (const auto& [a, b] : c.history_mention_pairs)
    j["history_mention_pairs"].push_back({a, b});
  j["history_mention_templates"] = c.history_mention_templates;
  return j;
}

inline GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig c = default_generator_config();
  if (j.contains("domains")) {
    c.domains.clear();
    for (const auto& dj : j["domains"]) {
      GenDomain d;
      d.name = dj.at("name").get<std::string>();
      for (const auto& sj : dj.at("slots")) {
        GenSlot s;
        s.spec.name = sj.at("name").get<std::string>();
        s.spec.description = sj.value("description", std::string());
        s.spec.is_categorical = sj.value("categorical", false);
        s.spec.is_boolean = sj.value("boolean", false);
        if (sj.contains("values"))
          for (const auto& v : sj["values"]) s.spec.candidate_values.push_back(v.get<std::string>());
        if (sj.contains("templates")) {
          const auto& t = sj["templates"];
          auto get = [&](const char* key) {
            std::vector<std::string> out;
            if (t.contains(key))
              for (const auto& e : t[key]) out.push_back(e.get<std::string>());
            return out;
          };
          s.templates = {get("user"),        get("user_question"), get("dontcare"),
                         get("system_inform"), get("system_echo"),   get("set_true"),
                         get("set_false")};
        }
        d.slots.push_back(s);
      }
      c.domains.push_back(d);
    }
  }
  if (j.contains("variants")) c.variants = j["variants"].get<std::map<std::string, std::vector<std::string>>>();
  if (j.contains("refer_templates")) {
    c.refer_templates.clear();
    for (const auto& rj : j["refer_templates"])
      c.refer_templates.push_back({rj.at("target").get<std::string>(), rj.at("source").get<std::string>(),
                                   rj.at("templates").get<std::vector<std::string>>()});
  }
  if (j.contains("history_mention_pairs")) {
    c.history_mention_pairs.clear();
    for (const auto& pj : j["history_mention_pairs"])
      c.history_mention_pairs.push_back({pj.at(0).get<std::string>(), pj.at(1).get<std::string>()});
  }
  if (j.contains("history_mention_templates"))
    c.history_mention_templates =
        j["history_mention_templates"].get<std::map<std::string, std::vector<std::string>>>();
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  opt("dialogues", c.dialogues);
  opt("min_turns", c.min_turns);
  opt("max_turns", c.max_turns);
  opt("p_multi_domain", c.p_multi_domain);
  opt("p_second_opener_slot", c.p_second_opener_slot);
  opt("p_dontcare", c.p_dontcare);
  opt("p_boolean", c.p_boolean);
  opt("p_inform", c.p_inform);
  opt("p_name_mention", c.p_name_mention);
  opt("p_refer", c.p_refer);
  opt("p_history_mention", c.p_history_mention);
  opt("p_question_form", c.p_question_form);
  opt("p_variant", c.p_variant);
  opt("p_echo", c.p_echo);
  opt("p_filler_turn", c.p_filler_turn);
  opt("min_class_frequency", c.min_class_frequency);
  opt("acceptance_templates", c.acceptance_templates);
  opt("ack_templates", c.ack_templates);
  opt("filler_templates", c.filler_templates);
  return c;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

namespace detail {

enum class EventKind { mention, dontcare, boolean_set, inform, refer, history_mention };

struct Event {
  EventKind kind = EventKind::mention;
  std::string slot;
  std::string value;        // canonical value ("true"/"false" for booleans)
  std::string surface;      // surface form used in text (mentions only)
  std::string source_slot;  // refer events
  std::string tpl;          // chosen template
};

struct RealizedSentence {
  std::vector<std::string> tokens;
  int span_start = -1;  // token offset of the surface, -1 when no placeholder
  int span_len = 0;
};

inline RealizedSentence realize(const std::string& tpl, const std::string& surface) {
  RealizedSentence out;
  for (const std::string& w : tokenize_words(tpl)) {
    if (w == "v" && !out.tokens.empty() && out.tokens.back() == "{") {
      // "{v}" splits into "{", "v", "}"; drop the braces and splice the value.
      out.tokens.pop_back();
      out.span_start = static_cast<int>(out.tokens.size());
      for (const std::string& vt : tokenize_words(surface)) out.tokens.push_back(vt);
      out.span_len = static_cast<int>(out.tokens.size()) - out.span_start;
    } else if (w == "}" && out.span_start >= 0 &&
               static_cast<int>(out.tokens.size()) == out.span_start + out.span_len) {
      // closing brace of the placeholder
    } else {
      out.tokens.push_back(w);
    }
  }
  return out;
}

}  // namespace detail

inline std::pair<Schema, Corpus> gen_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
  validate_generator_config(config);

  Schema schema;
  std::map<std::string, const GenSlot*> slot_by_name;
  for (const auto& d : config.domains) {
    schema.domains.push_back(d.name);
    for (const auto& s : d.slots) {
      schema.slots.push_back(s.spec);
      slot_by_name[s.spec.name] = &s;
    }
  }
  schema.validate();

  Rng rng(seed);
  Corpus corpus;

  for (int di = 0; di < config.dialogues; ++di) {
    using detail::Event;
    using detail::EventKind;

    // Pick the domain order.
    std::vector<int> domain_ids;
    int first = static_cast<int>(rng.uniform_int(0, static_cast<int>(config.domains.size()) - 1));
    domain_ids.push_back(first);
    if (rng.bernoulli(config.p_multi_domain)) {
      int second = static_cast<int>(rng.uniform_int(0, static_cast<int>(config.domains.size()) - 2));
      if (second >= first) ++second;
      domain_ids.push_back(second);
    }

    std::map<std::string, std::string> planned;  // slot -> canonical value
    std::vector<Event> events;

    auto pick_value = [&](const GenSlot& s) { return rng.pick(s.spec.candidate_values); };
    auto surface_for = [&](const std::string& canonical) {
      auto it = config.variants.find(canonical);
      if (it != config.variants.end() && rng.bernoulli(config.p_variant)) return rng.pick(it->second);
      return canonical;
    };

    for (std::size_t oi = 0; oi < domain_ids.size(); ++oi) {
      const GenDomain& dom = config.domains[static_cast<std::size_t>(domain_ids[oi])];
      std::vector<const GenSlot*> mention_slots, dontcare_slots, bool_slots, inform_slots;
      for (const auto& s : dom.slots) {
        if (!s.templates.user.empty()) mention_slots.push_back(&s);
        if (!s.templates.dontcare.empty()) dontcare_slots.push_back(&s);
        if (s.spec.is_boolean) bool_slots.push_back(&s);
        if (!s.templates.system_inform.empty()) inform_slots.push_back(&s);
      }
      std::vector<Event> domain_events;

      // History re-mention and refer hooks into the earlier domain; they
      // claim their target slots before the openers run.
      if (oi > 0 && rng.bernoulli(config.p_history_mention)) {
        for (const auto& [target, source] : config.history_mention_pairs) {
          if (planned.count(target) || !planned.count(source)) continue;
          if (schema.slot(target).domain() != dom.name) continue;
          if (planned.at(source) == "dontcare") continue;
          if (!config.history_mention_templates.count(target)) continue;
          Event e;
          e.kind = EventKind::history_mention;
          e.slot = target;
          e.value = planned.at(source);
          e.surface = e.value;  // verbatim repeat so the history occurrence is exact
          e.tpl = rng.pick(config.history_mention_templates.at(target));
          planned[e.slot] = e.value;
          domain_events.push_back(e);
          break;
        }
      }
      if (oi > 0) {
        int refers = 0;
        for (const auto& r : config.refer_templates) {
          if (refers >= 2) break;
          if (planned.count(r.target) || !planned.count(r.source)) continue;
          if (schema.slot(r.target).domain() != dom.name) continue;
          if (planned.at(r.source) == "dontcare") continue;
          if (!rng.bernoulli(config.p_refer)) continue;
          Event e;
          e.kind = EventKind::refer;
          e.slot = r.target;
          e.source_slot = r.source;
          e.value = planned.at(r.source);
          e.tpl = rng.pick(r.templates);
          planned[e.slot] = e.value;
          domain_events.push_back(e);
          ++refers;
        }
      }

      // Dontcare ahead of the openers so its slot is still free.
      if (!dontcare_slots.empty() && rng.bernoulli(config.p_dontcare)) {
        std::vector<const GenSlot*> avail;
        for (const auto* s : dontcare_slots)
          if (!planned.count(s->spec.name)) avail.push_back(s);
        if (!avail.empty()) {
          const GenSlot* s = rng.pick(avail);
          Event e;
          e.kind = EventKind::dontcare;
          e.slot = s->spec.name;
          e.value = "dontcare";
          e.tpl = rng.pick(s->templates.dontcare);
          planned[e.slot] = e.value;
          domain_events.push_back(e);
        }
      }

      // Opener mentions (1-2 slots).
      {
        std::vector<const GenSlot*> avail;
        for (const auto* s : mention_slots)
          if (!planned.count(s->spec.name) && s->templates.system_inform.empty()) avail.push_back(s);
        rng.shuffle(avail);
        int n = avail.empty() ? 0 : (rng.bernoulli(config.p_second_opener_slot) ? 2 : 1);
        for (int k = 0; k < n && k < static_cast<int>(avail.size()); ++k) {
          Event e;
          e.kind = EventKind::mention;
          e.slot = avail[static_cast<std::size_t>(k)]->spec.name;
          e.value = pick_value(*avail[static_cast<std::size_t>(k)]);
          e.surface = surface_for(e.value);
          e.tpl = rng.pick(avail[static_cast<std::size_t>(k)]->templates.user);
          planned[e.slot] = e.value;
          domain_events.push_back(e);
        }
      }
      // Name slot: system offer (inform) or direct user mention.
      for (const auto* s : inform_slots) {
        if (planned.count(s->spec.name)) continue;
        if (rng.bernoulli(config.p_inform)) {
          Event e;
          e.kind = EventKind::inform;
          e.slot = s->spec.name;
          e.value = pick_value(*s);
          e.tpl = rng.pick(s->templates.system_inform);
          planned[e.slot] = e.value;
          domain_events.push_back(e);
        } else if (!s->templates.user.empty() && rng.bernoulli(config.p_name_mention)) {
          Event e;
          e.kind = EventKind::mention;
          e.slot = s->spec.name;
          e.value = pick_value(*s);
          e.surface = surface_for(e.value);
          e.tpl = rng.pick(s->templates.user);
          planned[e.slot] = e.value;
          domain_events.push_back(e);
        }
      }
      // Boolean.
      if (!bool_slots.empty() && rng.bernoulli(config.p_boolean)) {
        const GenSlot* s = rng.pick(bool_slots);
        if (!planned.count(s->spec.name)) {
          Event e;
          e.kind = EventKind::boolean_set;
          e.slot = s->spec.name;
          e.value = rng.bernoulli(0.5) ? "true" : "false";
          e.tpl = rng.pick(e.value == "true" ? s->templates.set_true : s->templates.set_false);
          planned[e.slot] = e.value;
          domain_events.push_back(e);
        }
      }

      // Keep the opener-ish order but shuffle the tail a little: the refer and
      // history events must stay behind at least one mention of the earlier
      // domain, which holds because domains are emitted sequentially.
      events.insert(events.end(), domain_events.begin(), domain_events.end());
    }

    // Pack events into turns (1-3 per turn, at most one inform per turn, no
    // duplicate value inside one turn).
    std::vector<std::vector<Event>> turns_plan;
    std::size_t ei = 0;
    while (ei < events.size() && static_cast<int>(turns_plan.size()) < config.max_turns) {
      std::vector<Event> batch{events[ei++]};
      double p_extra = 0.75;
      while (batch.size() < 3 && ei < events.size() && rng.bernoulli(p_extra)) {
        const Event& next = events[ei];
        bool informs = next.kind == EventKind::inform &&
                       std::any_of(batch.begin(), batch.end(), [](const Event& e) {
                         return e.kind == EventKind::inform;
                       });
        bool dup_value = std::any_of(batch.begin(), batch.end(), [&](const Event& e) {
          return !next.value.empty() && next.value == e.value;
        });
        if (informs || dup_value) break;
        batch.push_back(events[ei++]);
        p_extra = 0.5;
      }
      turns_plan.push_back(batch);
    }
    while (static_cast<int>(turns_plan.size()) < config.min_turns) turns_plan.push_back({});
    if (static_cast<int>(turns_plan.size()) < config.max_turns &&
        rng.bernoulli(config.p_filler_turn))
      turns_plan.push_back({});

    // Realize turns.
    Dialogue dlg;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "d%05d", di);
      dlg.id = buf;
    }
    std::map<std::string, std::string> state;
    for (std::size_t t = 0; t < turns_plan.size(); ++t) {
      Turn turn;
      std::vector<std::string> sys_tokens, user_tokens;

      // System side: ack (+ echo) from turn 2 on, plus at most one offer.
      if (t > 0) {
        auto ack = tokenize_words(rng.pick(config.ack_templates));
        sys_tokens.insert(sys_tokens.end(), ack.begin(), ack.end());
        if (!state.empty() && rng.bernoulli(config.p_echo)) {
          std::vector<std::pair<std::string, std::string>> echoable;
          for (const auto& [slot, value] : state) {
            const GenSlot* gs = slot_by_name.at(slot);
            if (!gs->templates.system_echo.empty() && value != "dontcare" && value != "true" &&
                value != "false")
              echoable.push_back({slot, value});
          }
          if (!echoable.empty()) {
            auto [slot, value] = rng.pick(echoable);
            auto r = detail::realize(rng.pick(slot_by_name.at(slot)->templates.system_echo), value);
            sys_tokens.insert(sys_tokens.end(), r.tokens.begin(), r.tokens.end());
          }
        }
      }
      for (const Event& e : turns_plan[t]) {
        if (e.kind == detail::EventKind::inform) {
          auto r = detail::realize(e.tpl, e.value);
          sys_tokens.insert(sys_tokens.end(), r.tokens.begin(), r.tokens.end());
          turn.informed[e.slot] = e.value;
        }
      }

      // User side.
      bool lone = turns_plan[t].size() == 1;
      std::vector<std::string> sentences_done;
      for (const Event& e : turns_plan[t]) {
        std::vector<std::string> sentence;
        int span_start = -1, span_len = 0;
        switch (e.kind) {
          case detail::EventKind::mention:
          case detail::EventKind::history_mention: {
            const GenSlot* gs = slot_by_name.at(e.slot);
            std::string tpl = e.tpl;
            if (e.kind == detail::EventKind::mention && lone && !gs->templates.user_question.empty() &&
                rng.bernoulli(config.p_question_form))
              tpl = rng.pick(gs->templates.user_question);
            auto r = detail::realize(tpl, e.surface);
            sentence = r.tokens;
            span_start = r.span_start;
            span_len = r.span_len;
            break;
          }
          case detail::EventKind::dontcare:
          case detail::EventKind::boolean_set:
          case detail::EventKind::refer: {
            sentence = tokenize_words(e.tpl);
            break;
          }
          case detail::EventKind::inform: {
            sentence = tokenize_words(rng.pick(config.acceptance_templates));
            break;
          }
        }
        if (!user_tokens.empty()) user_tokens.push_back(".");
        int offset = static_cast<int>(user_tokens.size());
        user_tokens.insert(user_tokens.end(), sentence.begin(), sentence.end());

        // Record labels.
        state[e.slot] = e.value;
        switch (e.kind) {
          case detail::EventKind::mention:
          case detail::EventKind::history_mention:
            turn.gates[e.slot] = GateClass::span;
            turn.spans[e.slot].push_back(
                SpanRef{static_cast<int>(t) + 1, offset + span_start, offset + span_start + span_len});
            break;
          case detail::EventKind::dontcare:
            turn.gates[e.slot] = GateClass::dontcare;
            break;
          case detail::EventKind::boolean_set:
            turn.gates[e.slot] = e.value == "true" ? GateClass::true_ : GateClass::false_;
            break;
          case detail::EventKind::refer:
            turn.gates[e.slot] = GateClass::refer;
            turn.refer[e.slot] = e.source_slot;
            break;
          case detail::EventKind::inform:
            turn.gates[e.slot] = GateClass::inform;
            break;
        }
      }
      if (turns_plan[t].empty()) user_tokens = tokenize_words(rng.pick(config.filler_templates));

      turn.has_gates = true;
      for (const SlotSpec& s : schema.slots)
        if (!turn.gates.count(s.name)) turn.gates[s.name] = GateClass::none;
      turn.system = join_tokens(sys_tokens, 0, sys_tokens.size());
      turn.user = join_tokens(user_tokens, 0, user_tokens.size());
      turn.state = state;
      dlg.turns.push_back(turn);
    }
    validate_dialogue(dlg, schema);
    corpus.push_back(std::move(dlg));
  }
  return {schema, corpus};
}

// Per-class gate frequencies over all slot-turn pairs; used by the corpus
// tests and the generator's emission-target check.
inline std::map<GateClass, double> gate_class_frequencies(const Corpus& corpus,
                                                          const Schema& schema) {
  std::map<GateClass, double> counts;
  double total = 0;
  for (const Dialogue& d : corpus)
    for (const Turn& t : d.turns) {
      for (const SlotSpec& s : schema.slots) {
        auto it = t.gates.find(s.name);
        GateClass g = it == t.gates.end() ? GateClass::none : it->second;
        counts[g] += 1.0;
        total += 1.0;
      }
    }
  for (auto& [k, v] : counts) v /= total;
  return counts;
}

}  // namespace dst

#endif  // DST_GENERATOR_HPP
