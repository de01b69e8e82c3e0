// dst/model.hpp
//
// Model containers (full tracker model and the reduced proto tagger), shared
// concept-encoding helpers, and the versioned checkpoint format.

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

#ifndef DST_MODEL_HPP
#define DST_MODEL_HPP

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dst/autodiff.hpp"
#include "dst/core.hpp"
#include "dst/corpus.hpp"
#include "dst/encoder.hpp"
#include "dst/heads.hpp"
#include "dst/tokenizer.hpp"

namespace dst {

struct DstModel {
  Schema schema;
  Tokenizer tokenizer;
  EncoderParams encoder;
  HeadParams heads;
  double best_dev_metric = 0.0;

  void init(const Schema& s, const Tokenizer& tok, const EncoderConfig& cfg, std::uint64_t seed) {
    schema = s;
    tokenizer = tok;
    Rng rng = Rng(seed).derive(0xe17c0de);
    encoder.init(cfg, tok.vocab_size(), rng);
    heads.init(cfg.d, cfg.heads, rng);
  }

  std::vector<Param*> all_params() {
    std::vector<Param*> out = encoder.all();
    for (Param* p : heads.all()) out.push_back(p);
    return out;
  }
};

// Proto tagger: the unified encoder plus the sequence-attention parameters.
struct ProtoModel {
  Schema schema;
  Tokenizer tokenizer;
  EncoderParams encoder;
  MhaParams mha_q;
  double best_dev_metric = 0.0;

  void init(const Schema& s, const Tokenizer& tok, const EncoderConfig& cfg, std::uint64_t seed) {
    schema = s;
    tokenizer = tok;
    Rng rng = Rng(seed).derive(0x9607a9);
    encoder.init(cfg, tok.vocab_size(), rng);
    mha_q.init("proto.mha_q", cfg.d, cfg.heads, rng);
  }

  std::vector<Param*> all_params() {
    std::vector<Param*> out = encoder.all();
    for (Param* p : mha_q.all()) out.push_back(p);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Concept encodings: slots pooled once, values encoded as token matrices and
// reduced to single vectors through the value-attention step.
// ---------------------------------------------------------------------------

struct ConceptEncodings {
  Matrix slot_reprs;                                   // |S| x d
  std::vector<std::vector<std::string>> values;        // per slot
  std::vector<std::vector<Matrix>> value_token_encs;   // per slot, per value
  std::vector<Matrix> value_reprs;                     // per slot: |V| x d
};

inline Matrix encode_slot_reprs(DstModel& model) {
  Matrix out(static_cast<Eigen::Index>(model.schema.slots.size()), model.encoder.config.d);
  for (std::size_t i = 0; i < model.schema.slots.size(); ++i) {
    Tape tape;
    EncoderVars ev = bind_encoder(tape, model.encoder, false);
    AssembledInput in = assemble_slot(model.schema.slots[i], model.tokenizer);
    EncoderOutput eo = encode(tape, ev, in.ids);
    out.row(static_cast<Eigen::Index>(i)) = tape.val(eo.pooled).row(0);
  }
  return out;
}

inline ConceptEncodings encode_concepts(DstModel& model, bool include_values = true) {
  ConceptEncodings out;
  out.slot_reprs = encode_slot_reprs(model);
  if (!include_values) return out;
  out.values.resize(model.schema.slots.size());
  out.value_token_encs.resize(model.schema.slots.size());
  out.value_reprs.resize(model.schema.slots.size());
  for (std::size_t i = 0; i < model.schema.slots.size(); ++i) {
    const SlotSpec& slot = model.schema.slots[i];
    out.values[i] = slot.candidate_values;
    Matrix reprs(static_cast<Eigen::Index>(slot.candidate_values.size()), model.encoder.config.d);
    for (std::size_t j = 0; j < slot.candidate_values.size(); ++j) {
      Tape tape;
      EncoderVars ev = bind_encoder(tape, model.encoder, false);
      HeadVars hv = bind_heads(tape, model.heads, false);
      AssembledInput in = assemble_value(slot, slot.candidate_values[j], model.tokenizer);
      EncoderOutput eo = encode(tape, ev, in.ids);
      out.value_token_encs[i].push_back(tape.val(eo.tokens));
      Var slot_repr = tape.constant(out.slot_reprs.row(static_cast<Eigen::Index>(i)));
      Var rv = value_representation(tape, hv, slot_repr, eo.tokens);
      reprs.row(static_cast<Eigen::Index>(j)) = tape.val(rv).row(0);
    }
    out.value_reprs[i] = std::move(reprs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint container: msgpack-encoded versioned record holding tokenizer,
// schema, configs, all parameters and the best-dev metric. The concept
// database is persisted alongside when present.
// ---------------------------------------------------------------------------

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

inline Matrix matrix_from_json(const json& j) {
  Matrix m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const json& rows = j.at("data");
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
  return m;
}

inline json params_to_json(const std::vector<Param*>& params) {
  json out = json::array();
  for (const Param* p : params) {
    json e = matrix_to_json(p->value);
    e["name"] = p->name;
    out.push_back(e);
  }
  return out;
}

inline void params_from_json(const json& j, const std::vector<Param*>& params) {
  std::map<std::string, const json*> by_name;
  for (const auto& e : j) by_name[e.at("name").get<std::string>()] = &e;
  for (Param* p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) fail("checkpoint", "missing parameter: " + p->name);
    Matrix m = matrix_from_json(*it->second);
    if (m.rows() != p->value.rows() || m.cols() != p->value.cols())
      fail("checkpoint", "shape mismatch for parameter: " + p->name);
    p->value = std::move(m);
  }
}

constexpr const char* kCheckpointFormat = "dstkit-checkpoint";
constexpr int kCheckpointVersion = 1;

inline void write_checkpoint_file(const json& j, const std::string& path) {
  std::vector<std::uint8_t> bytes = json::to_msgpack(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io", "cannot write checkpoint: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline json read_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  json j;
  try {
    j = json::from_msgpack(bytes);
  } catch (const json::exception& e) {
    fail("parse", "checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", std::string()) != kCheckpointFormat)
    fail("checkpoint", "not a checkpoint file: " + path);
  if (j.value("version", 0) != kCheckpointVersion)
    fail("checkpoint", "unsupported checkpoint version");
  return j;
}

inline void save_checkpoint(DstModel& model, const std::string& path,
                            const json& train_config = json::object(),
                            const json& db = json()) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["kind"] = "dst";
  j["schema"] = schema_to_json(model.schema);
  j["tokenizer"] = model.tokenizer.to_json();
  j["encoder_config"] = model.encoder.config.to_json();
  j["train_config"] = train_config;
  j["best_dev_metric"] = model.best_dev_metric;
  j["params"] = params_to_json(model.all_params());
  if (!db.is_null()) j["db"] = db;
  write_checkpoint_file(j, path);
}

inline DstModel load_dst_checkpoint(const std::string& path, json* train_config = nullptr,
                                    json* db = nullptr) {
  json j = read_checkpoint_file(path);
  if (j.value("kind", std::string()) != "dst") fail("checkpoint", "expected a dst checkpoint");
  DstModel model;
  model.schema = schema_from_json(j.at("schema"));
  model.tokenizer = Tokenizer::from_json(j.at("tokenizer"));
  EncoderConfig cfg = EncoderConfig::from_json(j.at("encoder_config"));
  Rng rng(0);
  model.encoder.init(cfg, model.tokenizer.vocab_size(), rng);
  model.heads.init(cfg.d, cfg.heads, rng);
  params_from_json(j.at("params"), model.all_params());
  model.best_dev_metric = j.value("best_dev_metric", 0.0);
  if (train_config) *train_config = j.value("train_config", json::object());
  if (db && j.contains("db")) *db = j["db"];
  return model;
}

inline void save_proto_checkpoint(ProtoModel& model, const std::string& path,
                                  const json& proto_config = json::object()) {
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["kind"] = "proto";
  j["schema"] = schema_to_json(model.schema);
  j["tokenizer"] = model.tokenizer.to_json();
  j["encoder_config"] = model.encoder.config.to_json();
  j["train_config"] = proto_config;
  j["best_dev_metric"] = model.best_dev_metric;
  j["params"] = params_to_json(model.all_params());
  write_checkpoint_file(j, path);
}

inline ProtoModel load_proto_checkpoint(const std::string& path, json* proto_config = nullptr) {
  json j = read_checkpoint_file(path);
  if (j.value("kind", std::string()) != "proto") fail("checkpoint", "expected a proto checkpoint");
  ProtoModel model;
  model.schema = schema_from_json(j.at("schema"));
  model.tokenizer = Tokenizer::from_json(j.at("tokenizer"));
  EncoderConfig cfg = EncoderConfig::from_json(j.at("encoder_config"));
  Rng rng(0);
  model.encoder.init(cfg, model.tokenizer.vocab_size(), rng);
  model.mha_q.init("proto.mha_q", cfg.d, cfg.heads, rng);
  params_from_json(j.at("params"), model.all_params());
  model.best_dev_metric = j.value("best_dev_metric", 0.0);
  if (proto_config) *proto_config = j.value("train_config", json::object());
  return model;
}

// Digest of a file's bytes, for determinism checks and run records.
inline std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open file for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return hex64(h);
}

}  // namespace dst

#endif  // DST_MODEL_HPP
