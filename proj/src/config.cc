// Copyright 2026 The karlm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "karlm/config.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace karlm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::set<std::string> &path_keys() {
  static const std::set<std::string> keys = {
      "vocab",      "corpus",     "output_dir", "init_from", "entities", "embeddings",
      "dictionary", "lemmas",     "supervision", "probes",   "el_gold",  "wsd"};
  return keys;
}

json schedule_json(const ScheduleConfig &s) {
  return {{"lr", s.lr},
          {"warmup", s.warmup},
          {"total_steps", s.total_steps},
          {"multipliers", s.multipliers},
          {"beta1", s.beta1},
          {"beta2", s.beta2},
          {"epsilon", s.epsilon},
          {"weight_decay", s.weight_decay},
          {"clip_norm", s.clip_norm},
          {"batch_size", s.batch_size},
          {"unlabeled_fraction", s.unlabeled_fraction},
          {"eval_every", s.eval_every},
          {"patience", s.patience},
          {"min_delta", s.min_delta},
          {"checkpoint_every", s.checkpoint_every},
          {"log_every", s.log_every},
          {"prefetch", s.prefetch}};
}

ScheduleConfig schedule_from(const json &j, uint64_t seed) {
  ScheduleConfig s;
  s.lr = j.at("lr").get<double>();
  s.warmup = j.at("warmup").get<double>();
  s.total_steps = j.at("total_steps").get<int>();
  s.multipliers = j.at("multipliers").get<std::map<std::string, double>>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  s.weight_decay = j.at("weight_decay").get<double>();
  s.clip_norm = j.at("clip_norm").get<double>();
  s.batch_size = j.at("batch_size").get<int>();
  s.unlabeled_fraction = j.at("unlabeled_fraction").get<double>();
  s.eval_every = j.at("eval_every").get<int>();
  s.patience = j.at("patience").get<int>();
  s.min_delta = j.at("min_delta").get<double>();
  s.checkpoint_every = j.at("checkpoint_every").get<int>();
  s.log_every = j.at("log_every").get<int>();
  s.prefetch = j.at("prefetch").get<int>();
  s.seed = seed;
  return s;
}

json kb_default_json() {
  KarConfig k;
  SelectorConfig sel;
  return {{"name", ""},
          {"layer", 3},
          {"entities", ""},
          {"embeddings", ""},
          {"dictionary", ""},
          {"lemmas", ""},
          {"supervision", ""},
          {"validation_fraction", 0.1},
          {"kar",
           {{"entity_dim", k.entity_dim},
            {"heads", k.heads},
            {"ffn_dim", k.ffn_dim},
            {"scorer_hidden", k.scorer_hidden},
            {"threshold", k.threshold},
            {"margin", k.margin},
            {"loss", link_loss_name(k.loss)},
            {"mask_prior", k.mask_prior}}},
          {"selector",
           {{"max_mention_length", sel.max_mention_length},
            {"max_candidates", sel.max_candidates},
            {"add_null", sel.add_null},
            {"null_prior_floor", sel.null_prior_floor}}}};
}

void check_keys(const json &value, const json &defaults, const std::string &where) {
  if (!defaults.is_object() || !value.is_object()) return;
  for (const auto &[key, v] : value.items()) {
    if (!defaults.contains(key)) {
      throw ConfigError("unknown config key '" + where + key + "'");
    }
    if (key == "multipliers") continue;
    check_keys(v, defaults.at(key), where + key + ".");
  }
}

void resolve_paths(json &j, const fs::path &base) {
  if (j.is_object()) {
    for (auto &[key, v] : j.items()) {
      if (v.is_string() && path_keys().count(key)) {
        const std::string s = v.get<std::string>();
        if (!s.empty() && fs::path(s).is_relative()) {
          v = (base / s).lexically_normal().string();
        }
      } else {
        resolve_paths(v, base);
      }
    }
  } else if (j.is_array()) {
    for (json &v : j) resolve_paths(v, base);
  }
}

json complete(json merged) {
  if (merged.contains("kbs")) {
    json kbs = json::array();
    for (const json &kb : merged.at("kbs")) {
      check_keys(kb, kb_default_json(), "kbs[].");
      json full = kb_default_json();
      full.merge_patch(kb);
      kbs.push_back(full);
    }
    merged["kbs"] = kbs;
  }
  return merged;
}

void strip_paths(json &j) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end();) {
      if (path_keys().count(it.key()) && it->is_string()) {
        it = j.erase(it);
      } else {
        strip_paths(*it);
        ++it;
      }
    }
  } else if (j.is_array()) {
    for (json &v : j) strip_paths(v);
  }
}

}  // namespace

json default_config_json() {
  EncoderConfig e;
  MaskingConfig m;
  EvalConfig ev;
  SynthFactsConfig sy;
  ScheduleConfig linker;
  linker.total_steps = 2000;
  linker.eval_every = 100;
  ScheduleConfig train;
  return {{"seed", 1},
          {"vocab", ""},
          {"corpus", ""},
          {"output_dir", "run"},
          {"init_from", ""},
          {"encoder",
           {{"layers", e.layers},
            {"dim", e.dim},
            {"heads", e.heads},
            {"ffn_dim", e.ffn_dim},
            {"max_len", e.max_len}}},
          {"kbs", json::array()},
          {"linker", schedule_json(linker)},
          {"train", schedule_json(train)},
          {"masking", {{"rate", m.rate}, {"mask", m.mask}, {"random", m.random}}},
          {"eval",
           {{"corpus", ev.corpus},
            {"probes", ev.probes},
            {"el_gold", ev.el_gold},
            {"wsd", ev.wsd},
            {"kb", ev.kb},
            {"mrr_aggregate", ev.mrr_aggregate},
            {"mrr_sides", ev.mrr_sides}}},
          {"synth",
           {{"relations", sy.relations},
            {"facts", sy.facts},
            {"objects", sy.objects},
            {"heldout", sy.heldout},
            {"multiplicity", sy.multiplicity},
            {"entity_dim", sy.entity_dim},
            {"prior", sy.prior},
            {"two_piece", sy.two_piece}}}};
}

RunConfig run_config_from_json(const json &input, const std::string &base_dir) {
  json file = input;
  check_keys(file, default_config_json(), "");
  if (!base_dir.empty()) resolve_paths(file, base_dir);
  json j = default_config_json();
  j.merge_patch(file);
  j = complete(j);

  RunConfig c;
  try {
    c.seed = j.at("seed").get<uint64_t>();
    c.vocab = j.at("vocab").get<std::string>();
    c.corpus = j.at("corpus").get<std::string>();
    c.output_dir = j.at("output_dir").get<std::string>();
    c.init_from = j.at("init_from").get<std::string>();
    const json &e = j.at("encoder");
    c.encoder.layers = e.at("layers").get<int>();
    c.encoder.dim = e.at("dim").get<int>();
    c.encoder.heads = e.at("heads").get<int>();
    c.encoder.ffn_dim = e.at("ffn_dim").get<int>();
    c.encoder.max_len = e.at("max_len").get<int>();
    for (const json &k : j.at("kbs")) {
      KbConfig kb;
      kb.name = k.at("name").get<std::string>();
      kb.layer = k.at("layer").get<int>();
      kb.entities = k.at("entities").get<std::string>();
      kb.embeddings = k.at("embeddings").get<std::string>();
      kb.dictionary = k.at("dictionary").get<std::string>();
      kb.lemmas = k.at("lemmas").get<std::string>();
      kb.supervision = k.at("supervision").get<std::string>();
      kb.validation_fraction = k.at("validation_fraction").get<double>();
      const json &kar = k.at("kar");
      kb.kar.entity_dim = kar.at("entity_dim").get<int>();
      kb.kar.heads = kar.at("heads").get<int>();
      kb.kar.ffn_dim = kar.at("ffn_dim").get<int>();
      kb.kar.scorer_hidden = kar.at("scorer_hidden").get<int>();
      kb.kar.threshold = kar.at("threshold").get<double>();
      kb.kar.margin = kar.at("margin").get<double>();
      kb.kar.loss = parse_link_loss(kar.at("loss").get<std::string>());
      kb.kar.mask_prior = kar.at("mask_prior").get<double>();
      const json &sel = k.at("selector");
      kb.selector.max_mention_length = sel.at("max_mention_length").get<int>();
      kb.selector.max_candidates = sel.at("max_candidates").get<int>();
      kb.selector.add_null = sel.at("add_null").get<bool>();
      kb.selector.null_prior_floor = sel.at("null_prior_floor").get<double>();
      if (kb.name.empty()) throw ConfigError("every KB needs a name");
      c.kbs.push_back(std::move(kb));
      c.encoder.insertions.push_back({c.kbs.back().layer, c.kbs.back().name});
    }
    c.linker = schedule_from(j.at("linker"), c.seed);
    c.train = schedule_from(j.at("train"), c.seed);
    const json &m = j.at("masking");
    c.masking.rate = m.at("rate").get<double>();
    c.masking.mask = m.at("mask").get<double>();
    c.masking.random = m.at("random").get<double>();
    const json &ev = j.at("eval");
    c.eval.corpus = ev.at("corpus").get<std::string>();
    c.eval.probes = ev.at("probes").get<std::string>();
    c.eval.el_gold = ev.at("el_gold").get<std::string>();
    c.eval.wsd = ev.at("wsd").get<std::string>();
    c.eval.kb = ev.at("kb").get<std::string>();
    c.eval.mrr_aggregate = ev.at("mrr_aggregate").get<std::string>();
    c.eval.mrr_sides = ev.at("mrr_sides").get<std::string>();
    const json &sy = j.at("synth");
    c.synth.seed = c.seed;
    c.synth.relations = sy.at("relations").get<int>();
    c.synth.facts = sy.at("facts").get<int>();
    c.synth.objects = sy.at("objects").get<int>();
    c.synth.heldout = sy.at("heldout").get<double>();
    c.synth.multiplicity = sy.at("multiplicity").get<int>();
    c.synth.entity_dim = sy.at("entity_dim").get<int>();
    c.synth.prior = sy.at("prior").get<double>();
    c.synth.two_piece = sy.at("two_piece").get<double>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.linker.validate();
  c.train.validate();
  if (c.masking.rate <= 0 || c.masking.rate > 1 || c.masking.mask < 0 ||
      c.masking.random < 0 || c.masking.mask + c.masking.random > 1) {
    throw ConfigError("masking fractions out of range");
  }
  return c;
}

RunConfig load_run_config(const std::string &path,
                          const std::vector<std::string> &overrides) {
  json file = json::object();
  std::string base;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    try {
      file = json::parse(in);
    } catch (const json::exception &e) {
      throw ConfigError(path + ": " + e.what());
    }
    base = fs::absolute(path).parent_path().string();
    check_keys(file, default_config_json(), "");
    resolve_paths(file, base);
  }
  json merged = default_config_json();
  merged.merge_patch(file);
  merged = complete(merged);
  for (const std::string &o : overrides) {
    const size_t eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + o + "' is not key=value");
    }
    const std::string key = o.substr(0, eq);
    const std::string text = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(text);
    } catch (const json::exception &) {
      value = text;
    }
    std::string pointer;
    std::string leaf;
    size_t start = 0;
    while (start <= key.size()) {
      const size_t dot = key.find('.', start);
      leaf = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      pointer += "/" + leaf;
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    if (value.is_string() && path_keys().count(leaf)) {
      const std::string s = value.get<std::string>();
      if (!s.empty()) value = fs::absolute(s).lexically_normal().string();
    }
    const json::json_pointer ptr(pointer);
    if (!merged.contains(ptr)) throw ConfigError("unknown config key '" + key + "'");
    merged[ptr] = value;
  }
  return run_config_from_json(merged, "");
}

json RunConfig::to_json() const {
  json j = default_config_json();
  j["seed"] = seed;
  j["vocab"] = vocab;
  j["corpus"] = corpus;
  j["output_dir"] = output_dir;
  j["init_from"] = init_from;
  j["encoder"] = {{"layers", encoder.layers},
                  {"dim", encoder.dim},
                  {"heads", encoder.heads},
                  {"ffn_dim", encoder.ffn_dim},
                  {"max_len", encoder.max_len}};
  j["kbs"] = json::array();
  for (const KbConfig &kb : kbs) {
    json k = kb_default_json();
    k["name"] = kb.name;
    k["layer"] = kb.layer;
    k["entities"] = kb.entities;
    k["embeddings"] = kb.embeddings;
    k["dictionary"] = kb.dictionary;
    k["lemmas"] = kb.lemmas;
    k["supervision"] = kb.supervision;
    k["validation_fraction"] = kb.validation_fraction;
    k["kar"] = {{"entity_dim", kb.kar.entity_dim},
                {"heads", kb.kar.heads},
                {"ffn_dim", kb.kar.ffn_dim},
                {"scorer_hidden", kb.kar.scorer_hidden},
                {"threshold", kb.kar.threshold},
                {"margin", kb.kar.margin},
                {"loss", link_loss_name(kb.kar.loss)},
                {"mask_prior", kb.kar.mask_prior}};
    k["selector"] = {{"max_mention_length", kb.selector.max_mention_length},
                     {"max_candidates", kb.selector.max_candidates},
                     {"add_null", kb.selector.add_null},
                     {"null_prior_floor", kb.selector.null_prior_floor}};
    j["kbs"].push_back(k);
  }
  j["linker"] = schedule_json(linker);
  j["train"] = schedule_json(train);
  j["masking"] = {{"rate", masking.rate}, {"mask", masking.mask}, {"random", masking.random}};
  j["eval"] = {{"corpus", eval.corpus},         {"probes", eval.probes},
               {"el_gold", eval.el_gold},       {"wsd", eval.wsd},
               {"kb", eval.kb},                 {"mrr_aggregate", eval.mrr_aggregate},
               {"mrr_sides", eval.mrr_sides}};
  j["synth"] = {{"relations", synth.relations},   {"facts", synth.facts},
                {"objects", synth.objects},       {"heldout", synth.heldout},
                {"multiplicity", synth.multiplicity}, {"entity_dim", synth.entity_dim},
                {"prior", synth.prior},           {"two_piece", synth.two_piece}};
  return j;
}

std::string RunConfig::hash() const {
  // File locations do not take part, so relocating a run keeps its hash.
  json j = to_json();
  strip_paths(j);
  const std::string text = j.dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void check_paths(const RunConfig &config, bool need_corpus, bool need_kbs) {
  auto require = [](const std::string &path, const std::string &what) {
    if (path.empty()) throw ConfigError(what + " path is not set");
    if (!fs::exists(path)) throw ConfigError(what + " not found: " + path);
  };
  require(config.vocab, "vocab");
  if (need_corpus) require(config.corpus, "corpus");
  if (need_kbs) {
    for (const KbConfig &kb : config.kbs) {
      require(kb.entities, "KB '" + kb.name + "' entities");
      require(kb.embeddings, "KB '" + kb.name + "' embeddings");
      require(kb.dictionary, "KB '" + kb.name + "' dictionary");
      if (!kb.lemmas.empty()) require(kb.lemmas, "KB '" + kb.name + "' lemmas");
      if (!kb.supervision.empty()) require(kb.supervision, "KB '" + kb.name + "' supervision");
    }
  }
  if (!config.init_from.empty()) require(config.init_from, "init_from checkpoint");
}

RunContext load_context(const RunConfig &config, bool with_data) {
  check_paths(config, with_data, true);
  RunContext ctx;
  ctx.vocab = std::make_shared<const Vocabulary>(Vocabulary::load(config.vocab));
  for (const KbConfig &kb : config.kbs) {
    auto base = std::make_shared<const KnowledgeBase>(KnowledgeBase::load(
        kb.name, kb.entities, kb.embeddings, kb.dictionary, kb.lemmas, kb.selector));
    ctx.kbs.push_back({base, kb.kar});
  }
  EncoderConfig enc = config.encoder;
  enc.vocab_size = ctx.vocab->size();
  try {
    ctx.model = std::make_unique<KnowledgeModel>(ctx.vocab, enc, ctx.kbs, config.seed);
  } catch (const std::invalid_argument &e) {
    throw ConfigError(e.what());
  }
  if (!with_data) return ctx;

  for (const PairRecord &r : load_corpus(config.corpus)) {
    int cut = 0;
    ctx.data.unlabeled.push_back(tokenize_pair(*ctx.vocab, r, enc.max_len, &cut));
    if (cut > 0) ++ctx.truncated_pairs;
  }
  for (size_t j = 0; j < config.kbs.size(); ++j) {
    std::vector<LinkExample> all;
    if (!config.kbs[j].supervision.empty()) {
      for (const SupervisionRecord &r :
           load_supervision(config.kbs[j].supervision, *ctx.kbs[j].kb)) {
        LinkExample ex = to_link_example(*ctx.vocab, r);
        if (static_cast<int>(ex.ids.size()) + 2 > enc.max_len) {
          throw ConfigError(config.kbs[j].supervision + ": example of " +
                            std::to_string(ex.ids.size()) + " pieces exceeds max_len");
        }
        all.push_back(std::move(ex));
      }
    }
    const size_t n_val =
        static_cast<size_t>(all.size() * config.kbs[j].validation_fraction);
    ctx.data.validation.emplace_back(all.end() - n_val, all.end());
    all.resize(all.size() - n_val);
    ctx.data.supervised.push_back(std::move(all));
  }
  return ctx;
}

}  // namespace karlm
