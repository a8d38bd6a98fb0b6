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

#include "karlm/cli.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "karlm/config.h"
#include "karlm/eval.h"
#include "karlm/synth.h"
#include "karlm/worked_example.h"

namespace karlm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Maps exceptions onto the exit-code contract.
int guarded(std::ostream &err, const std::function<int()> &body) {
  try {
    return body();
  } catch (const ConfigError &e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const KbParseError &e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const VocabularyError &e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const json::exception &e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument &e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::length_error &e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception &e) {
    err << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

RunConfig load_config(const CommonOptions &common) {
  return load_run_config(common.config, common.overrides);
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file(const fs::path &path, const std::string &text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Config for running on a generated dataset; paths relative to it.
json dataset_config(const RunConfig &base, const std::string &kind) {
  json j = base.to_json();
  j["vocab"] = "vocab.txt";
  j["corpus"] = "";
  j["output_dir"] = "run";
  j["init_from"] = "";
  json kb = j["kbs"].empty() ? json::object() : j["kbs"][0];
  if (kb.empty()) {
    KbConfig k;
    kb = {{"name", kind},
          {"layer", std::min(k.layer, base.encoder.layers)},
          {"validation_fraction", k.validation_fraction},
          {"kar", {{"entity_dim", base.synth.entity_dim}}}};
  }
  kb["entities"] = "kb/entities.jsonl";
  kb["embeddings"] = "kb/embeddings.txt";
  kb["dictionary"] = "kb/dictionary.jsonl";
  kb["lemmas"] = "";
  json &ev = j["eval"];
  ev["kb"] = "";
  ev["wsd"] = "";
  if (kind == "facts") {
    j["corpus"] = "corpus.jsonl";
    kb["supervision"] = "supervision.jsonl";
    ev["corpus"] = "heldout.jsonl";
    ev["probes"] = "probes.jsonl";
    ev["el_gold"] = "";
  } else {
    j["corpus"] = "corpus.jsonl";
    kb["supervision"] = "train.jsonl";
    ev["corpus"] = "";
    ev["probes"] = "";
    ev["el_gold"] = "test.jsonl";
  }
  j["kbs"] = json::array({kb});
  return j;
}

int resolve_slot(const KnowledgeModel &model, const std::string &name) {
  if (name.empty()) return model.kb_count() > 0 ? 0 : -1;
  const int j = model.slot_index(name);
  if (j < 0) throw ConfigError("no KB named '" + name + "'");
  return j;
}

std::string checkpoint_path(const RunConfig &config, const std::string &given) {
  return given.empty() ? (fs::path(config.output_dir) / "model.ckpt").string() : given;
}

std::string fixed(double v, int precision = 6) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

}  // namespace

int cmd_synth(const SynthOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    const RunConfig config = load_config(options.common);
    const std::string dir = options.out.empty() ? config.output_dir : options.out;
    if (options.kind == "facts") {
      SynthFacts data = synth_facts_benchmark(config.synth);
      write_synth_facts(dir, data);
      out << "wrote fact benchmark to " << dir << ": " << data.entity_names.size()
          << " entities, " << data.corpus.size() << " corpus pairs, "
          << data.probes.size() << " held-out probes\n";
    } else if (options.kind == "linking") {
      SynthLinkingConfig lc;
      lc.seed = config.seed;
      lc.entity_dim = config.synth.entity_dim;
      SynthLinking data = synth_linking_set(lc);
      write_synth_linking(dir, lc, data);
      out << "wrote linking set to " << dir << ": " << data.entity_names.size()
          << " entities, " << data.train.size() << " train, " << data.test.size()
          << " test sentences\n";
    } else {
      throw ConfigError("unknown dataset kind '" + options.kind +
                        "' (expected facts or linking)");
    }
    write_file(fs::path(dir) / "config.json",
               dataset_config(config, options.kind).dump(2) + "\n");
    return kExitOk;
  });
}

int cmd_train(const TrainOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    const RunConfig config = load_config(options.common);
    if (options.stage != "linker" && options.stage != "full") {
      throw ConfigError("unknown stage '" + options.stage + "' (expected linker or full)");
    }
    RunContext ctx = load_context(config, true);
    KnowledgeModel &model = *ctx.model;
    if (ctx.truncated_pairs > 0) {
      err << "note: " << ctx.truncated_pairs << " corpus pairs truncated to max_len "
          << config.encoder.max_len << "\n";
    }
    fs::create_directories(config.output_dir);
    const std::string ckpt = (fs::path(config.output_dir) / "model.ckpt").string();
    const json meta = {{"config_hash", config.hash()}, {"seed", config.seed}};

    // The checkpoint on disk carries weights and stage bookkeeping forward.
    TrainState previous;
    bool have_previous = false;
    if (fs::exists(ckpt)) {
      LoadedCheckpoint peek = load_checkpoint(ckpt, model, nullptr, true);
      if (options.resume && peek.meta.value("config_hash", "") != config.hash()) {
        throw ConfigError(ckpt + " was written under config " +
                          peek.meta.value("config_hash", std::string("?")) +
                          ", current config is " + config.hash());
      }
      previous = peek.state;
      have_previous = peek.has_optimizer;
    } else if (options.resume) {
      throw ConfigError("nothing to resume: " + ckpt + " does not exist");
    }

    const std::string stage = options.resume && have_previous ? previous.stage : options.stage;
    if (options.resume && have_previous && previous.stage != options.stage) {
      throw ConfigError("checkpoint holds an unfinished " + previous.stage +
                        " stage, not " + options.stage);
    }
    Trainer trainer(model, ctx.data, stage == "linker" ? config.linker : config.train,
                    config.masking);
    if (have_previous) {
      load_checkpoint(ckpt, model, &trainer, false);
      if (!options.resume && !trainer.state().done) {
        throw ConfigError(ckpt + " holds an unfinished " + trainer.state().stage +
                          " stage; pass --resume to continue it");
      }
    } else if (!config.init_from.empty()) {
      LoadedCheckpoint init = load_checkpoint(config.init_from, model, nullptr, true);
      err << "note: initialized " << init.loaded << " parameters from "
          << config.init_from << " (" << init.missing << " new)\n";
    }

    StageOptions so;
    so.checkpoint_path = ckpt;
    so.stop_after = options.stop_after;
    so.checkpoint_meta = meta;

    StageResult result;
    int slot = -1;
    std::string log_name;
    if (options.resume) {
      slot = trainer.state().kb;
      log_name = "train_" + trainer.state().stage + "_" + std::to_string(slot) + ".jsonl";
      std::ofstream log(fs::path(config.output_dir) / log_name, std::ios::app);
      so.log = &log;
      result = trainer.resume(so);
    } else {
      if (!options.kb.empty()) {
        slot = resolve_slot(model, options.kb);
      } else if (stage == "linker") {
        slot = trainer.state().kbs_added;
        if (slot >= model.kb_count()) {
          throw ConfigError(model.kb_count() == 0 ? "linker stage needs a KB"
                                                  : "every KB is already added");
        }
      } else if (model.kb_count() > 0) {
        slot = std::min(trainer.state().kbs_added, model.kb_count() - 1);
      }
      log_name = "train_" + stage + "_" + std::to_string(slot) + ".jsonl";
      std::ofstream log(fs::path(config.output_dir) / log_name, std::ios::trunc);
      so.log = &log;
      result = stage == "linker" ? trainer.pretrain_linker(slot, so)
                                 : trainer.multitask_train(slot, so);
    }
    if (result.skipped) {
      out << result.notice << "\n";
      return kExitOk;
    }
    out << stage << " stage";
    if (slot >= 0) out << " for KB '" << model.slot(slot).kb->name() << "'";
    out << ": " << result.steps_run << " steps, last loss " << fixed(result.last_loss);
    if (result.early_stopped) out << ", stopped early";
    if (!trainer.state().done) out << ", interrupted at step " << trainer.state().step;
    out << "\ncheckpoint " << ckpt << " checksum " << hex64(model.params().checksum())
        << "\n";
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    const RunConfig config = load_config(options.common);
    RunContext ctx = load_context(config, false);
    KnowledgeModel &model = *ctx.model;
    const std::string ckpt = checkpoint_path(config, options.checkpoint);
    if (!fs::exists(ckpt)) throw ConfigError("checkpoint not found: " + ckpt);
    load_checkpoint(ckpt, model, nullptr, false);

    auto need = [](const std::string &path, const std::string &what) {
      if (path.empty()) throw ConfigError(what + " needs eval." + what + " data");
      if (!fs::exists(path)) throw ConfigError(what + " data not found: " + path);
    };
    Report report;
    const std::string &probe = options.probe;
    if (probe == "ppl") {
      const std::string path = config.eval.corpus.empty() ? config.corpus : config.eval.corpus;
      if (path.empty()) throw ConfigError("ppl needs eval.corpus or corpus");
      if (!fs::exists(path)) throw ConfigError("ppl corpus not found: " + path);
      std::vector<PairExample> corpus;
      for (const PairRecord &r : load_corpus(path)) {
        corpus.push_back(tokenize_pair(*ctx.vocab, r, config.encoder.max_len));
      }
      const NllSum nll = masked_nll(model, corpus, config.masking, config.seed);
      report = make_report("perplexity", perplexity_from(nll),
                           {{"pairs", corpus.size()},
                            {"positions", nll.positions},
                            {"nll_sum", nll.sum}},
                           config.seed, config.hash());
    } else if (probe == "mrr") {
      need(config.eval.probes, "probes");
      std::vector<ProbeSide> sides;
      if (config.eval.mrr_sides == "both" || config.eval.mrr_sides == "subject") {
        sides.push_back(ProbeSide::kSubject);
      }
      if (config.eval.mrr_sides == "both" || config.eval.mrr_sides == "object") {
        sides.push_back(ProbeSide::kObject);
      }
      if (sides.empty()) {
        throw ConfigError("eval.mrr_sides must be both, subject or object");
      }
      const MrrReport r =
          mrr_probe(model, load_probes(config.eval.probes),
                    parse_mrr_aggregate(config.eval.mrr_aggregate), sides);
      report = make_report("mrr", r.total,
                           {{"per_relation", r.per_relation},
                            {"instances_per_relation", r.instances_per_relation},
                            {"instances", r.instances},
                            {"aggregate", config.eval.mrr_aggregate},
                            {"sides", config.eval.mrr_sides}},
                           config.seed, config.hash());
    } else if (probe == "el" || probe == "wsd") {
      if (model.kb_count() == 0) throw ConfigError(probe + " needs a KB in the config");
      const int slot = resolve_slot(model, config.eval.kb);
      const KnowledgeBase &kb = *model.slot(slot).kb;
      if (probe == "el") {
        need(config.eval.el_gold, "el_gold");
        std::vector<std::vector<ELPrediction>> predicted;
        std::vector<std::vector<GoldLink>> gold;
        for (const SupervisionRecord &r : load_supervision(config.eval.el_gold, kb)) {
          const LinkExample ex = to_link_example(*ctx.vocab, r);
          predicted.push_back(predict_links(model, slot, ex.ids));
          gold.push_back(gold_links(ex, kb));
        }
        const F1Report f = el_f1(predicted, gold);
        report = make_report("el_f1", f.f1,
                             {{"precision", f.precision},
                              {"recall", f.recall},
                              {"f1", f.f1},
                              {"correct", f.correct},
                              {"predicted", f.predicted},
                              {"gold", f.gold},
                              {"kb", kb.name()}},
                             config.seed, config.hash());
      } else {
        need(config.eval.wsd, "wsd");
        const RestrictedReport r = restricted_linking_accuracy(
            model, slot, load_restricted(config.eval.wsd, *ctx.vocab));
        report = make_report("restricted_accuracy", r.accuracy,
                             {{"correct", r.correct},
                              {"total", r.total},
                              {"invalid", r.invalid},
                              {"kb", kb.name()}},
                             config.seed, config.hash());
      }
    } else {
      throw ConfigError("unknown probe '" + probe + "' (expected ppl, mrr, el or wsd)");
    }
    const std::string stem = options.out.empty()
                                 ? (fs::path(config.output_dir) / ("eval_" + probe)).string()
                                 : options.out;
    write_file(stem + ".json", report.json.dump(2) + "\n");
    write_file(stem + ".txt", report.text);
    out << report.text;
    return kExitOk;
  });
}

int cmd_link(const LinkOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    const RunConfig config = load_config(options.common);
    RunContext ctx = load_context(config, false);
    KnowledgeModel &model = *ctx.model;
    const std::string ckpt = checkpoint_path(config, options.checkpoint);
    if (!fs::exists(ckpt)) throw ConfigError("checkpoint not found: " + ckpt);
    load_checkpoint(ckpt, model, nullptr, false);
    if (options.top_k < 1) throw ConfigError("--top-k must be positive");

    const std::vector<int> ids = tokenize(options.sentence, *ctx.vocab);
    if (ids.empty()) throw ConfigError("sentence has no word pieces");
    const EncoderInput input = frame_pair(model, ids, {});
    Tape tape;
    const EncoderState state = encode(tape, model, input);

    json spans = json::array();
    for (int j = 0; j < model.kb_count(); ++j) {
      const KnowledgeBase &kb = *model.slot(j).kb;
      const CandidateList &cands = input.candidates[j];
      if (cands.empty() || !state.kar[j]) continue;
      const KarActivations &act = state.kar[j]->activations;
      for (int m = 0; m < cands.size(); ++m) {
        const CandidateSpan &span = cands.spans[m];
        const Matrix &psi = act.psi[m].value();
        const Matrix &tilde = act.psi_tilde[m].value();
        std::vector<int> order(span.candidates.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return psi(a, 0) > psi(b, 0); });
        json rows = json::array();
        for (int k = 0; k < std::min<int>(options.top_k, static_cast<int>(order.size())); ++k) {
          const Candidate &c = span.candidates[order[k]];
          rows.push_back({{"entity", kb.entity_name(c.entity)},
                          {"id", c.entity},
                          {"prior", c.prior},
                          {"psi", psi(order[k], 0)},
                          {"psi_tilde", tilde(order[k], 0)}});
        }
        std::string chosen = kb.entity_name(kb.null_id());
        if (!act.null_fallback[m]) {
          Eigen::Index best;
          tilde.col(0).maxCoeff(&best);
          chosen = kb.entity_name(span.candidates[best].entity);
        }
        // Framed positions shift by the leading [CLS].
        std::vector<int> piece_ids(input.ids.begin() + span.start,
                                   input.ids.begin() + span.end + 1);
        spans.push_back({{"kb", kb.name()},
                         {"start", span.start - 1},
                         {"end", span.end - 1},
                         {"text", detokenize(piece_ids, *ctx.vocab)},
                         {"null_fallback", static_cast<bool>(act.null_fallback[m])},
                         {"chosen", chosen},
                         {"candidates", rows}});
      }
    }
    if (options.json) {
      out << json{{"sentence", options.sentence}, {"spans", spans}}.dump(2) << "\n";
      return kExitOk;
    }
    if (spans.empty()) {
      out << "no candidate mentions\n";
      return kExitOk;
    }
    for (const json &s : spans) {
      out << "[" << s["start"].get<int>() << ", " << s["end"].get<int>() << "] \""
          << s["text"].get<std::string>() << "\" (" << s["kb"].get<std::string>()
          << ") -> " << s["chosen"].get<std::string>() << "\n";
      for (const json &c : s["candidates"]) {
        out << "    " << std::setw(24) << std::left << c["entity"].get<std::string>()
            << std::right << " psi " << std::setw(10) << fixed(c["psi"].get<double>(), 4)
            << "  psi~ " << fixed(c["psi_tilde"].get<double>(), 4) << "\n";
      }
    }
    return kExitOk;
  });
}

int cmd_trace(const TraceOptions &options, std::ostream &out, std::ostream &err) {
  return guarded(err, [&] {
    const std::string text = worked_example_trace().dump(1) + "\n";
    if (options.out.empty()) {
      out << text;
    } else {
      write_file(options.out, text);
    }
    return kExitOk;
  });
}

}  // namespace karlm
