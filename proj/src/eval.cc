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

#include "karlm/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace karlm {

using nlohmann::json;

double perplexity_from(const NllSum &nll) {
  if (nll.positions == 0) throw ContractError("perplexity: no masked positions");
  return std::exp(nll.sum / nll.positions);
}

NllSum masked_nll(const KnowledgeModel &model, const std::vector<PairExample> &corpus,
                  const MaskingConfig &masking, uint64_t seed, int offset) {
  NllSum out;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const PairExample &ex = corpus[i];
    Rng rng = substream(seed, "ppl", offset + i);
    MaskedExample me =
        mask_example(model, frame_pair(model, ex.a, ex.b), ex.is_next, masking, rng);
    if (me.targets.empty()) continue;
    Tape tape;
    EncoderState state = encode(tape, model, me.input);
    std::vector<int> positions;
    for (const MaskedTarget &t : me.targets) positions.push_back(t.position);
    const Matrix &lp = mlm_log_probs(tape, model, state, positions).value();
    for (size_t k = 0; k < me.targets.size(); ++k) {
      out.sum -= lp(static_cast<int>(k), me.targets[k].gold);
      ++out.positions;
    }
  }
  return out;
}

double perplexity(const KnowledgeModel &model, const std::vector<PairExample> &corpus,
                  const MaskingConfig &masking, uint64_t seed) {
  return perplexity_from(masked_nll(model, corpus, masking, seed));
}

// ---------------------------------------------------------------------------

std::vector<ProbeTuple> load_probes(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<ProbeTuple> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json r = json::parse(line);
      out.push_back({r.at("relation").get<std::string>(),
                     r.at("template").get<std::string>(),
                     r.at("subject").get<std::string>(),
                     r.at("object").get<std::string>()});
    } catch (const json::exception &e) {
      throw ConfigError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

void save_probes(const std::string &path, const std::vector<ProbeTuple> &probes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const ProbeTuple &p : probes) {
    out << json{{"relation", p.relation},
                {"template", p.template_text},
                {"subject", p.subject},
                {"object", p.object}}
               .dump()
        << "\n";
  }
}

namespace {

int count_occurrences(const std::string &text, const std::string &needle) {
  int n = 0;
  for (size_t pos = text.find(needle); pos != std::string::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

}  // namespace

ProbeInstance make_probe_instance(const Vocabulary &vocab, const ProbeTuple &tuple,
                                  ProbeSide side) {
  const std::string &t = tuple.template_text;
  if (count_occurrences(t, "SUBJ") != 1 || count_occurrences(t, "OBJ") != 1) {
    throw ProbeError("template must contain SUBJ and OBJ exactly once: '" + t + "'");
  }
  const size_t s = t.find("SUBJ"), o = t.find("OBJ");
  struct Part {
    std::string text;
    int filler;  // -1 literal, 0 subject, 1 object
  };
  std::vector<Part> parts;
  if (s < o) {
    parts = {{t.substr(0, s), -1},
             {tuple.subject, 0},
             {t.substr(s + 4, o - s - 4), -1},
             {tuple.object, 1},
             {t.substr(o + 3), -1}};
  } else {
    parts = {{t.substr(0, o), -1},
             {tuple.object, 1},
             {t.substr(o + 3, s - o - 3), -1},
             {tuple.subject, 0},
             {t.substr(s + 4), -1}};
  }
  ProbeInstance inst;
  inst.relation = tuple.relation;
  inst.side = side;
  const int masked = side == ProbeSide::kSubject ? 0 : 1;
  for (const Part &part : parts) {
    std::vector<int> pieces = tokenize(part.text, vocab);
    if (part.filler >= 0) {
      if (pieces.empty()) throw ProbeError("empty filler in '" + t + "'");
      for (int p : pieces) {
        if (p == vocab.unk()) {
          throw ProbeError("filler '" + part.text + "' is not covered by the vocabulary");
        }
      }
    }
    for (int p : pieces) {
      if (part.filler == masked) {
        inst.positions.push_back(static_cast<int>(inst.ids.size()));
        inst.gold.push_back(p);
        inst.ids.push_back(vocab.mask());
      } else {
        inst.ids.push_back(p);
      }
    }
  }
  return inst;
}

int rank_of(const Matrix &log_probs, int row, int gold) {
  const double g = log_probs(row, gold);
  int rank = 1;
  for (int v = 0; v < log_probs.cols(); ++v) {
    const double p = log_probs(row, v);
    if (p > g || (p == g && v < gold)) ++rank;
  }
  return rank;
}

MrrAggregate parse_mrr_aggregate(const std::string &name) {
  if (name == "mean") return MrrAggregate::kMean;
  if (name == "min") return MrrAggregate::kMin;
  throw std::invalid_argument("unknown MRR aggregate '" + name + "' (mean | min)");
}

double instance_mrr(const std::vector<int> &ranks, MrrAggregate aggregate) {
  if (ranks.empty()) throw ContractError("instance without masked pieces");
  if (aggregate == MrrAggregate::kMin) {
    return 1.0 / *std::max_element(ranks.begin(), ranks.end());
  }
  double sum = 0.0;
  for (int r : ranks) sum += 1.0 / r;
  return sum / ranks.size();
}

MrrReport mrr_probe(const KnowledgeModel &model, const std::vector<ProbeTuple> &tuples,
                    MrrAggregate aggregate, std::vector<ProbeSide> sides) {
  MrrReport report;
  std::map<std::string, double> sums;
  double total = 0.0;
  for (const ProbeTuple &tuple : tuples) {
    if (!sums.count(tuple.relation)) {
      sums[tuple.relation] = 0.0;
      report.instances_per_relation[tuple.relation] = 0;
    }
    for (ProbeSide side : sides) {
      ProbeInstance inst = make_probe_instance(model.vocab(), tuple, side);
      EncoderInput input = frame_pair(model, inst.ids, {});
      std::vector<int> positions;
      for (int p : inst.positions) positions.push_back(p + 1);
      Tape tape;
      EncoderState state = encode(tape, model, input);
      const Matrix &lp = mlm_log_probs(tape, model, state, positions).value();
      std::vector<int> ranks;
      for (size_t k = 0; k < inst.gold.size(); ++k) {
        ranks.push_back(rank_of(lp, static_cast<int>(k), inst.gold[k]));
      }
      const double rr = instance_mrr(ranks, aggregate);
      sums[tuple.relation] += rr;
      ++report.instances_per_relation[tuple.relation];
      total += rr;
      ++report.instances;
    }
  }
  for (const auto &[relation, sum] : sums) {
    const int n = report.instances_per_relation[relation];
    report.per_relation[relation] = n > 0 ? sum / n : 0.0;
  }
  report.total = report.instances > 0 ? total / report.instances : 0.0;
  return report;
}

// ---------------------------------------------------------------------------

F1Report el_f1(const std::vector<std::vector<ELPrediction>> &predictions,
               const std::vector<std::vector<GoldLink>> &gold) {
  if (predictions.size() != gold.size()) {
    throw std::invalid_argument("el_f1: " + std::to_string(predictions.size()) +
                                " prediction sets for " + std::to_string(gold.size()) +
                                " gold sets");
  }
  F1Report r;
  for (size_t i = 0; i < gold.size(); ++i) {
    std::set<std::tuple<int, int, int>> truth;
    for (const GoldLink &g : gold[i]) truth.insert({g.start, g.end, g.entity});
    r.gold += static_cast<int>(truth.size());
    r.predicted += static_cast<int>(predictions[i].size());
    for (const ELPrediction &p : predictions[i]) {
      if (truth.count({p.start, p.end, p.entity})) ++r.correct;
    }
  }
  r.precision = r.predicted > 0 ? static_cast<double>(r.correct) / r.predicted : 0.0;
  r.recall = r.gold > 0 ? static_cast<double>(r.correct) / r.gold : 0.0;
  r.f1 = r.precision + r.recall > 0
             ? 2 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

namespace {

int argmax_column(const Matrix &psi) {
  int best = 0;
  for (int k = 1; k < psi.rows(); ++k) {
    if (psi(k, 0) > psi(best, 0)) best = k;
  }
  return best;
}

}  // namespace

std::vector<ELPrediction> predict_links(const KnowledgeModel &model, int kb,
                                        const std::vector<int> &ids) {
  if (kb >= model.active_kbs()) {
    throw ContractError("predict_links: KB slot " + std::to_string(kb) + " is inactive");
  }
  EncoderInput input = frame_pair(model, ids, {});
  std::vector<ELPrediction> out;
  const CandidateList &list = input.candidates[kb];
  if (list.empty()) return out;
  Tape tape;
  EncoderState state = encode(tape, model, input, nullptr, model.slot(kb).layer);
  const KarActivations &act = state.kar[kb]->activations;
  const int null_id = model.slot(kb).kb->null_id();
  for (int m = 0; m < list.size(); ++m) {
    const Matrix &psi = act.psi[m].value();
    const int best = argmax_column(psi);
    const int entity = list.spans[m].candidates[best].entity;
    if (entity >= null_id) continue;
    out.push_back({list.spans[m].start - 1, list.spans[m].end - 1, entity, psi(best, 0)});
  }
  return out;
}

std::vector<GoldLink> gold_links(const LinkExample &example, const KnowledgeBase &kb) {
  std::vector<GoldLink> out;
  for (size_t i = 0; i < example.spans.size(); ++i) {
    if (example.gold[i] >= kb.null_id()) continue;
    out.push_back({example.spans[i].first, example.spans[i].second, example.gold[i]});
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<RestrictedInstance> load_restricted(const std::string &path,
                                                const Vocabulary &vocab) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<RestrictedInstance> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json r = json::parse(line);
      RestrictedInstance inst;
      for (const std::string &p : r.at("pieces").get<std::vector<std::string>>()) {
        const int id = vocab.id(p);
        inst.ids.push_back(id < 0 ? vocab.unk() : id);
      }
      inst.start = r.at("span").at(0).get<int>();
      inst.end = r.at("span").at(1).get<int>();
      inst.gold = r.at("gold").get<int>();
      inst.allowed = r.at("allowed").get<std::vector<int>>();
      if (inst.start < 0 || inst.start > inst.end ||
          inst.end >= static_cast<int>(inst.ids.size())) {
        throw ConfigError(path + ":" + std::to_string(number) + ": span out of range");
      }
      out.push_back(std::move(inst));
    } catch (const json::exception &e) {
      throw ConfigError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

RestrictedReport restricted_linking_accuracy(
    const KnowledgeModel &model, int kb,
    const std::vector<RestrictedInstance> &instances) {
  RestrictedReport report;
  for (const RestrictedInstance &inst : instances) {
    if (std::find(inst.allowed.begin(), inst.allowed.end(), inst.gold) ==
        inst.allowed.end()) {
      ++report.invalid;
      continue;
    }
    EncoderInput input = frame_pair(model, inst.ids, {});
    std::vector<CandidateSpan> &spans = input.candidates[kb].spans;
    const int start = inst.start + 1, end = inst.end + 1;
    auto it = std::find_if(spans.begin(), spans.end(), [&](const CandidateSpan &s) {
      return s.start == start && s.end == end;
    });
    std::vector<Candidate> kept;
    if (it != spans.end()) {
      for (const Candidate &c : it->candidates) {
        if (std::find(inst.allowed.begin(), inst.allowed.end(), c.entity) !=
            inst.allowed.end()) {
          kept.push_back(c);
        }
      }
    }
    if (kept.empty()) {
      for (int e : inst.allowed) {
        kept.push_back({e, 1.0 / static_cast<double>(inst.allowed.size())});
      }
    }
    if (it == spans.end()) {
      CandidateSpan span{start, end, {}};
      it = spans.insert(std::upper_bound(spans.begin(), spans.end(), span,
                                         [](const CandidateSpan &a, const CandidateSpan &b) {
                                           return std::pair(a.start, a.end) <
                                                  std::pair(b.start, b.end);
                                         }),
                        span);
    }
    it->candidates = kept;
    const int m = static_cast<int>(it - spans.begin());

    Tape tape;
    EncoderState state = encode(tape, model, input, nullptr, model.slot(kb).layer);
    const Matrix &psi = state.kar[kb]->activations.psi[m].value();
    const int predicted = kept[argmax_column(psi)].entity;
    ++report.total;
    if (predicted == inst.gold) ++report.correct;
  }
  report.accuracy =
      report.total > 0 ? static_cast<double>(report.correct) / report.total : 0.0;
  return report;
}

// ---------------------------------------------------------------------------

Report make_report(const std::string &metric, double value, const json &extra,
                   uint64_t seed, const std::string &config_hash) {
  Report r;
  r.json = extra.is_object() ? extra : json::object();
  r.json["metric"] = metric;
  r.json["value"] = value;
  r.json["seed"] = seed;
  r.json["config_hash"] = config_hash;

  std::ostringstream text;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-24s %.6f\n", metric.c_str(), value);
  text << buf;
  for (const auto &[key, v] : extra.items()) {
    if (v.is_number()) {
      std::snprintf(buf, sizeof(buf), "%-24s %.6f\n", key.c_str(), v.get<double>());
      text << buf;
    } else if (v.is_object()) {
      text << key << ":\n";
      for (const auto &[name, x] : v.items()) {
        if (!x.is_number()) continue;
        std::snprintf(buf, sizeof(buf), "  %-22s %.6f\n", name.c_str(), x.get<double>());
        text << buf;
      }
    }
  }
  text << "seed " << seed << "  config " << config_hash << "\n";
  r.text = text.str();
  return r;
}

}  // namespace karlm
