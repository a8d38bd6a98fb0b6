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

#include "karlm/synth.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace karlm {

using nlohmann::json;

namespace {

struct Relation {
  const char *name;
  const char *text;
};

constexpr Relation kRelations[] = {
    {"founded_by", "SUBJ was founded by OBJ ."},
    {"located_in", "SUBJ is located in OBJ ."},
    {"born_in", "SUBJ was born in OBJ ."},
    {"employer", "SUBJ works for OBJ ."},
    {"member_of", "SUBJ is a member of OBJ ."},
    {"plays_for", "SUBJ plays for OBJ ."},
    {"capital", "the capital of SUBJ is OBJ ."},
    {"language", "people in SUBJ speak OBJ ."},
    {"author", "SUBJ was written by OBJ ."},
    {"owned_by", "SUBJ is owned by OBJ ."},
    {"died_in", "SUBJ died in OBJ ."},
    {"spouse", "SUBJ is married to OBJ ."},
    {"educated_at", "SUBJ studied at OBJ ."},
    {"director", "SUBJ was directed by OBJ ."},
    {"parent", "OBJ is the parent of SUBJ ."},
    {"genre", "SUBJ plays OBJ music ."},
    {"manufacturer", "SUBJ is made by OBJ ."},
    {"citizenship", "SUBJ is a citizen of OBJ ."},
    {"religion", "SUBJ follows OBJ ."},
    {"instrument", "SUBJ plays the OBJ ."},
};
constexpr int kNamedRelations = sizeof(kRelations) / sizeof(kRelations[0]);

constexpr const char *kSuffixes[] = {"ra", "to", "vik", "sen", "dor", "mi", "lu", "ka"};

// Pronounceable pseudo-words made of consonant-vowel syllables.
class NameMaker {
 public:
  NameMaker(Rng &rng, std::set<std::string> &used) : rng_(rng), used_(used) {}

  std::string make(int syllables) {
    static const std::string consonants = "bdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    for (;;) {
      std::string w;
      for (int s = 0; s < syllables; ++s) {
        w += consonants[uniform_index(rng_, consonants.size())];
        w += vowels[uniform_index(rng_, vowels.size())];
      }
      if (used_.insert(w).second) return w;
    }
  }

 private:
  Rng &rng_;
  std::set<std::string> &used_;
};

std::vector<std::string> split_words(const std::string &text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::string fill(const std::string &templ, const std::string &subject,
                 const std::string &object) {
  std::string out;
  for (const std::string &w : split_words(templ)) {
    if (!out.empty()) out += ' ';
    out += w == "SUBJ" ? subject : w == "OBJ" ? object : w;
  }
  return out;
}

std::vector<std::string> with_reserved(const std::set<std::string> &words) {
  std::vector<std::string> v = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  v.insert(v.end(), words.begin(), words.end());
  return v;
}

void write_text(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

void SynthFactsConfig::validate() const {
  auto fail = [](const std::string &m) { throw std::invalid_argument("synth: " + m); };
  if (relations < 1) fail("need at least one relation");
  if (objects < 2) fail("need at least two objects");
  if (facts < relations) fail("facts must be at least the number of relations");
  if (heldout <= 0 || heldout >= 1) fail("heldout must be a fraction in (0, 1)");
  const int held = static_cast<int>(facts * heldout);
  if (held < 1) fail("no held-out facts at this size");
  if (facts - held < objects) {
    fail("every object needs a training fact: facts - heldout < objects");
  }
  if (multiplicity < 1) fail("multiplicity must be positive");
  if (entity_dim < 1) fail("entity_dim must be positive");
  if (prior <= 0 || prior > 1) fail("prior must be in (0, 1]");
  if (two_piece < 0 || two_piece > 1) fail("two_piece must be a fraction");
}

SynthFacts synth_facts_benchmark(const SynthFactsConfig &config) {
  config.validate();
  SynthFacts out;
  std::set<std::string> used;

  // Relation templates, with invented verbs beyond the named ones.
  Rng name_rng = substream(config.seed, "synth.names");
  NameMaker names(name_rng, used);
  std::vector<std::pair<std::string, std::string>> relations;
  std::set<std::string> template_words;
  for (int r = 0; r < config.relations; ++r) {
    if (r < kNamedRelations) {
      relations.emplace_back(kRelations[r].name, kRelations[r].text);
    } else {
      const std::string verb = names.make(3);
      relations.emplace_back("rel_" + verb, "SUBJ " + verb + " OBJ .");
    }
    for (const std::string &w : split_words(relations.back().second)) {
      if (w != "SUBJ" && w != "OBJ") template_words.insert(w);
    }
  }
  for (const std::string &w : template_words) used.insert(w);
  for (const char *s : kSuffixes) used.insert(s);

  std::set<std::string> vocab_words = template_words;
  // Subjects, some split into a stem and a continuation piece.
  const int two_piece = static_cast<int>(config.facts * config.two_piece);
  for (int f = 0; f < config.facts; ++f) {
    if (f < two_piece) {
      const std::string stem = names.make(2);
      const std::string suffix = kSuffixes[f % std::size(kSuffixes)];
      std::string word = stem + suffix;
      if (!used.insert(word).second) {
        --f;  // collision with an existing word; draw again
        continue;
      }
      vocab_words.insert(stem);
      vocab_words.insert("##" + suffix);
      out.entity_names.push_back(word);
    } else {
      const std::string word = names.make(3);
      vocab_words.insert(word);
      out.entity_names.push_back(word);
    }
  }
  for (int o = 0; o < config.objects; ++o) {
    const std::string word = names.make(2);
    vocab_words.insert(word);
    out.entity_names.push_back(word);
  }
  out.vocab = with_reserved(vocab_words);
  const Vocabulary vocab = Vocabulary::from_pieces(out.vocab);

  // Facts: subject f, relation f mod R. Training objects cycle through the
  // pool so every object is learnable; held-out objects are uniform.
  Rng fact_rng = substream(config.seed, "synth.facts");
  std::vector<int> order(config.facts);
  for (int f = 0; f < config.facts; ++f) order[f] = f;
  for (int i = config.facts - 1; i > 0; --i) {
    std::swap(order[i], order[uniform_index(fact_rng, i + 1)]);
  }
  const int held = static_cast<int>(config.facts * config.heldout);
  std::vector<int> object_of(config.facts);
  std::vector<bool> is_held(config.facts, false);
  for (int i = 0; i < config.facts; ++i) {
    const int f = order[i];
    if (i < held) {
      is_held[f] = true;
      object_of[f] = static_cast<int>(uniform_index(fact_rng, config.objects));
    } else {
      object_of[f] = (i - held) % config.objects;
    }
  }

  // Embeddings: objects get random codes; subjects copy their object's code.
  Rng emb_rng = substream(config.seed, "synth.embeddings");
  const Matrix codes = random_normal(config.objects, config.entity_dim, 1.0, emb_rng);
  out.embeddings.resize(config.facts + config.objects, config.entity_dim);
  for (int f = 0; f < config.facts; ++f) out.embeddings.row(f) = codes.row(object_of[f]);
  for (int o = 0; o < config.objects; ++o) out.embeddings.row(config.facts + o) = codes.row(o);

  for (int e = 0; e < static_cast<int>(out.entity_names.size()); ++e) {
    out.dictionary.push_back({out.entity_names[e], {{e, config.prior}}});
  }

  std::vector<std::string> train_sentences;
  for (int f = 0; f < config.facts; ++f) {
    const auto &[rel, templ] = relations[f % config.relations];
    ProbeTuple tuple{rel, templ, out.entity_names[f],
                     out.entity_names[config.facts + object_of[f]]};
    const std::string sentence = fill(templ, tuple.subject, tuple.object);
    if (is_held[f]) {
      out.probes.push_back(tuple);
      out.heldout_sentences.push_back({sentence, "", true});
      continue;
    }
    out.train_facts.push_back(tuple);
    train_sentences.push_back(sentence);

    // EL supervision: both mentions of the sentence.
    ProbeInstance inst = make_probe_instance(vocab, tuple, ProbeSide::kObject);
    SupervisionRecord sup;
    std::vector<int> ids = inst.ids;
    for (size_t k = 0; k < inst.positions.size(); ++k) ids[inst.positions[k]] = inst.gold[k];
    for (int id : ids) sup.pieces.push_back(vocab.piece(id));
    const std::vector<int> subj = tokenize(tuple.subject, vocab);
    for (int i = 0; i + static_cast<int>(subj.size()) <= static_cast<int>(ids.size()); ++i) {
      if (std::equal(subj.begin(), subj.end(), ids.begin() + i)) {
        sup.spans.emplace_back(i, i + static_cast<int>(subj.size()) - 1);
        sup.gold.push_back(f);
        break;
      }
    }
    sup.spans.emplace_back(inst.positions.front(), inst.positions.back());
    sup.gold.push_back(config.facts + object_of[f]);
    if (sup.spans.size() == 2 && sup.spans[0].first > sup.spans[1].first) {
      std::swap(sup.spans[0], sup.spans[1]);
      std::swap(sup.gold[0], sup.gold[1]);
    }
    out.supervision.push_back(std::move(sup));
  }

  // Corpus: copies of the training sentences shuffled into documents of four;
  // half of the pairs continue the document, half jump to another one.
  Rng corpus_rng = substream(config.seed, "synth.corpus");
  std::vector<int> pool;
  for (int c = 0; c < config.multiplicity; ++c) {
    for (int s = 0; s < static_cast<int>(train_sentences.size()); ++s) pool.push_back(s);
  }
  for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i) {
    std::swap(pool[i], pool[uniform_index(corpus_rng, i + 1)]);
  }
  constexpr int kDoc = 4;
  const int n = static_cast<int>(pool.size());
  for (int i = 0; i < n; ++i) {
    const int doc = i / kDoc;
    PairRecord rec;
    rec.sent_a = train_sentences[pool[i]];
    if (uniform01(corpus_rng) < 0.5) {
      const int first = doc * kDoc;
      const int next = (i + 1 < std::min(n, first + kDoc)) ? i + 1 : first;
      rec.sent_b = train_sentences[pool[next]];
      rec.is_next = true;
    } else {
      int other = static_cast<int>(uniform_index(corpus_rng, n));
      while (other / kDoc == doc && n > kDoc) {
        other = static_cast<int>(uniform_index(corpus_rng, n));
      }
      rec.sent_b = train_sentences[pool[other]];
      rec.is_next = false;
    }
    out.corpus.push_back(std::move(rec));
  }

  out.manifest = {{"seed", config.seed},
                  {"relations", config.relations},
                  {"facts", config.facts},
                  {"heldout_facts", held},
                  {"objects", config.objects},
                  {"entities", static_cast<int>(out.entity_names.size())},
                  {"multiplicity", config.multiplicity},
                  {"entity_dim", config.entity_dim},
                  {"prior", config.prior},
                  {"two_piece", config.two_piece},
                  {"corpus_pairs", static_cast<int>(out.corpus.size())},
                  {"vocab_size", static_cast<int>(out.vocab.size())},
                  {"supervision", static_cast<int>(out.supervision.size())}};
  return out;
}

void write_kb_files(const std::string &dir, const std::vector<std::string> &names,
                    const Matrix &embeddings,
                    const std::vector<DictionaryEntry> &dictionary) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::string entities;
  for (size_t i = 0; i < names.size(); ++i) {
    entities += json{{"id", i}, {"name", names[i]}}.dump() + "\n";
  }
  write_text(fs::path(dir) / "entities.jsonl", entities);

  std::string table = std::to_string(embeddings.rows()) + " " +
                      std::to_string(embeddings.cols()) + "\n";
  char buf[40];
  for (int r = 0; r < embeddings.rows(); ++r) {
    for (int c = 0; c < embeddings.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", embeddings(r, c));
      if (c > 0) table += ' ';
      table += buf;
    }
    table += '\n';
  }
  write_text(fs::path(dir) / "embeddings.txt", table);

  std::string dict;
  for (const DictionaryEntry &e : dictionary) {
    json cands = json::array();
    for (const Candidate &c : e.candidates) cands.push_back({c.entity, c.prior});
    dict += json{{"mention", e.mention}, {"candidates", cands}}.dump() + "\n";
  }
  write_text(fs::path(dir) / "dictionary.jsonl", dict);
}

namespace {

// Synthetic golds are all real entities, so no NULL needs translating.
std::string supervision_text(const std::vector<SupervisionRecord> &records) {
  std::string out;
  for (const SupervisionRecord &r : records) {
    json spans = json::array();
    for (auto [a, b] : r.spans) spans.push_back({a, b});
    out += json{{"pieces", r.pieces}, {"spans", spans}, {"gold", r.gold}}.dump() + "\n";
  }
  return out;
}

}  // namespace

void write_synth_facts(const std::string &dir, const SynthFacts &data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  std::string vocab;
  for (const std::string &p : data.vocab) vocab += p + "\n";
  write_text(root / "vocab.txt", vocab);
  write_kb_files((root / "kb").string(), data.entity_names, data.embeddings,
                 data.dictionary);
  save_corpus((root / "corpus.jsonl").string(), data.corpus);
  save_corpus((root / "heldout.jsonl").string(), data.heldout_sentences);
  save_probes((root / "probes.jsonl").string(), data.probes);
  save_probes((root / "train_facts.jsonl").string(), data.train_facts);

  write_text(root / "supervision.jsonl", supervision_text(data.supervision));
  write_text(root / "manifest.json", data.manifest.dump(2) + "\n");
}

void SynthLinkingConfig::validate() const {
  auto fail = [](const std::string &m) { throw std::invalid_argument("synth: " + m); };
  if (groups < 1 || senses < 2) fail("need groups >= 1 and senses >= 2");
  if (train_per_entity < 1 || test_per_entity < 1) fail("need examples per entity");
  if (fillers < 4) fail("need at least four filler words");
  if (entity_dim < 1) fail("entity_dim must be positive");
}

SynthLinking synth_linking_set(const SynthLinkingConfig &config) {
  config.validate();
  SynthLinking out;
  std::set<std::string> used;
  Rng name_rng = substream(config.seed, "link.names");
  NameMaker names(name_rng, used);

  std::vector<std::string> mentions, cues, fillers;
  std::set<std::string> words = {"."};
  for (int g = 0; g < config.groups; ++g) mentions.push_back(names.make(3));
  for (int k = 0; k < config.groups * config.senses; ++k) cues.push_back(names.make(2));
  for (int i = 0; i < config.fillers; ++i) fillers.push_back(names.make(2) + "s");
  words.insert(mentions.begin(), mentions.end());
  words.insert(cues.begin(), cues.end());
  words.insert(fillers.begin(), fillers.end());
  out.vocab = with_reserved(words);

  // Priors: a random permutation of a fixed descending profile per group.
  Rng prior_rng = substream(config.seed, "link.priors");
  std::vector<double> profile;
  double mass = 0.0;
  for (int s = 0; s < config.senses; ++s) {
    profile.push_back(1.0 / (s + 2));
    mass += profile.back();
  }
  for (double &p : profile) p *= 0.9 / mass;
  for (int g = 0; g < config.groups; ++g) {
    std::vector<double> priors = profile;
    for (int i = config.senses - 1; i > 0; --i) {
      std::swap(priors[i], priors[uniform_index(prior_rng, i + 1)]);
    }
    DictionaryEntry entry{mentions[g], {}};
    for (int s = 0; s < config.senses; ++s) {
      const int id = g * config.senses + s;
      out.entity_names.push_back(mentions[g] + "_" + cues[id]);
      entry.candidates.push_back({id, priors[s]});
    }
    out.dictionary.push_back(std::move(entry));
  }
  Rng emb_rng = substream(config.seed, "link.embeddings");
  out.embeddings = random_normal(config.groups * config.senses, config.entity_dim, 1.0,
                                 emb_rng);

  // Sentence: fillers, then the cue and the mention in either order with up
  // to two fillers between them, more fillers, full stop.
  auto sentence = [&](Rng &rng, int entity) {
    SupervisionRecord rec;
    auto filler = [&] { rec.pieces.push_back(fillers[uniform_index(rng, fillers.size())]); };
    const int lead = 1 + static_cast<int>(uniform_index(rng, 3));
    for (int i = 0; i < lead; ++i) filler();
    const bool cue_first = uniform01(rng) < 0.5;
    const int gap = static_cast<int>(uniform_index(rng, 3));
    const int group = entity / config.senses;
    if (cue_first) {
      rec.pieces.push_back(cues[entity]);
      for (int i = 0; i < gap; ++i) filler();
    }
    const int at = static_cast<int>(rec.pieces.size());
    rec.pieces.push_back(mentions[group]);
    if (!cue_first) {
      for (int i = 0; i < gap; ++i) filler();
      rec.pieces.push_back(cues[entity]);
    }
    const int tail = static_cast<int>(uniform_index(rng, 3));
    for (int i = 0; i < tail; ++i) filler();
    rec.pieces.push_back(".");
    rec.spans.emplace_back(at, at);
    rec.gold.push_back(entity);
    return rec;
  };

  Rng train_rng = substream(config.seed, "link.train");
  Rng test_rng = substream(config.seed, "link.test");
  const int k_total = config.groups * config.senses;
  for (int r = 0; r < config.train_per_entity; ++r) {
    for (int e = 0; e < k_total; ++e) out.train.push_back(sentence(train_rng, e));
  }
  for (int r = 0; r < config.test_per_entity; ++r) {
    for (int e = 0; e < k_total; ++e) out.test.push_back(sentence(test_rng, e));
  }
  auto text = [](const SupervisionRecord &rec) {
    std::string s;
    for (const std::string &p : rec.pieces) s += (s.empty() ? "" : " ") + p;
    return s;
  };
  Rng corpus_rng = substream(config.seed, "link.corpus");
  for (int r = 0; r < config.train_per_entity; ++r) {
    for (int e = 0; e < k_total; ++e) {
      const bool next = uniform01(corpus_rng) < 0.5;
      const int other = next ? e : static_cast<int>(uniform_index(corpus_rng, k_total));
      const std::string a = text(sentence(corpus_rng, e));
      out.corpus.push_back({a, text(sentence(corpus_rng, other)), next});
    }
  }
  return out;
}

void write_synth_linking(const std::string &dir, const SynthLinkingConfig &config,
                         const SynthLinking &data) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  std::string vocab;
  for (const std::string &p : data.vocab) vocab += p + "\n";
  write_text(root / "vocab.txt", vocab);
  write_kb_files((root / "kb").string(), data.entity_names, data.embeddings,
                 data.dictionary);
  write_text(root / "train.jsonl", supervision_text(data.train));
  write_text(root / "test.jsonl", supervision_text(data.test));
  save_corpus((root / "corpus.jsonl").string(), data.corpus);
  const json manifest = {{"seed", config.seed},
                         {"kind", "linking"},
                         {"groups", config.groups},
                         {"senses", config.senses},
                         {"entities", data.entity_names.size()},
                         {"vocab", data.vocab.size()},
                         {"train", data.train.size()},
                         {"test", data.test.size()},
                         {"corpus_pairs", data.corpus.size()}};
  write_text(root / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace karlm
