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

// Fixtures shared by the unit tests and the acceptance runner.

#ifndef KARLM_TESTS_HELPERS_H_
#define KARLM_TESTS_HELPERS_H_

#include <filesystem>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include <unistd.h>

#include "karlm/encoder.h"
#include "karlm/kar.h"
#include "karlm/random.h"
#include "karlm/synth.h"
#include "karlm/training.h"

namespace karlm::testing {

inline Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto &row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

inline double max_abs(const Matrix &a, const Matrix &b) {
  return (a - b).cwiseAbs().maxCoeff();
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string &name) {
    path_ = std::filesystem::temp_directory_path() /
            ("karlm_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string &name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

// Small word-piece vocabulary with a handful of entity names.
inline std::shared_ptr<const Vocabulary> toy_vocab() {
  std::vector<std::string> pieces = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
                                     "the",   "a",     "of",    "in",    "is",
                                     "was",   "born",  "city",  "river", "paris",
                                     "berlin", "new",  "york",  "##er",  "ham",
                                     "lin",   "went",  "to",    "."};
  return std::make_shared<const Vocabulary>(Vocabulary::from_pieces(pieces));
}

// Entities: 0 paris (city), 1 paris (person), 2 berlin, 3 new york, 4 york.
inline std::shared_ptr<const KnowledgeBase> toy_kb(int dim = 4, uint64_t seed = 3,
                                                   int max_mention = 5) {
  Rng rng = substream(seed, "toy.kb");
  Matrix emb = random_normal(5, dim, 1.0, rng);
  std::vector<DictionaryEntry> dict = {
      {"paris", {{0, 0.7}, {1, 0.3}}},
      {"berlin", {{2, 1.0}}},
      {"new york", {{3, 0.9}, {4, 0.1}}},
      {"york", {{4, 0.6}, {3, 0.4}}},
  };
  SelectorConfig sel;
  sel.max_mention_length = max_mention;
  return std::make_shared<const KnowledgeBase>(KnowledgeBase::build(
      "toy", {"Paris_city", "Paris_person", "Berlin", "New_York", "York"}, emb, dict,
      {}, sel));
}

inline EncoderConfig toy_encoder(int layers = 2, int dim = 8, int heads = 2,
                                 int ffn = 12, int max_len = 16) {
  EncoderConfig c;
  c.layers = layers;
  c.dim = dim;
  c.heads = heads;
  c.ffn_dim = ffn;
  c.max_len = max_len;
  return c;
}

inline KarConfig toy_kar(int entity_dim = 4) {
  KarConfig k;
  k.entity_dim = entity_dim;
  k.heads = 2;
  k.ffn_dim = 6;
  k.scorer_hidden = 5;
  k.threshold = -100.0;
  return k;
}

// Model with one KB after layer `layer`.
inline std::unique_ptr<KnowledgeModel> toy_model(uint64_t seed = 1, int layer = 1,
                                                 int layers = 2) {
  auto vocab = toy_vocab();
  EncoderConfig enc = toy_encoder(layers);
  enc.vocab_size = vocab->size();
  enc.insertions = {{layer, "toy"}};
  return std::make_unique<KnowledgeModel>(vocab, enc,
                                          std::vector<KbSpec>{{toy_kb(), toy_kar()}}, seed);
}

inline std::vector<int> ids_of(const Vocabulary &vocab, const std::string &text) {
  return tokenize(text, vocab);
}

// Model plus data for the synthetic linking task; the KB sits after `layer`.
struct LinkSetup {
  std::shared_ptr<const Vocabulary> vocab;
  std::shared_ptr<const KnowledgeBase> kb;
  std::unique_ptr<KnowledgeModel> model;
  TrainingData data;
  std::vector<LinkExample> test;
};

inline LinkSetup link_setup(const SynthLinkingConfig &synth, EncoderConfig enc,
                            int layer, KarConfig kar, uint64_t seed,
                            double validation_fraction = 0.1) {
  SynthLinking set = synth_linking_set(synth);
  LinkSetup s;
  s.vocab = std::make_shared<const Vocabulary>(Vocabulary::from_pieces(set.vocab));
  s.kb = std::make_shared<const KnowledgeBase>(
      KnowledgeBase::build("link", set.entity_names, set.embeddings, set.dictionary, {}));
  enc.vocab_size = s.vocab->size();
  enc.insertions = {{layer, "link"}};
  s.model = std::make_unique<KnowledgeModel>(s.vocab, enc,
                                             std::vector<KbSpec>{{s.kb, kar}}, seed);
  std::vector<LinkExample> all;
  for (const auto &r : set.train) all.push_back(to_link_example(*s.vocab, r));
  const size_t n_val = static_cast<size_t>(all.size() * validation_fraction);
  s.data.validation.emplace_back(all.end() - n_val, all.end());
  all.resize(all.size() - n_val);
  s.data.supervised.push_back(std::move(all));
  for (const auto &r : set.test) s.test.push_back(to_link_example(*s.vocab, r));
  for (const auto &r : set.corpus)
    s.data.unlabeled.push_back(tokenize_pair(*s.vocab, r, enc.max_len));
  return s;
}

// Short sentence pairs over the toy vocabulary.
inline std::vector<PairExample> toy_pairs(const Vocabulary &vocab, int n, uint64_t seed) {
  const std::vector<std::string> sentences = {
      "paris is a city .",       "berlin is a city .",     "the river of paris .",
      "new york is a city .",    "york was a city .",      "hamer went to berlin .",
      "the city of new york .",  "paris was born in berlin .", "a river in york ."};
  Rng rng = substream(seed, "toy.pairs");
  std::vector<PairExample> out;
  for (int i = 0; i < n; ++i) {
    const size_t a = uniform_index(rng, sentences.size());
    const bool next = uniform01(rng) < 0.5;
    const size_t b = next ? (a + 1) % sentences.size() : uniform_index(rng, sentences.size());
    PairExample ex;
    ex.a = tokenize(sentences[a], vocab);
    ex.b = tokenize(sentences[b], vocab);
    ex.is_next = next;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace karlm::testing

#endif  // KARLM_TESTS_HELPERS_H_
