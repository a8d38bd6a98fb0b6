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

// Knowledge bases: entity table with frozen embeddings, the alias
// dictionary used as candidate selector, and candidate mention lists.

#ifndef KARLM_KB_H_
#define KARLM_KB_H_

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "karlm/tensor.h"
#include "karlm/vocab.h"

namespace karlm {

// Malformed KB input. what() names the file and line.
class KbParseError : public std::runtime_error {
 public:
  enum class Kind {
    kSyntax,
    kDuplicateId,
    kDimension,
    kPriorRange,
    kUnknownEntity,
    kDuplicateMention,
  };

  KbParseError(Kind kind, const std::string &file, int line,
               const std::string &message)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + message),
        kind_(kind),
        file_(file),
        line_(line) {}

  Kind kind() const { return kind_; }
  const std::string &file() const { return file_; }
  int line() const { return line_; }

 private:
  Kind kind_;
  std::string file_;
  int line_;
};

struct Candidate {
  int entity = -1;
  double prior = 0.0;
};

// Word-piece indices are inclusive on both ends.
struct CandidateSpan {
  int start = 0;
  int end = 0;
  std::vector<Candidate> candidates;
};

struct CandidateList {
  std::vector<CandidateSpan> spans;
  int size() const { return static_cast<int>(spans.size()); }
  bool empty() const { return spans.empty(); }
};

struct SelectorConfig {
  int max_mention_length = 5;  // in word pieces
  int max_candidates = 30;
  bool add_null = true;
  double null_prior_floor = 0.01;
};

// Normalized mention -> candidates sorted by descending prior.
class CandidateDictionary {
 public:
  // Returns false if the mention is already present.
  bool insert(std::string mention, std::vector<Candidate> candidates,
              int max_candidates);
  const std::vector<Candidate> *lookup(const std::string &mention) const;
  int size() const { return static_cast<int>(entries_.size()); }
  const std::unordered_map<std::string, std::vector<Candidate>> &entries()
      const {
    return entries_;
  }

 private:
  std::unordered_map<std::string, std::vector<Candidate>> entries_;
};

struct DictionaryEntry {
  std::string mention;
  std::vector<Candidate> candidates;
};

// Immutable after construction. Real entities are 0..K-1; the NULL and MASK
// entities take ids K and K+1 and have trainable rows owned by the model.
class KnowledgeBase {
 public:
  static constexpr int kDefaultMaxCandidates = 30;

  // Validates and normalizes everything; throws KbParseError with file
  // "<memory>" and the 1-based dictionary entry as line.
  static KnowledgeBase build(std::string name, std::vector<std::string> names,
                             Matrix embeddings,
                             const std::vector<DictionaryEntry> &dictionary,
                             std::unordered_map<std::string, std::string> lemmas,
                             SelectorConfig selector = {});

  // entity_file: JSONL {id, name}. embedding_file: "K E" header then K rows.
  // dictionary_file: JSONL {mention, candidates: [[id, prior], ...]}.
  // lemma_file (optional): JSONL {surface, lemma}.
  static KnowledgeBase load(std::string name, const std::string &entity_file,
                            const std::string &embedding_file,
                            const std::string &dictionary_file,
                            const std::string &lemma_file = "",
                            SelectorConfig selector = {});

  const std::string &name() const { return name_; }
  int entity_count() const { return static_cast<int>(names_.size()); }
  int embedding_dim() const { return static_cast<int>(embeddings_.cols()); }
  int null_id() const { return entity_count(); }
  int mask_id() const { return entity_count() + 1; }
  // Real entities plus the two reserved rows.
  int table_rows() const { return entity_count() + 2; }

  const Matrix &embeddings() const { return embeddings_; }
  const std::string &entity_name(int id) const;
  const CandidateDictionary &dictionary() const { return dictionary_; }
  const SelectorConfig &selector() const { return selector_; }

  // Lowercase, then per-word lemma substitution.
  std::string normalize(std::string_view surface) const;

 private:
  std::string name_;
  std::vector<std::string> names_;
  Matrix embeddings_;
  CandidateDictionary dictionary_;
  std::unordered_map<std::string, std::string> lemmas_;
  SelectorConfig selector_;
};

// Scans word-aligned n-grams of up to max_mention_length pieces, looks up the
// normalized surface and emits one span per hit, ordered by (start, end).
// Reserved tokens never participate in a mention.
CandidateList select_candidates(std::span<const int> pieces,
                                const Vocabulary &vocab,
                                const KnowledgeBase &kb);

// Rowwise linear map of a raw (frozen) entity table: raw * proj. The tape
// version keeps `raw` constant and lets gradients reach `proj` only.
Matrix project_entity_embeddings(const Matrix &raw, const Matrix &proj);
Tensor2 project_entity_embeddings(Tensor2 raw, Tensor2 proj);

}  // namespace karlm

#endif  // KARLM_KB_H_
