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

#include "karlm/kb.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "karlm/ops.h"

namespace karlm {

using json = nlohmann::json;
using Kind = KbParseError::Kind;

namespace {

constexpr double kPriorSlack = 1e-6;
const char kMemory[] = "<memory>";

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char &c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void sort_candidates(std::vector<Candidate> &c) {
  std::stable_sort(c.begin(), c.end(), [](const Candidate &a, const Candidate &b) {
    if (a.prior != b.prior) return a.prior > b.prior;
    return a.entity < b.entity;
  });
}

// Validates one dictionary entry against an entity count of k.
void check_entry(const std::vector<Candidate> &candidates, int k,
                 const std::string &file, int line) {
  double total = 0.0;
  for (const Candidate &c : candidates) {
    if (c.entity < 0 || c.entity >= k) {
      throw KbParseError(Kind::kUnknownEntity, file, line,
                         "candidate entity id " + std::to_string(c.entity) +
                             " not in [0, " + std::to_string(k) + ")");
    }
    if (!(c.prior >= 0.0 && c.prior <= 1.0)) {
      std::ostringstream os;
      os << "prior " << c.prior << " outside [0, 1]";
      throw KbParseError(Kind::kPriorRange, file, line, os.str());
    }
    total += c.prior;
  }
  if (total > 1.0 + kPriorSlack) {
    std::ostringstream os;
    os << "priors sum to " << total << " > 1";
    throw KbParseError(Kind::kPriorRange, file, line, os.str());
  }
}

std::vector<json> read_jsonl(const std::string &path,
                             std::vector<int> *line_numbers) {
  std::ifstream in(path);
  if (!in) throw KbParseError(Kind::kSyntax, path, 0, "cannot open file");
  std::vector<json> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception &e) {
      throw KbParseError(Kind::kSyntax, path, number, e.what());
    }
    line_numbers->push_back(number);
  }
  return out;
}

}  // namespace

bool CandidateDictionary::insert(std::string mention,
                                 std::vector<Candidate> candidates,
                                 int max_candidates) {
  sort_candidates(candidates);
  if (static_cast<int>(candidates.size()) > max_candidates) {
    candidates.resize(max_candidates);
  }
  return entries_.emplace(std::move(mention), std::move(candidates)).second;
}

const std::vector<Candidate> *CandidateDictionary::lookup(
    const std::string &mention) const {
  auto it = entries_.find(mention);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string KnowledgeBase::normalize(std::string_view surface) const {
  std::string lowered = lowercase(surface);
  if (lemmas_.empty()) return lowered;
  std::string out;
  std::istringstream words(lowered);
  std::string word;
  while (words >> word) {
    auto it = lemmas_.find(word);
    if (!out.empty()) out.push_back(' ');
    out += it == lemmas_.end() ? word : it->second;
  }
  return out;
}

const std::string &KnowledgeBase::entity_name(int id) const {
  static const std::string kNull = "NULL";
  static const std::string kMask = "[MASK]";
  if (id == null_id()) return kNull;
  if (id == mask_id()) return kMask;
  if (id < 0 || id > mask_id()) {
    throw std::out_of_range("unknown entity id " + std::to_string(id));
  }
  return names_[id];
}

KnowledgeBase KnowledgeBase::build(
    std::string name, std::vector<std::string> names, Matrix embeddings,
    const std::vector<DictionaryEntry> &dictionary,
    std::unordered_map<std::string, std::string> lemmas,
    SelectorConfig selector) {
  KnowledgeBase kb;
  kb.name_ = std::move(name);
  kb.names_ = std::move(names);
  kb.selector_ = selector;
  const int k = static_cast<int>(kb.names_.size());
  if (embeddings.rows() != k) {
    throw KbParseError(Kind::kDimension, kMemory, 0,
                       "embedding table has " +
                           std::to_string(embeddings.rows()) + " rows for " +
                           std::to_string(k) + " entities");
  }
  kb.embeddings_ = std::move(embeddings);
  for (auto &[surface, lemma] : lemmas) {
    kb.lemmas_.emplace(lowercase(surface), lowercase(lemma));
  }
  for (size_t i = 0; i < dictionary.size(); ++i) {
    const int line = static_cast<int>(i) + 1;
    check_entry(dictionary[i].candidates, k, kMemory, line);
    if (!kb.dictionary_.insert(kb.normalize(dictionary[i].mention),
                               dictionary[i].candidates,
                               selector.max_candidates)) {
      throw KbParseError(Kind::kDuplicateMention, kMemory, line,
                         "duplicate mention '" + dictionary[i].mention + "'");
    }
  }
  return kb;
}

KnowledgeBase KnowledgeBase::load(std::string name,
                                  const std::string &entity_file,
                                  const std::string &embedding_file,
                                  const std::string &dictionary_file,
                                  const std::string &lemma_file,
                                  SelectorConfig selector) {
  KnowledgeBase kb;
  kb.name_ = std::move(name);
  kb.selector_ = selector;

  // Entities: ids must be unique and dense.
  std::vector<int> lines;
  std::vector<json> records = read_jsonl(entity_file, &lines);
  std::vector<std::string> names(records.size());
  std::vector<bool> seen(records.size(), false);
  const int k = static_cast<int>(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    int id;
    std::string entity_name;
    try {
      id = records[i].at("id").get<int>();
      entity_name = records[i].at("name").get<std::string>();
    } catch (const json::exception &e) {
      throw KbParseError(Kind::kSyntax, entity_file, lines[i], e.what());
    }
    if (id < 0 || id >= k) {
      throw KbParseError(Kind::kSyntax, entity_file, lines[i],
                         "entity id " + std::to_string(id) +
                             " outside dense range [0, " + std::to_string(k) +
                             ")");
    }
    if (seen[id]) {
      throw KbParseError(Kind::kDuplicateId, entity_file, lines[i],
                         "duplicate entity id " + std::to_string(id));
    }
    seen[id] = true;
    names[id] = std::move(entity_name);
  }
  kb.names_ = std::move(names);

  // Embeddings.
  {
    std::ifstream in(embedding_file);
    if (!in) throw KbParseError(Kind::kSyntax, embedding_file, 0, "cannot open file");
    std::string line;
    int number = 0;
    long rows = -1, cols = -1;
    while (std::getline(in, line)) {
      ++number;
      if (line.find_first_not_of(" \t\r") != std::string::npos) break;
    }
    std::istringstream header(line);
    if (!(header >> rows >> cols) || rows < 0 || cols <= 0) {
      throw KbParseError(Kind::kSyntax, embedding_file, number,
                         "expected header 'K E'");
    }
    if (rows != k) {
      throw KbParseError(Kind::kDimension, embedding_file, number,
                         "header declares " + std::to_string(rows) +
                             " rows but " + std::to_string(k) +
                             " entities were loaded");
    }
    kb.embeddings_.resize(rows, cols);
    long row = 0;
    while (std::getline(in, line)) {
      ++number;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      if (row >= rows) {
        throw KbParseError(Kind::kDimension, embedding_file, number,
                           "more than " + std::to_string(rows) + " rows");
      }
      std::istringstream values(line);
      std::vector<double> parsed;
      std::string token;
      while (values >> token) {
        try {
          size_t used = 0;
          double v = std::stod(token, &used);
          if (used != token.size() || !std::isfinite(v)) throw std::invalid_argument(token);
          parsed.push_back(v);
        } catch (const std::exception &) {
          throw KbParseError(Kind::kSyntax, embedding_file, number,
                             "bad embedding value '" + token + "'");
        }
      }
      if (static_cast<long>(parsed.size()) != cols) {
        throw KbParseError(Kind::kDimension, embedding_file, number,
                           "row " + std::to_string(row) + " has " +
                               std::to_string(parsed.size()) + " values, expected " +
                               std::to_string(cols));
      }
      for (long col = 0; col < cols; ++col) kb.embeddings_(row, col) = parsed[col];
      ++row;
    }
    if (row != rows) {
      throw KbParseError(Kind::kDimension, embedding_file, number,
                         "expected " + std::to_string(rows) + " rows, found " +
                             std::to_string(row));
    }
  }

  if (!lemma_file.empty()) {
    std::vector<int> lemma_lines;
    for (const json &r : read_jsonl(lemma_file, &lemma_lines)) {
      try {
        kb.lemmas_.emplace(lowercase(r.at("surface").get<std::string>()),
                           lowercase(r.at("lemma").get<std::string>()));
      } catch (const json::exception &e) {
        throw KbParseError(Kind::kSyntax, lemma_file,
                           lemma_lines[kb.lemmas_.size()], e.what());
      }
    }
  }

  lines.clear();
  records = read_jsonl(dictionary_file, &lines);
  for (size_t i = 0; i < records.size(); ++i) {
    std::string mention;
    std::vector<Candidate> candidates;
    try {
      mention = records[i].at("mention").get<std::string>();
      for (const json &pair : records[i].at("candidates")) {
        if (!pair.is_array() || pair.size() != 2) {
          throw KbParseError(Kind::kSyntax, dictionary_file, lines[i],
                             "candidate must be [id, prior]");
        }
        candidates.push_back({pair[0].get<int>(), pair[1].get<double>()});
      }
    } catch (const json::exception &e) {
      throw KbParseError(Kind::kSyntax, dictionary_file, lines[i], e.what());
    }
    check_entry(candidates, k, dictionary_file, lines[i]);
    if (!kb.dictionary_.insert(kb.normalize(mention), std::move(candidates),
                               selector.max_candidates)) {
      throw KbParseError(Kind::kDuplicateMention, dictionary_file, lines[i],
                         "duplicate mention '" + mention + "'");
    }
  }
  return kb;
}

CandidateList select_candidates(std::span<const int> pieces,
                                const Vocabulary &vocab,
                                const KnowledgeBase &kb) {
  const SelectorConfig &cfg = kb.selector();

  // Word boundaries: [first piece, last piece] of each word. Reserved tokens
  // are never part of a word.
  struct Word {
    int first, last;
    std::string text;
  };
  std::vector<Word> words;
  for (int i = 0; i < static_cast<int>(pieces.size()); ++i) {
    const int id = pieces[i];
    if (vocab.is_reserved(id)) continue;
    const std::string &p = vocab.piece(id);
    if (vocab.is_continuation(id) && !words.empty() && words.back().last == i - 1) {
      words.back().last = i;
      words.back().text += p.substr(2);
    } else {
      words.push_back({i, i, p});
    }
  }

  CandidateList out;
  for (size_t w = 0; w < words.size(); ++w) {
    std::string surface;
    for (size_t v = w; v < words.size(); ++v) {
      if (v > w && words[v].first != words[v - 1].last + 1) break;
      if (words[v].last - words[w].first + 1 > cfg.max_mention_length) break;
      if (v > w) surface.push_back(' ');
      surface += words[v].text;
      const std::vector<Candidate> *hit = kb.dictionary().lookup(kb.normalize(surface));
      if (hit == nullptr) continue;
      CandidateSpan span;
      span.start = words[w].first;
      span.end = words[v].last;
      span.candidates.assign(
          hit->begin(),
          hit->begin() + std::min<size_t>(hit->size(), cfg.max_candidates));
      if (cfg.add_null) {
        double mass = 0.0;
        for (const Candidate &c : span.candidates) mass += c.prior;
        span.candidates.push_back(
            {kb.null_id(), std::max(1.0 - mass, cfg.null_prior_floor)});
      }
      out.spans.push_back(std::move(span));
    }
  }
  return out;
}

Matrix project_entity_embeddings(const Matrix &raw, const Matrix &proj) {
  if (raw.cols() != proj.rows()) {
    throw DimensionError("project_entity_embeddings: raw " + shape_string(raw) +
                         " vs projection " + shape_string(proj));
  }
  return raw * proj;
}

Tensor2 project_entity_embeddings(Tensor2 raw, Tensor2 proj) {
  if (raw.cols() != proj.rows()) {
    throw DimensionError("project_entity_embeddings: raw " +
                         shape_string(raw.value()) + " vs projection " +
                         shape_string(proj.value()));
  }
  return matmul(raw, proj);
}

}  // namespace karlm
