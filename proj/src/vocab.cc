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

#include "karlm/vocab.h"

#include <cctype>
#include <fstream>

namespace karlm {

Vocabulary Vocabulary::from_pieces(std::vector<std::string> pieces) {
  Vocabulary v;
  v.pieces_ = std::move(pieces);
  for (size_t i = 0; i < v.pieces_.size(); ++i) {
    const std::string &p = v.pieces_[i];
    if (p.empty()) {
      throw VocabularyError("empty word piece at id " + std::to_string(i));
    }
    if (!v.ids_.emplace(p, static_cast<int>(i)).second) {
      throw VocabularyError("duplicate word piece '" + p + "' at id " +
                            std::to_string(i));
    }
  }
  auto reserved = [&v](std::string_view name) {
    int id = v.id(name);
    if (id < 0) {
      throw VocabularyError("reserved token " + std::string(name) + " missing");
    }
    return id;
  };
  v.pad_ = reserved(kPad);
  v.unk_ = reserved(kUnk);
  v.cls_ = reserved(kCls);
  v.sep_ = reserved(kSep);
  v.mask_ = reserved(kMask);
  return v;
}

Vocabulary Vocabulary::load(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw VocabularyError("cannot open vocabulary " + path);
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pieces.push_back(line);
  }
  return from_pieces(std::move(pieces));
}

void Vocabulary::save(const std::string &path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw VocabularyError("cannot write vocabulary " + path);
  for (const auto &p : pieces_) out << p << '\n';
}

int Vocabulary::id(std::string_view piece) const {
  auto it = ids_.find(std::string(piece));
  return it == ids_.end() ? -1 : it->second;
}

const std::string &Vocabulary::piece(int id) const {
  if (id < 0 || id >= size()) {
    throw VocabularyError("word piece id " + std::to_string(id) +
                          " out of range");
  }
  return pieces_[id];
}

bool Vocabulary::is_reserved(int id) const {
  return id == pad_ || id == unk_ || id == cls_ || id == sep_ || id == mask_;
}

bool Vocabulary::is_continuation(int id) const {
  const std::string &p = piece(id);
  return p.size() > 2 && p[0] == '#' && p[1] == '#';
}

std::vector<int> tokenize_word(std::string_view word, const Vocabulary &vocab) {
  std::vector<int> out;
  size_t start = 0;
  while (start < word.size()) {
    int found = -1;
    size_t end = word.size();
    for (; end > start; --end) {
      std::string candidate(word.substr(start, end - start));
      if (start > 0) candidate = "##" + candidate;
      found = vocab.id(candidate);
      if (found >= 0 && !vocab.is_reserved(found)) break;
      found = -1;
    }
    if (found < 0) return {vocab.unk()};
    out.push_back(found);
    start = end;
  }
  return out;
}

std::vector<int> tokenize(std::string_view text, const Vocabulary &vocab) {
  std::vector<int> out;
  std::string word;
  auto flush = [&]() {
    if (word.empty()) return;
    auto pieces = tokenize_word(word, vocab);
    out.insert(out.end(), pieces.begin(), pieces.end());
    word.clear();
  };
  for (char raw : text) {
    auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      word.push_back(static_cast<char>(c));
      flush();
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<int> &ids, const Vocabulary &vocab) {
  std::string out;
  for (int id : ids) {
    const std::string &p = vocab.piece(id);
    if (vocab.is_continuation(id)) {
      out += p.substr(2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += p;
    }
  }
  return out;
}

}  // namespace karlm
