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

#ifndef KARLM_VOCAB_H_
#define KARLM_VOCAB_H_

#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace karlm {

class VocabularyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Word-piece vocabulary. Ids are dense line numbers; continuation pieces
// carry a "##" prefix.
class Vocabulary {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kUnk = "[UNK]";
  static constexpr std::string_view kCls = "[CLS]";
  static constexpr std::string_view kSep = "[SEP]";
  static constexpr std::string_view kMask = "[MASK]";

  Vocabulary() = default;

  // Every reserved token must appear exactly once; duplicates are rejected.
  static Vocabulary from_pieces(std::vector<std::string> pieces);
  // One piece per line, line number = id.
  static Vocabulary load(const std::string &path);
  void save(const std::string &path) const;

  int size() const { return static_cast<int>(pieces_.size()); }
  // -1 when absent.
  int id(std::string_view piece) const;
  const std::string &piece(int id) const;
  bool is_reserved(int id) const;
  bool is_continuation(int id) const;

  int pad() const { return pad_; }
  int unk() const { return unk_; }
  int cls() const { return cls_; }
  int sep() const { return sep_; }
  int mask() const { return mask_; }

  const std::vector<std::string> &pieces() const { return pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> ids_;
  int pad_ = -1, unk_ = -1, cls_ = -1, sep_ = -1, mask_ = -1;
};

// Lowercases, splits on whitespace and punctuation, then segments each word
// by greedy longest-match. A word with no complete segmentation becomes a
// single [UNK].
std::vector<int> tokenize(std::string_view text, const Vocabulary &vocab);

// Same segmentation for one pre-split word.
std::vector<int> tokenize_word(std::string_view word, const Vocabulary &vocab);

// Joins pieces back into surface text ("adi", "##das" -> "adidas").
std::string detokenize(const std::vector<int> &ids, const Vocabulary &vocab);

}  // namespace karlm

#endif  // KARLM_VOCAB_H_
