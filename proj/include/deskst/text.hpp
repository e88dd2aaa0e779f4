/* DeskST - a desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 DeskST Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DESKST_TEXT_HPP_
#define DESKST_TEXT_HPP_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "deskst/common.hpp"

namespace deskst {

/// Word-final subwords carry this suffix so detokenization can restore
/// word boundaries.
inline constexpr const char* kWordEnd = "</w>";

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;

/// Lowercase, detach punctuation into separate tokens, collapse whitespace.
/// ASCII-targeted; multi-byte UTF-8 sequences pass through untouched.
std::string normalize_text(const std::string& s);

bool valid_utf8(const std::string& s);

/// Splits a word into UTF-8 code points, e.g. "abc" -> {"a", "b", "c"}.
std::vector<std::string> utf8_chars(const std::string& word);

struct BpeModel {
  // Applied in order; each entry merges one adjacent symbol pair.
  std::vector<std::pair<std::string, std::string>> merges;
};

/// Greedy pair-merge learning over whitespace-tokenized lines. Stops early
/// when no adjacent pair occurs twice. Ties on count go to the
/// lexicographically smallest pair, which pins the learned model for a
/// given corpus.
BpeModel bpe_train(const std::vector<std::string>& lines, int num_merges);

std::vector<std::string> bpe_apply(const BpeModel& model,
                                   const std::string& sentence);

/// Inverse of bpe_apply for sentences over the training character set.
std::string bpe_detokenize(const std::vector<std::string>& tokens);

void save_bpe(const std::string& path, const BpeModel& model);
BpeModel load_bpe(const std::string& path);

struct Vocab {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  int lookup(const std::string& token) const;  // unk id when absent
};

/// Reserved ids first, then the unique corpus symbols in lexicographic order.
Vocab vocab_from_tokens(const std::vector<std::vector<std::string>>& corpus);

void save_vocab(const std::string& path, const Vocab& v);
Vocab load_vocab(const std::string& path);

/// Appends eos; unknown tokens become unk.
std::vector<int> encode_ids(const Vocab& v,
                            const std::vector<std::string>& tokens);

/// Stops at the first eos; out-of-range ids violate the contract.
std::vector<std::string> decode_ids(const Vocab& v,
                                    const std::vector<int>& ids);

}  // namespace deskst

#endif  // DESKST_TEXT_HPP_
