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

#include "deskst/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace deskst {

bool valid_utf8(const std::string& s) {
  size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    size_t extra;
    if (c < 0x80)
      extra = 0;
    else if ((c & 0xE0) == 0xC0 && c >= 0xC2)
      extra = 1;
    else if ((c & 0xF0) == 0xE0)
      extra = 2;
    else if ((c & 0xF8) == 0xF0 && c <= 0xF4)
      extra = 3;
    else
      return false;
    if (i + extra >= s.size()) return false;  // truncated sequence
    for (size_t k = 1; k <= extra; ++k)
      if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
    i += extra + 1;
  }
  return true;
}

std::string normalize_text(const std::string& s) {
  if (!valid_utf8(s)) throw InputError("normalize_text: invalid UTF-8 input");
  std::string spaced;
  spaced.reserve(s.size() * 2);
  for (size_t i = 0; i < s.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    if (c < 0x80) {
      if (std::isspace(c)) {
        spaced.push_back(' ');
      } else if (std::ispunct(c)) {
        spaced.push_back(' ');
        spaced.push_back(static_cast<char>(c));
        spaced.push_back(' ');
      } else {
        spaced.push_back(static_cast<char>(std::tolower(c)));
      }
    } else {
      spaced.push_back(s[i]);
    }
  }
  std::string out;
  out.reserve(spaced.size());
  bool in_space = true;  // swallow leading spaces
  for (char c : spaced) {
    if (c == ' ') {
      if (!in_space) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(c);
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::vector<std::string> utf8_chars(const std::string& word) {
  std::vector<std::string> chars;
  size_t i = 0;
  while (i < word.size()) {
    unsigned char c = static_cast<unsigned char>(word[i]);
    size_t len = c < 0x80 ? 1 : (c & 0xE0) == 0xC0 ? 2 : (c & 0xF0) == 0xE0 ? 3 : 4;
    len = std::min(len, word.size() - i);
    chars.push_back(word.substr(i, len));
    i += len;
  }
  return chars;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> words;
  std::istringstream in(line);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

// Word as working symbol sequence: code points, word-end marker glued to the
// final one ("abc" -> a, b, c</w>).
std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += kWordEnd;
  return syms;
}

void merge_in_place(std::vector<std::string>& syms,
                    const std::pair<std::string, std::string>& m) {
  size_t w = 0;
  for (size_t r = 0; r < syms.size();) {
    if (r + 1 < syms.size() && syms[r] == m.first && syms[r + 1] == m.second) {
      std::string merged = syms[r] + syms[r + 1];
      syms[w] = std::move(merged);
      ++w;
      r += 2;
    } else {
      if (w != r) syms[w] = std::move(syms[r]);  // avoid self-move
      ++w;
      ++r;
    }
  }
  syms.resize(w);
}

}  // namespace

BpeModel bpe_train(const std::vector<std::string>& lines, int num_merges) {
  if (num_merges < 0) throw ConfigError("bpe_train: num_merges must be >= 0");
  // Distinct words with counts; merges act on types, weighted by frequency.
  std::map<std::string, long> word_count;
  for (const std::string& line : lines)
    for (const std::string& w : split_ws(line)) ++word_count[w];
  if (word_count.empty())
    throw InputError("bpe_train: corpus contains no tokens");

  std::vector<std::pair<std::vector<std::string>, long>> words;
  words.reserve(word_count.size());
  for (const auto& [w, c] : word_count) words.emplace_back(word_symbols(w), c);

  BpeModel model;
  for (int step = 0; step < num_merges; ++step) {
    std::map<std::pair<std::string, std::string>, long> pair_count;
    for (const auto& [syms, count] : words)
      for (size_t i = 0; i + 1 < syms.size(); ++i)
        pair_count[{syms[i], syms[i + 1]}] += count;
    // std::map iterates pairs in lexicographic order, so the first maximal
    // entry is the tie-rule winner.
    std::pair<std::string, std::string> best;
    long best_count = 0;
    for (const auto& [pair, count] : pair_count) {
      if (count > best_count) {
        best = pair;
        best_count = count;
      }
    }
    if (best_count < 2) break;  // no pair repeats; further merges are noise
    model.merges.push_back(best);
    for (auto& [syms, count] : words) merge_in_place(syms, best);
  }
  return model;
}

std::vector<std::string> bpe_apply(const BpeModel& model,
                                   const std::string& sentence) {
  std::vector<std::string> out;
  for (const std::string& word : split_ws(sentence)) {
    std::vector<std::string> syms = word_symbols(word);
    for (const auto& m : model.merges) merge_in_place(syms, m);
    out.insert(out.end(), syms.begin(), syms.end());
  }
  return out;
}

std::string bpe_detokenize(const std::vector<std::string>& tokens) {
  std::string glued;
  for (const std::string& t : tokens) glued += t;
  std::string out;
  size_t i = 0;
  const std::string marker = kWordEnd;
  while (i < glued.size()) {
    if (glued.compare(i, marker.size(), marker) == 0) {
      out.push_back(' ');
      i += marker.size();
    } else {
      out.push_back(glued[i]);
      ++i;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

void save_bpe(const std::string& path, const BpeModel& model) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write bpe model: " + path);
  for (const auto& [l, r] : model.merges) out << l << ' ' << r << '\n';
  if (!out) throw IoError("short write on bpe model: " + path);
}

BpeModel load_bpe(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open bpe model: " + path);
  BpeModel model;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size())
      throw FormatError("bpe model line " + std::to_string(lineno) +
                        ": want \"left right\", got \"" + line + "\"");
    model.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  return model;
}

int Vocab::lookup(const std::string& token) const {
  auto it = token_to_id.find(token);
  return it == token_to_id.end() ? kUnkId : it->second;
}

namespace {

Vocab vocab_from_sorted(const std::vector<std::string>& sorted_symbols) {
  Vocab v;
  v.id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (const std::string& s : sorted_symbols) v.id_to_token.push_back(s);
  for (size_t i = 0; i < v.id_to_token.size(); ++i)
    v.token_to_id[v.id_to_token[i]] = static_cast<int>(i);
  return v;
}

}  // namespace

Vocab vocab_from_tokens(const std::vector<std::vector<std::string>>& corpus) {
  std::map<std::string, int> uniq;
  for (const auto& line : corpus)
    for (const std::string& t : line) uniq[t] = 1;
  std::vector<std::string> sorted;
  for (const auto& [t, _] : uniq) sorted.push_back(t);
  return vocab_from_sorted(sorted);
}

void save_vocab(const std::string& path, const Vocab& v) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocab: " + path);
  for (size_t i = 0; i < v.id_to_token.size(); ++i)
    out << v.id_to_token[i] << '\t' << i << '\n';
  if (!out) throw IoError("short write on vocab: " + path);
}

Vocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocab: " + path);
  Vocab v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw FormatError("vocab line " + std::to_string(lineno) +
                        ": want \"token<TAB>id\"");
    std::string token = line.substr(0, tab);
    int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(v.id_to_token.size()))
      throw FormatError("vocab line " + std::to_string(lineno) +
                        ": ids must be dense and ascending from 0");
    v.id_to_token.push_back(token);
    v.token_to_id[token] = id;
  }
  if (v.size() < 4 || v.id_to_token[0] != "<pad>" ||
      v.id_to_token[1] != "<bos>" || v.id_to_token[2] != "<eos>" ||
      v.id_to_token[3] != "<unk>")
    throw FormatError("vocab in " + path + " lacks the reserved id block");
  return v;
}

std::vector<int> encode_ids(const Vocab& v,
                            const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const std::string& t : tokens) ids.push_back(v.lookup(t));
  ids.push_back(kEosId);
  return ids;
}

std::vector<std::string> decode_ids(const Vocab& v,
                                    const std::vector<int>& ids) {
  std::vector<std::string> tokens;
  for (int id : ids) {
    if (id < 0 || id >= v.size())
      throw ContractError("decode_ids: id " + std::to_string(id) +
                          " outside vocab of " + std::to_string(v.size()));
    if (id == kEosId) break;
    tokens.push_back(v.id_to_token[static_cast<size_t>(id)]);
  }
  return tokens;
}

}  // namespace deskst
