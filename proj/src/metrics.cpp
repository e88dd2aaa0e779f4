// Copyright 2026 The DeskST Authors
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

#include "deskst/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

namespace deskst {

std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string w;
  while (in >> w) out.push_back(std::move(w));
  return out;
}

namespace {

std::string lower_ascii(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Counts of every n-gram of one order, keyed by the joined token span.
std::map<std::string, int> ngram_counts(const std::vector<std::string>& words,
                                        int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(words.size()) < n) return counts;
  for (size_t i = 0; i + n <= words.size(); ++i) {
    std::string key = words[i];
    for (int j = 1; j < n; ++j) key += "\x1f" + words[i + j];
    ++counts[key];
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, bool smooth) {
  if (hypotheses.size() != references.size())
    throw ContractError("bleu: " + std::to_string(hypotheses.size()) +
                        " hypotheses vs " + std::to_string(references.size()) +
                        " references");
  if (hypotheses.empty()) throw InputError("bleu: empty corpus");

  long long matches[4] = {0, 0, 0, 0};
  long long totals[4] = {0, 0, 0, 0};
  long long hyp_len = 0, ref_len = 0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    std::vector<std::string> hyp = split_words(lower_ascii(hypotheses[i]));
    std::vector<std::string> ref = split_words(lower_ascii(references[i]));
    if (ref.empty())
      throw InputError("bleu: empty reference at pair " + std::to_string(i));
    hyp_len += static_cast<long long>(hyp.size());
    ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= 4; ++n) {
      auto hc = ngram_counts(hyp, n);
      auto rc = ngram_counts(ref, n);
      for (const auto& [gram, count] : hc) {
        auto it = rc.find(gram);
        int clipped = it == rc.end() ? 0 : std::min(count, it->second);
        matches[n - 1] += clipped;
        totals[n - 1] += count;
      }
    }
  }

  if (hyp_len == 0) return 0.0;
  double log_prec = 0.0;
  for (int n = 0; n < 4; ++n) {
    double num = static_cast<double>(matches[n]);
    double den = static_cast<double>(totals[n]);
    if (smooth && n >= 1) {
      num += 1.0;
      den += 1.0;
    }
    if (num <= 0.0 || den <= 0.0) return 0.0;
    log_prec += std::log(num / den);
  }
  double bp = hyp_len < ref_len
                  ? std::exp(1.0 - static_cast<double>(ref_len) /
                                       static_cast<double>(hyp_len))
                  : 1.0;
  return 100.0 * bp * std::exp(log_prec / 4.0);
}

int edit_distance_words(const std::string& hyp, const std::string& ref) {
  std::vector<std::string> h = split_words(hyp);
  std::vector<std::string> r = split_words(ref);
  size_t nh = h.size(), nr = r.size();
  std::vector<int> prev(nr + 1), cur(nr + 1);
  for (size_t j = 0; j <= nr; ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= nh; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= nr; ++j) {
      int sub = prev[j - 1] + (h[i - 1] == r[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[nr];
}

double wer(const std::vector<std::string>& hypotheses,
           const std::vector<std::string>& references) {
  if (hypotheses.size() != references.size())
    throw ContractError("wer: " + std::to_string(hypotheses.size()) +
                        " hypotheses vs " + std::to_string(references.size()) +
                        " references");
  if (hypotheses.empty()) throw InputError("wer: empty corpus");
  long long edits = 0, ref_words = 0;
  for (size_t i = 0; i < hypotheses.size(); ++i) {
    size_t n = split_words(references[i]).size();
    if (n == 0)
      throw InputError("wer: empty reference at pair " + std::to_string(i));
    edits += edit_distance_words(hypotheses[i], references[i]);
    ref_words += static_cast<long long>(n);
  }
  return 100.0 * static_cast<double>(edits) / static_cast<double>(ref_words);
}

void write_csv_matrix(const std::string& path, const MatF& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(9);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
  if (!out) throw IoError("short write to " + path);
}

MatF read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<float> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stof(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError("ragged csv in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError("empty csv " + path);
  MatF m(static_cast<Index>(rows.size()),
         static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
  return m;
}

void write_pgm(const std::string& path, const MatF& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      float v = std::min(1.0f, std::max(0.0f, m(i, j)));
      row[static_cast<size_t>(j)] =
          static_cast<uint8_t>(std::lround(255.0 * static_cast<double>(v)));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("short write to " + path);
}

MatF read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw FormatError("not a binary grayscale image: " + path);
  long w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval != 255)
    throw FormatError("bad image header in " + path);
  in.get();  // single whitespace byte after the header
  std::vector<uint8_t> data(static_cast<size_t>(w) * static_cast<size_t>(h));
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size()));
  if (in.gcount() != static_cast<std::streamsize>(data.size()))
    throw FormatError("truncated image " + path);
  MatF m(static_cast<Index>(h), static_cast<Index>(w));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j)
      m(i, j) = static_cast<float>(
          data[static_cast<size_t>(i) * static_cast<size_t>(w) +
               static_cast<size_t>(j)]);
  return m;
}

}  // namespace deskst
