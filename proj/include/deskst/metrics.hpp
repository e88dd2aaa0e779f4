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

#ifndef DESKST_METRICS_HPP_
#define DESKST_METRICS_HPP_

#include <string>
#include <vector>

#include "deskst/common.hpp"

namespace deskst {

/// Corpus-level BLEU-4 in [0, 100]: geometric mean of clipped n-gram
/// precisions (n = 1..4) times the brevity penalty, matched case-insensitively
/// on whitespace tokens. Any order with zero matches scores 0 unless smoothing
/// is on; smoothing adds one to numerator and denominator for n >= 2 and is
/// meant for legibility on tiny dev sets, not for reported scores.
double bleu(const std::vector<std::string>& hypotheses,
            const std::vector<std::string>& references, bool smooth = false);

/// Corpus word error rate as a percentage: total edit operations
/// (substitutions, insertions, deletions at unit cost) over total reference
/// words, times 100. Can exceed 100 when hypotheses run long.
double wer(const std::vector<std::string>& hypotheses,
           const std::vector<std::string>& references);

/// Single-pair edit distance on whitespace tokens; exposed for aggregation
/// checks.
int edit_distance_words(const std::string& hyp, const std::string& ref);

/// Splits on runs of whitespace; never yields empty tokens.
std::vector<std::string> split_words(const std::string& s);

/// Writes a matrix as comma-separated rows with enough digits to round-trip.
void write_csv_matrix(const std::string& path, const MatF& m);

/// Reads back a matrix written by write_csv_matrix.
MatF read_csv_matrix(const std::string& path);

/// Writes an 8-bit binary-format grayscale image, pixel = round(255 * value),
/// values clamped to [0, 1]. Rows are image rows.
void write_pgm(const std::string& path, const MatF& m);

/// Reads back an image written by write_pgm as values in [0, 255].
MatF read_pgm(const std::string& path);

}  // namespace deskst

#endif  // DESKST_METRICS_HPP_
