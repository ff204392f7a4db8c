// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "chatqe/jsonl.hpp"

namespace chatqe {

enum class BleuTokenizer {
  /// Split on whitespace only.
  whitespace,
  /// Whitespace, then punctuation marks and CJK characters become tokens of
  /// their own, so unsegmented Japanese is scored per character.
  punctuation,
};

enum class BleuSmoothing {
  none,
  /// Zero n-gram matches replaced by epsilon / total.
  epsilon,
  /// Add one to matches and totals for n >= 2.
  add_one,
  /// Zero matches replaced by 1 / (2^k * total) for the k-th zero order.
  exponential,
};

struct BleuConfig {
  BleuTokenizer tokenizer = BleuTokenizer::punctuation;
  int max_ngram = 4;
  BleuSmoothing smoothing = BleuSmoothing::add_one;
  double epsilon = 0.1;
  /// Per-order weights; empty means uniform 1/max_ngram.
  std::vector<double> weights;
};

std::string_view to_string(BleuTokenizer t);
std::string_view to_string(BleuSmoothing s);
BleuTokenizer parse_bleu_tokenizer(std::string_view s);
BleuSmoothing parse_bleu_smoothing(std::string_view s);
json to_json(const BleuConfig& cfg);

std::vector<std::string> bleu_tokenize(std::string_view text, BleuTokenizer tokenizer);

/// Clipped n-gram match counts of one segment.
struct NgramStats {
  std::vector<long long> matches;  // index n-1
  std::vector<long long> totals;
  long long hyp_length = 0;
  long long ref_length = 0;
};

NgramStats ngram_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, int max_ngram);

/// Sentence-level BLEU with brevity penalty on a 0..100 scale.
double sentence_bleu(std::string_view hypothesis, std::string_view reference, const BleuConfig& cfg = {});

/// Corpus-level BLEU: statistics summed over segments before combining.
double corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                   const BleuConfig& cfg = {});

}  // namespace chatqe
