// SPDX-License-Identifier: Apache-2.0
#include "chatqe/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "chatqe/error.hpp"
#include "chatqe/text.hpp"

namespace chatqe {

std::string_view to_string(BleuTokenizer t) { return t == BleuTokenizer::whitespace ? "whitespace" : "punctuation"; }

std::string_view to_string(BleuSmoothing s) {
  switch (s) {
    case BleuSmoothing::none: return "none";
    case BleuSmoothing::epsilon: return "epsilon";
    case BleuSmoothing::add_one: return "add-one";
    case BleuSmoothing::exponential: return "exponential";
  }
  return "?";
}

BleuTokenizer parse_bleu_tokenizer(std::string_view s) {
  if (s == "whitespace") return BleuTokenizer::whitespace;
  if (s == "punctuation") return BleuTokenizer::punctuation;
  throw ValidationError("unknown BLEU tokenizer '" + std::string(s) + "'");
}

BleuSmoothing parse_bleu_smoothing(std::string_view s) {
  for (auto v : {BleuSmoothing::none, BleuSmoothing::epsilon, BleuSmoothing::add_one, BleuSmoothing::exponential})
    if (to_string(v) == s) return v;
  throw ValidationError("unknown BLEU smoothing '" + std::string(s) + "'");
}

json to_json(const BleuConfig& cfg) {
  json j{{"tokenizer", to_string(cfg.tokenizer)}, {"max_ngram", cfg.max_ngram}, {"smoothing", to_string(cfg.smoothing)}};
  if (cfg.smoothing == BleuSmoothing::epsilon) j["epsilon"] = cfg.epsilon;
  j["weights"] = cfg.weights.empty() ? json("uniform") : json(cfg.weights);
  return j;
}

std::vector<std::string> bleu_tokenize(std::string_view s, BleuTokenizer tokenizer) {
  if (tokenizer == BleuTokenizer::whitespace) return text::split_whitespace(s);
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  std::size_t pos = 0;
  while (pos < s.size()) {
    const auto start = pos;
    const char32_t cp = text::next_code_point(s, pos);
    if (text::is_space(cp)) {
      flush();
    } else if (text::is_punctuation(cp) || text::is_cjk(cp)) {
      flush();
      out.emplace_back(s.substr(start, pos - start));
    } else {
      current.append(s.substr(start, pos - start));
    }
  }
  flush();
  return out;
}

NgramStats ngram_stats(const std::vector<std::string>& hyp, const std::vector<std::string>& ref, int max_ngram) {
  NgramStats st;
  st.hyp_length = static_cast<long long>(hyp.size());
  st.ref_length = static_cast<long long>(ref.size());
  st.matches.assign(max_ngram, 0);
  st.totals.assign(max_ngram, 0);
  for (int n = 1; n <= max_ngram; ++n) {
    auto count = [n](const std::vector<std::string>& toks) {
      std::map<std::vector<std::string>, long long> c;
      for (std::size_t i = 0; i + n <= toks.size(); ++i) ++c[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
      return c;
    };
    const auto hc = count(hyp);
    const auto rc = count(ref);
    for (const auto& [gram, c] : hc) {
      st.totals[n - 1] += c;
      if (auto it = rc.find(gram); it != rc.end()) st.matches[n - 1] += std::min(c, it->second);
    }
  }
  return st;
}

namespace {

double combine(const NgramStats& st, const BleuConfig& cfg) {
  if (st.hyp_length == 0) return 0.0;
  const int order = cfg.max_ngram;
  std::vector<double> weights = cfg.weights;
  if (weights.empty()) weights.assign(order, 1.0 / order);
  if (static_cast<int>(weights.size()) != order) throw ValidationError("BLEU weights must have max_ngram entries");

  double log_sum = 0.0;
  double weight_sum = 0.0;
  int zero_rank = 0;
  for (int n = 1; n <= order; ++n) {
    const double total = static_cast<double>(st.totals[n - 1]);
    double match = static_cast<double>(st.matches[n - 1]);
    // Orders longer than the hypothesis carry no evidence either way; they
    // are left out and the remaining weights renormalised.
    if (total == 0) continue;
    double p = 0.0;
    switch (cfg.smoothing) {
      case BleuSmoothing::none: p = match / total; break;
      case BleuSmoothing::epsilon: p = (match > 0 ? match : cfg.epsilon) / total; break;
      case BleuSmoothing::add_one: p = n == 1 ? match / total : (match + 1.0) / (total + 1.0); break;
      case BleuSmoothing::exponential:
        if (match > 0) {
          p = match / total;
        } else {
          ++zero_rank;
          p = 1.0 / (std::ldexp(1.0, zero_rank) * total);
        }
        break;
    }
    if (p <= 0.0) return 0.0;
    log_sum += weights[n - 1] * std::log(p);
    weight_sum += weights[n - 1];
  }
  if (weight_sum <= 0.0) return 0.0;
  const double c = static_cast<double>(st.hyp_length);
  const double r = static_cast<double>(st.ref_length);
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return 100.0 * bp * std::exp(log_sum / weight_sum);
}

}  // namespace

double sentence_bleu(std::string_view hypothesis, std::string_view reference, const BleuConfig& cfg) {
  if (cfg.max_ngram < 1) throw ValidationError("max_ngram must be >= 1");
  const auto h = bleu_tokenize(hypothesis, cfg.tokenizer);
  const auto r = bleu_tokenize(reference, cfg.tokenizer);
  return combine(ngram_stats(h, r, cfg.max_ngram), cfg);
}

double corpus_bleu(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
                   const BleuConfig& cfg) {
  if (hypotheses.size() != references.size())
    throw ValidationError("corpus_bleu: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                          std::to_string(references.size()) + " references");
  NgramStats sum;
  sum.matches.assign(cfg.max_ngram, 0);
  sum.totals.assign(cfg.max_ngram, 0);
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto st = ngram_stats(bleu_tokenize(hypotheses[i], cfg.tokenizer), bleu_tokenize(references[i], cfg.tokenizer),
                                cfg.max_ngram);
    sum.hyp_length += st.hyp_length;
    sum.ref_length += st.ref_length;
    for (int n = 0; n < cfg.max_ngram; ++n) {
      sum.matches[n] += st.matches[n];
      sum.totals[n] += st.totals[n];
    }
  }
  return combine(sum, cfg);
}

}  // namespace chatqe
