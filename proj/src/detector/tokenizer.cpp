// SPDX-License-Identifier: Apache-2.0
#include "chatqe/detector/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "chatqe/error.hpp"
#include "chatqe/jsonl.hpp"
#include "chatqe/text.hpp"

namespace chatqe::detector {

namespace {
const std::vector<std::string> kSpecials{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
}

std::vector<std::string> BasicTokenizer::tokenize(std::string_view s) const {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(text::ascii_lower(current));
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

std::shared_ptr<const Tokenizer> make_tokenizer(std::string_view id) {
  if (id == "basic") return std::make_shared<BasicTokenizer>();
  throw ModelError("unknown tokenizer '" + std::string(id) + "'");
}

Vocabulary::Vocabulary() : Vocabulary(kSpecials) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < kSpecials.size(); ++i)
    if (i >= tokens_.size() || tokens_[i] != kSpecials[i])
      throw ModelError("vocabulary must start with [PAD] [UNK] [CLS] [SEP]");
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw ModelError("duplicate vocabulary entry '" + tokens_[i] + "'");
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& tokenized, int min_count,
                             std::size_t max_size) {
  std::map<std::string, long long> counts;
  for (const auto& seq : tokenized)
    for (const auto& t : seq) ++counts[t];
  std::vector<std::pair<std::string, long long>> ranked;
  for (auto& [tok, n] : counts)
    if (n >= min_count && std::find(kSpecials.begin(), kSpecials.end(), tok) == kSpecials.end())
      ranked.emplace_back(tok, n);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = kSpecials;
  for (auto& [tok, n] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(tok);
  }
  return Vocabulary(std::move(tokens));
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  AtomicFileWriter w(path);
  for (const auto& t : tokens_) w.stream() << t << '\n';
  w.commit();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return Vocabulary(std::move(tokens));
}

}  // namespace chatqe::detector
