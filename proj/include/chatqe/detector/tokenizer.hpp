// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chatqe::detector {

class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<std::string> tokenize(std::string_view text) const = 0;
  /// Stored in the model config so a model is reloaded with the tokenizer
  /// it was trained with.
  virtual std::string id() const = 0;
};

/// Lower-cased ASCII, split on whitespace; punctuation and every CJK
/// character become single tokens (so Japanese needs no segmenter).
class BasicTokenizer final : public Tokenizer {
 public:
  std::vector<std::string> tokenize(std::string_view text) const override;
  std::string id() const override { return "basic"; }
};

/// Returns the tokenizer registered under `id`; throws ModelError otherwise.
std::shared_ptr<const Tokenizer> make_tokenizer(std::string_view id);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  /// Specials only.
  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Tokens seen at least `min_count` times, most frequent first (ties in
  /// byte order), capped at `max_size` entries including the specials.
  static Vocabulary build(const std::vector<std::vector<std::string>>& tokenized, int min_count, std::size_t max_size);

  int id(const std::string& token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  /// Throws ModelError when the file is missing or lacks the special tokens.
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace chatqe::detector
