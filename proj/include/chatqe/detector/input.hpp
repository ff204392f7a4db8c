// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <memory>
#include <vector>

#include "chatqe/corpus.hpp"
#include "chatqe/detector/tokenizer.hpp"
#include "chatqe/error.hpp"

namespace chatqe::detector {

inline constexpr int kDefaultMaxLength = 512;

class InputTooLongError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// [CLS] ctx_src [SEP] ctx_tgt [SEP] resp_src [SEP] resp_tgt [PAD]...
///
/// The four spans are always in that order: context original, context
/// translation, response original, response translation under evaluation.
/// Segment ids: [CLS] and span 0 are 0; span k and the separator after it
/// are k. Vectors are padded to max_length; `length` counts real tokens.
struct DetectorInput {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> attention_mask;
  int length = 0;
  int max_length = kDefaultMaxLength;
  /// Tokens kept per span after truncation.
  std::array<int, 4> span_lengths{};
};

class InputAssembler {
 public:
  InputAssembler(std::shared_ptr<const Tokenizer> tokenizer, std::shared_ptr<const Vocabulary> vocab,
                 int max_length = kDefaultMaxLength);

  /// Over-long inputs lose tokens from the front of ctx_src, then ctx_tgt,
  /// then resp_src; resp_tgt is never cut. Throws InputTooLongError when
  /// resp_tgt plus [CLS] and three separators exceeds max_length, and
  /// ValidationError for an empty field.
  DetectorInput assemble(const ChatQuad& quad) const;

  /// The four spans, tokenized and not yet truncated.
  std::array<std::vector<std::string>, 4> spans(const ChatQuad& quad) const;

  int max_length() const { return max_length_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  const Vocabulary& vocabulary() const { return *vocab_; }

 private:
  std::shared_ptr<const Tokenizer> tokenizer_;
  std::shared_ptr<const Vocabulary> vocab_;
  int max_length_;
};

}  // namespace chatqe::detector
