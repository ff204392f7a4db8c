// SPDX-License-Identifier: Apache-2.0
#include "chatqe/detector/input.hpp"

#include <algorithm>

namespace chatqe::detector {

InputAssembler::InputAssembler(std::shared_ptr<const Tokenizer> tokenizer, std::shared_ptr<const Vocabulary> vocab,
                               int max_length)
    : tokenizer_(std::move(tokenizer)), vocab_(std::move(vocab)), max_length_(max_length) {
  if (max_length_ < 5) throw ValidationError("max_length must leave room for [CLS], three [SEP] and one token");
}

std::array<std::vector<std::string>, 4> InputAssembler::spans(const ChatQuad& q) const {
  return {tokenizer_->tokenize(q.ctx_src), tokenizer_->tokenize(q.ctx_tgt), tokenizer_->tokenize(q.resp_src),
          tokenizer_->tokenize(q.resp_tgt)};
}

DetectorInput InputAssembler::assemble(const ChatQuad& q) const {
  const std::array<const std::string*, 4> fields{&q.ctx_src, &q.ctx_tgt, &q.resp_src, &q.resp_tgt};
  static constexpr std::array<const char*, 4> kNames{"ctx_src", "ctx_tgt", "resp_src", "resp_tgt"};
  for (std::size_t i = 0; i < 4; ++i)
    if (trim(*fields[i]).empty())
      throw ValidationError("quad " + to_string(UtteranceKey{q.chat_id, q.index}) + " has an empty " + kNames[i]);

  auto toks = spans(q);
  constexpr int kOverhead = 4;  // [CLS] + 3 x [SEP]
  const int response = static_cast<int>(toks[3].size());
  if (response + kOverhead > max_length_)
    throw InputTooLongError("response translation of " + to_string(UtteranceKey{q.chat_id, q.index}) + " has " +
                            std::to_string(response) + " tokens; max_length " + std::to_string(max_length_) +
                            " leaves room for " + std::to_string(max_length_ - kOverhead));

  int total = kOverhead;
  for (const auto& t : toks) total += static_cast<int>(t.size());
  int excess = std::max(0, total - max_length_);
  for (int span = 0; span < 3 && excess > 0; ++span) {
    const int cut = std::min<int>(excess, static_cast<int>(toks[span].size()));
    toks[span].erase(toks[span].begin(), toks[span].begin() + cut);
    excess -= cut;
  }

  DetectorInput in;
  in.max_length = max_length_;
  in.token_ids.reserve(max_length_);
  in.token_ids.push_back(Vocabulary::kCls);
  in.segment_ids.push_back(0);
  for (int span = 0; span < 4; ++span) {
    if (span > 0) {
      in.token_ids.push_back(Vocabulary::kSep);
      in.segment_ids.push_back(span - 1);
    }
    for (const auto& t : toks[span]) {
      in.token_ids.push_back(vocab_->id(t));
      in.segment_ids.push_back(span);
    }
    in.span_lengths[span] = static_cast<int>(toks[span].size());
  }
  in.length = static_cast<int>(in.token_ids.size());
  in.attention_mask.assign(in.length, 1);
  in.token_ids.resize(max_length_, Vocabulary::kPad);
  in.segment_ids.resize(max_length_, 0);
  in.attention_mask.resize(max_length_, 0);
  return in;
}

}  // namespace chatqe::detector
