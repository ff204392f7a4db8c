// SPDX-License-Identifier: Apache-2.0
//
// A compact post-LayerNorm Transformer encoder (BERT layout) with a pooled
// first-position two-class head, forward and backward written out by hand.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace chatqe::detector {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EncoderShape {
  int vocab_size = 0;
  int max_positions = 512;
  int segments = 4;
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int ffn = 128;

  bool operator==(const EncoderShape&) const = default;
};

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  /// Biases and LayerNorm parameters are exempt from weight decay.
  bool decay = true;
  /// Part of the pretrained encoder (false for the pooler/classifier head).
  bool encoder = true;
};

class Network {
 public:
  /// Weights ~ N(0, 0.02), biases 0, LayerNorm gain 1.
  Network(EncoderShape shape, std::uint64_t seed);

  const EncoderShape& shape() const { return shape_; }

  /// Class logits {correct, erroneous} for one unpadded sequence.
  std::array<double, 2> logits(std::span<const int> tokens, std::span<const int> segments) const;

  /// Adds scale * d(loss)/d(params) to every grad; returns the
  /// cross-entropy loss of `label` (0 correct, 1 erroneous).
  double accumulate_gradients(std::span<const int> tokens, std::span<const int> segments, int label, double scale);

  void zero_gradients();
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;

  /// Binary tensor files. save() writes either the encoder or the head
  /// subset; load() checks every name and shape against this network and
  /// throws ModelError on mismatch.
  void save(const std::filesystem::path& path, bool encoder_part) const;
  void load(const std::filesystem::path& path, bool encoder_part);

 private:
  struct Forward;
  void run_forward(std::span<const int> tokens, std::span<const int> segments, Forward& f) const;
  void check_sequence(std::span<const int> tokens, std::span<const int> segments) const;

  EncoderShape shape_;
  std::vector<Parameter> params_;
};

/// Two-class softmax, max-subtracted.
std::array<double, 2> softmax2(const std::array<double, 2>& logits);

}  // namespace chatqe::detector
