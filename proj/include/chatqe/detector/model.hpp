// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatqe/corpus.hpp"
#include "chatqe/detector/encoder.hpp"
#include "chatqe/detector/input.hpp"
#include "chatqe/detector/tokenizer.hpp"
#include "chatqe/jsonl.hpp"
#include "chatqe/prediction.hpp"

namespace chatqe::detector {

enum class LrSchedule { inverse_sqrt, constant };

struct OptimizerConfig {
  double max_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  LrSchedule schedule = LrSchedule::inverse_sqrt;
  /// Linear warmup steps; 0 starts at max_lr and decays immediately.
  int warmup_steps = 0;
  bool operator==(const OptimizerConfig&) const = default;
};

struct DetectorConfig {
  /// Identity of the encoder; free-form, recorded in the artifact.
  std::string encoder_id = "chatqe-mini-encoder";
  std::string tokenizer = "basic";
  /// Model directory whose encoder weights (and vocabulary) seed training.
  std::optional<std::filesystem::path> encoder_init;
  EncoderShape shape;
  int max_length = kDefaultMaxLength;
  double threshold = kDefaultThreshold;
  std::uint64_t seed = 42;
  int batch_size = 16;
  int epochs = 1;
  OptimizerConfig optimizer;
  int vocab_min_count = 1;
  int vocab_max_size = 30000;

  /// Throws ValidationError for non-positive hyperparameters or a
  /// threshold outside [0, 1]. epochs may be 0 (untrained baseline).
  void validate() const;

  /// Common fine-tuning recipe (5e-5 with 10% warmup-style ramp); offered
  /// for comparison, not the default.
  static DetectorConfig conventional();
};

json to_json(const DetectorConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
DetectorConfig detector_config_from_json(const json& j);
DetectorConfig load_detector_config(const std::filesystem::path& path);

/// Anything that scores a quad. Implementations are immutable after
/// construction, so concurrent predict calls are safe.
class ErrorDetector {
 public:
  virtual ~ErrorDetector() = default;
  virtual Prediction predict(const ChatQuad& quad) const = 0;
  virtual std::vector<Prediction> predict_batch(std::span<const ChatQuad> quads) const;
  virtual double threshold() const = 0;
};

class DetectorModel final : public ErrorDetector {
 public:
  DetectorModel(DetectorConfig config, Vocabulary vocab, Network network);

  Prediction predict(const ChatQuad& quad) const override;
  double threshold() const override { return config_.threshold; }
  /// Both class probabilities {correct, erroneous}.
  std::array<double, 2> probabilities(const ChatQuad& quad) const;

  const DetectorConfig& config() const { return config_; }
  const Vocabulary& vocabulary() const { return *vocab_; }
  const Network& network() const { return network_; }
  const InputAssembler& assembler() const { return assembler_; }

  /// Directory with config.json, vocab.txt, encoder.bin and head.bin.
  void save(const std::filesystem::path& dir) const;
  static DetectorModel load(const std::filesystem::path& dir);

 private:
  DetectorConfig config_;
  std::shared_ptr<const Vocabulary> vocab_;
  Network network_;
  InputAssembler assembler_;
};

/// Always emits one label, with probability 1 or 0.
class ConstantClassifier final : public ErrorDetector {
 public:
  explicit ConstantClassifier(Verdict label) : label_(label) {}
  Prediction predict(const ChatQuad&) const override;
  double threshold() const override { return kDefaultThreshold; }
  Verdict label() const { return label_; }

 private:
  Verdict label_;
};

/// Constant predictor of the more frequent label (ties go to correct).
ConstantClassifier majority_classifier(std::span<const Verdict> calibration_labels);
/// The opposite constant.
ConstantClassifier minority_classifier(std::span<const Verdict> calibration_labels);

}  // namespace chatqe::detector
