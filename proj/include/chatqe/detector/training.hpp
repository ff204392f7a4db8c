// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "chatqe/backends.hpp"
#include "chatqe/corpus.hpp"
#include "chatqe/detector/model.hpp"

namespace chatqe::detector {

/// Learning rate at optimizer step `step` (1-based). inverse_sqrt ramps
/// linearly over warmup_steps, then decays as
/// max_lr / sqrt((step + t - warmup) / t) with t = warmup (or 10000 when
/// there is no warmup), matching the common inverse_sqrt scheduler.
double learning_rate(const OptimizerConfig& opt, long long step);

/// Adam with decoupled weight decay; parameters flagged decay=false
/// (biases, LayerNorm) are not decayed.
class AdamW {
 public:
  AdamW(const OptimizerConfig& config, const std::vector<Parameter>& params);
  /// Applies one update from the accumulated grads at learning rate `lr`.
  void step(std::vector<Parameter>& params, double lr);
  long long steps() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<Matrix> m_, v_;
  long long t_ = 0;
};

struct TrainingManifest {
  std::string dataset_sha256;
  std::size_t example_count = 0;
  std::size_t erroneous_count = 0;
  long long steps = 0;
  int epochs = 0;
  std::uint64_t seed = 0;
  double mean_loss = 0.0;
  double last_epoch_loss = 0.0;
};

json to_json(const TrainingManifest& m);

struct TrainingResult {
  DetectorModel model;
  TrainingManifest manifest;
};

/// Called after every optimizer step with (step, batch mean loss, lr).
using ProgressFn = std::function<void(long long step, double loss, double lr)>;

/// Builds the vocabulary (or takes it from config.encoder_init), then runs
/// config.epochs passes over the examples in seeded Fisher-Yates order.
/// Throws ModelError when the set is empty or holds a single label.
TrainingResult train(std::span<const LabeledExample> examples, DetectorConfig config,
                     const ProgressFn& progress = {});

/// Saves the model plus manifest.json.
void save_training_result(const TrainingResult& result, const std::filesystem::path& dir);

/// Hex SHA-256 of the canonical JSONL serialisation of `examples`, which is
/// byte-identical to the file write_examples produces.
std::string dataset_sha256(std::span<const LabeledExample> examples);
std::string sha256_hex(std::string_view data);

struct ParallelPair {
  std::string src;
  std::string tgt;
};

/// JSONL with {"src": ..., "tgt": ...} per line, in dialogue order.
std::vector<ParallelPair> read_parallel_pairs(const std::filesystem::path& path);

/// For each consecutive (context, response) pair: one correct example with
/// the reference translation as resp_tgt and one erroneous example with
/// the low-quality backend's output. ctx_tgt is always the reference.
std::vector<LabeledExample> generate_training_set(std::span<const ParallelPair> pairs,
                                                  const TranslationBackend& low_backend, Lang source, Lang target,
                                                  const std::string& corpus_id = "parallel");

}  // namespace chatqe::detector
