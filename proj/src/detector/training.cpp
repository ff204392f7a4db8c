// SPDX-License-Identifier: Apache-2.0
#include "chatqe/detector/training.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <openssl/evp.h>

#include "chatqe/error.hpp"

namespace chatqe::detector {

double learning_rate(const OptimizerConfig& opt, long long step) {
  if (opt.schedule == LrSchedule::constant) return opt.max_lr;
  const double s = static_cast<double>(step);
  const double warmup = static_cast<double>(opt.warmup_steps);
  if (s < warmup) return opt.max_lr * s / warmup;
  const double timescale = opt.warmup_steps > 0 ? warmup : 10000.0;
  return opt.max_lr / std::sqrt((s + timescale - warmup) / timescale);
}

AdamW::AdamW(const OptimizerConfig& config, const std::vector<Parameter>& params) : config_(config) {
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step(std::vector<Parameter>& params, double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.decay && config_.weight_decay > 0) p.value *= 1.0 - lr * config_.weight_decay;
    m_[i] = b1 * m_[i] + (1.0 - b1) * p.grad;
    v_[i] = b2 * v_[i] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

json to_json(const TrainingManifest& m) {
  return {{"dataset_sha256", m.dataset_sha256}, {"example_count", m.example_count},
          {"erroneous_count", m.erroneous_count}, {"steps", m.steps},
          {"epochs", m.epochs},                 {"seed", m.seed},
          {"mean_loss", m.mean_loss},           {"last_epoch_loss", m.last_epoch_loss}};
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string dataset_sha256(std::span<const LabeledExample> examples) {
  std::string all;
  for (const auto& e : examples) all += to_json(e).dump() + "\n";
  return sha256_hex(all);
}

TrainingResult train(std::span<const LabeledExample> examples, DetectorConfig config, const ProgressFn& progress) {
  config.validate();
  if (examples.empty()) throw ModelError("cannot train on an empty example set");
  std::size_t bad = 0;
  for (const auto& e : examples) bad += e.label == Verdict::erroneous;
  if (bad == 0 || bad == examples.size())
    throw ModelError("training set holds only '" +
                     std::string(to_string(bad == 0 ? Verdict::correct : Verdict::erroneous)) +
                     "' examples; both labels are required");

  const auto tokenizer = make_tokenizer(config.tokenizer);
  std::optional<DetectorModel> init;
  Vocabulary vocab;
  if (config.encoder_init) {
    init.emplace(DetectorModel::load(*config.encoder_init));
    if (init->config().tokenizer != config.tokenizer)
      throw ModelError("encoder_init was trained with tokenizer '" + init->config().tokenizer + "'");
    vocab = init->vocabulary();
    config.shape = init->network().shape();
    if (config.shape.max_positions < config.max_length)
      throw ModelError("encoder_init supports only " + std::to_string(config.shape.max_positions) + " positions");
  } else {
    std::vector<std::vector<std::string>> tokenized;
    tokenized.reserve(examples.size() * 4);
    for (const auto& e : examples)
      for (const auto* s : {&e.quad.ctx_src, &e.quad.ctx_tgt, &e.quad.resp_src, &e.quad.resp_tgt})
        tokenized.push_back(tokenizer->tokenize(*s));
    vocab = Vocabulary::build(tokenized, config.vocab_min_count, static_cast<std::size_t>(config.vocab_max_size));
    config.shape.vocab_size = static_cast<int>(vocab.size());
    config.shape.max_positions = config.max_length;
  }

  Network net(config.shape, config.seed);
  if (init) {
    // Copy the pretrained encoder; the head stays freshly initialised.
    auto& dst = net.parameters();
    const auto& src = init->network().parameters();
    for (std::size_t i = 0; i < dst.size(); ++i)
      if (dst[i].encoder) dst[i].value = src[i].value;
  }

  const InputAssembler assembler(tokenizer, std::make_shared<const Vocabulary>(vocab), config.max_length);
  std::vector<DetectorInput> inputs;
  inputs.reserve(examples.size());
  for (const auto& e : examples) inputs.push_back(assembler.assemble(e.quad));

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  AdamW adam(config.optimizer, net.parameters());
  double loss_sum = 0.0, epoch_loss = 0.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates by hand: std::shuffle's algorithm is implementation-defined.
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng() % (i + 1));
      std::swap(order[i], order[j]);
    }
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      net.zero_gradients();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& in = inputs[order[k]];
        const auto n = static_cast<std::size_t>(in.length);
        const int label = examples[order[k]].label == Verdict::erroneous ? 1 : 0;
        batch_loss += net.accumulate_gradients({in.token_ids.data(), n}, {in.segment_ids.data(), n}, label, scale);
      }
      const double lr = learning_rate(config.optimizer, adam.steps() + 1);
      adam.step(net.parameters(), lr);
      epoch_loss += batch_loss;
      if (progress) progress(adam.steps(), batch_loss * scale, lr);
    }
    loss_sum += epoch_loss;
    epoch_loss /= static_cast<double>(order.size());
  }

  TrainingManifest manifest;
  manifest.dataset_sha256 = dataset_sha256(examples);
  manifest.example_count = examples.size();
  manifest.erroneous_count = bad;
  manifest.steps = adam.steps();
  manifest.epochs = config.epochs;
  manifest.seed = config.seed;
  if (config.epochs > 0) {
    manifest.mean_loss = loss_sum / static_cast<double>(examples.size() * static_cast<std::size_t>(config.epochs));
    manifest.last_epoch_loss = epoch_loss;
  }
  return {DetectorModel(std::move(config), std::move(vocab), std::move(net)), manifest};
}

void save_training_result(const TrainingResult& result, const std::filesystem::path& dir) {
  result.model.save(dir);
  write_text_file(dir / "manifest.json", to_json(result.manifest).dump(2) + "\n");
}

std::vector<ParallelPair> read_parallel_pairs(const std::filesystem::path& path) {
  std::vector<ParallelPair> out;
  read_jsonl(path, [&](const json& r, std::size_t) {
    ParallelPair p{require_string(r, "src"), require_string(r, "tgt")};
    if (trim(p.src).empty() || trim(p.tgt).empty()) throw ValidationError("parallel pair has an empty side");
    out.push_back(std::move(p));
  });
  return out;
}

std::vector<LabeledExample> generate_training_set(std::span<const ParallelPair> pairs,
                                                  const TranslationBackend& low_backend, Lang source, Lang target,
                                                  const std::string& corpus_id) {
  if (source == target) throw ValidationError("source and target languages must differ");
  std::vector<LabeledExample> out;
  if (pairs.size() < 2) return out;
  out.reserve(2 * (pairs.size() - 1));
  const Direction dir = direction_of(source, target);
  for (std::size_t i = 1; i < pairs.size(); ++i) {
    const auto& ctx = pairs[i - 1];
    const auto& resp = pairs[i];
    const UtteranceKey where{corpus_id, static_cast<int>(i)};
    LabeledExample pos;
    pos.quad = {ctx.src, ctx.tgt, resp.src, resp.tgt, dir, corpus_id, static_cast<int>(i), Origin::human};
    pos.label = Verdict::correct;
    LabeledExample neg = pos;
    neg.quad.resp_tgt = translate_utterance(low_backend, resp.src, source, target, where, resp.tgt);
    neg.quad.origin = low_backend.quality_tag();
    neg.label = Verdict::erroneous;
    out.push_back(std::move(pos));
    out.push_back(std::move(neg));
  }
  return out;
}

}  // namespace chatqe::detector
