// SPDX-License-Identifier: Apache-2.0
#include "chatqe/detector/model.hpp"

#include <algorithm>
#include <set>

#include "chatqe/error.hpp"

namespace chatqe::detector {

namespace {

std::string_view to_string(LrSchedule s) { return s == LrSchedule::inverse_sqrt ? "inverse_sqrt" : "constant"; }

LrSchedule parse_schedule(const std::string& s) {
  if (s == "inverse_sqrt") return LrSchedule::inverse_sqrt;
  if (s == "constant") return LrSchedule::constant;
  throw ValidationError("unknown lr schedule '" + s + "'");
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* what) {
  const std::set<std::string> keys(known.begin(), known.end());
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ValidationError(std::string("unknown ") + what + " key '" + k + "'");
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

}  // namespace

void DetectorConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("detector config: " + m); };
  if (encoder_id.empty()) fail("encoder_id must be non-empty");
  if (max_length < 5) fail("max_length must be at least 5");
  if (!(threshold >= 0.0 && threshold <= 1.0)) fail("threshold must be in [0, 1]");
  if (batch_size <= 0) fail("batch_size must be positive");
  if (epochs < 0) fail("epochs must be non-negative");
  if (!(optimizer.max_lr > 0)) fail("max_lr must be positive");
  if (!(optimizer.beta1 > 0 && optimizer.beta1 < 1)) fail("beta1 must be in (0, 1)");
  if (!(optimizer.beta2 > 0 && optimizer.beta2 < 1)) fail("beta2 must be in (0, 1)");
  if (!(optimizer.eps > 0)) fail("eps must be positive");
  if (!(optimizer.weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (optimizer.warmup_steps < 0) fail("warmup_steps must be non-negative");
  if (shape.hidden <= 0 || shape.layers < 0 || shape.heads <= 0 || shape.ffn <= 0 || shape.segments < 4)
    fail("encoder shape must be positive with at least 4 segments");
  if (shape.hidden % shape.heads != 0) fail("hidden size must be divisible by the head count");
  if (vocab_min_count < 1 || vocab_max_size < 5) fail("vocabulary limits too small");
}

DetectorConfig DetectorConfig::conventional() {
  DetectorConfig c;
  c.optimizer.max_lr = 5e-5;
  c.optimizer.warmup_steps = 100;
  return c;
}

json to_json(const DetectorConfig& c) {
  json j;
  j["encoder_id"] = c.encoder_id;
  j["tokenizer"] = c.tokenizer;
  if (c.encoder_init) j["encoder_init"] = c.encoder_init->string();
  j["max_length"] = c.max_length;
  j["threshold"] = c.threshold;
  j["seed"] = c.seed;
  j["label_map"] = {{"0", "correct"}, {"1", "erroneous"}};
  j["encoder"] = {{"vocab_size", c.shape.vocab_size}, {"hidden", c.shape.hidden}, {"layers", c.shape.layers},
                  {"heads", c.shape.heads},           {"ffn", c.shape.ffn},       {"segments", c.shape.segments},
                  {"max_positions", c.shape.max_positions}};
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["optimizer"] = {{"max_lr", c.optimizer.max_lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"schedule", to_string(c.optimizer.schedule)},
                    {"warmup_steps", c.optimizer.warmup_steps}};
  j["vocab_min_count"] = c.vocab_min_count;
  j["vocab_max_size"] = c.vocab_max_size;
  return j;
}

DetectorConfig detector_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("detector config must be a JSON object");
  reject_unknown(j,
                 {"encoder_id", "tokenizer", "encoder_init", "max_length", "threshold", "seed", "label_map", "encoder",
                  "batch_size", "epochs", "optimizer", "vocab_min_count", "vocab_max_size"},
                 "detector config");
  DetectorConfig c;
  read_opt(j, "encoder_id", c.encoder_id);
  read_opt(j, "tokenizer", c.tokenizer);
  if (j.contains("encoder_init")) {
    std::string p;
    read_opt(j, "encoder_init", p);
    c.encoder_init = p;
  }
  read_opt(j, "max_length", c.max_length);
  read_opt(j, "threshold", c.threshold);
  read_opt(j, "seed", c.seed);
  if (j.contains("label_map") && j["label_map"] != json{{"0", "correct"}, {"1", "erroneous"}})
    throw ValidationError("label_map must be {\"0\": \"correct\", \"1\": \"erroneous\"}");
  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    if (!e.is_object()) throw ValidationError("config key 'encoder' must be an object");
    reject_unknown(e, {"vocab_size", "hidden", "layers", "heads", "ffn", "segments", "max_positions"}, "encoder");
    read_opt(e, "vocab_size", c.shape.vocab_size);
    read_opt(e, "hidden", c.shape.hidden);
    read_opt(e, "layers", c.shape.layers);
    read_opt(e, "heads", c.shape.heads);
    read_opt(e, "ffn", c.shape.ffn);
    read_opt(e, "segments", c.shape.segments);
    read_opt(e, "max_positions", c.shape.max_positions);
  }
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "epochs", c.epochs);
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    if (!o.is_object()) throw ValidationError("config key 'optimizer' must be an object");
    reject_unknown(o, {"max_lr", "beta1", "beta2", "eps", "weight_decay", "schedule", "warmup_steps"}, "optimizer");
    read_opt(o, "max_lr", c.optimizer.max_lr);
    read_opt(o, "beta1", c.optimizer.beta1);
    read_opt(o, "beta2", c.optimizer.beta2);
    read_opt(o, "eps", c.optimizer.eps);
    read_opt(o, "weight_decay", c.optimizer.weight_decay);
    if (o.contains("schedule")) {
      std::string s;
      read_opt(o, "schedule", s);
      c.optimizer.schedule = parse_schedule(s);
    }
    read_opt(o, "warmup_steps", c.optimizer.warmup_steps);
  }
  read_opt(j, "vocab_min_count", c.vocab_min_count);
  read_opt(j, "vocab_max_size", c.vocab_max_size);
  c.validate();
  return c;
}

DetectorConfig load_detector_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 1, e.what());
  }
  return detector_config_from_json(j);
}

std::vector<Prediction> ErrorDetector::predict_batch(std::span<const ChatQuad> quads) const {
  std::vector<Prediction> out;
  out.reserve(quads.size());
  for (const auto& q : quads) out.push_back(predict(q));
  return out;
}

DetectorModel::DetectorModel(DetectorConfig config, Vocabulary vocab, Network network)
    : config_(std::move(config)),
      vocab_(std::make_shared<const Vocabulary>(std::move(vocab))),
      network_(std::move(network)),
      assembler_(make_tokenizer(config_.tokenizer), vocab_, config_.max_length) {
  if (network_.shape().vocab_size != static_cast<int>(vocab_->size()))
    throw ModelError("vocabulary has " + std::to_string(vocab_->size()) + " entries but the encoder expects " +
                     std::to_string(network_.shape().vocab_size));
  if (network_.shape().max_positions < config_.max_length)
    throw ModelError("encoder has fewer positions than max_length");
}

std::array<double, 2> DetectorModel::probabilities(const ChatQuad& quad) const {
  const auto in = assembler_.assemble(quad);
  const std::span<const int> tokens(in.token_ids.data(), static_cast<std::size_t>(in.length));
  const std::span<const int> segments(in.segment_ids.data(), static_cast<std::size_t>(in.length));
  return softmax2(network_.logits(tokens, segments));
}

Prediction DetectorModel::predict(const ChatQuad& quad) const {
  return Prediction::from_probability(probabilities(quad)[1], config_.threshold);
}

void DetectorModel::save(const std::filesystem::path& dir) const {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create model directory " + dir.string() + ": " + ec.message());
  write_text_file(dir / "config.json", to_json(config_).dump(2) + "\n");
  vocab_->save(dir / "vocab.txt");
  network_.save(dir / "encoder.bin", true);
  network_.save(dir / "head.bin", false);
}

DetectorModel DetectorModel::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ModelError("model directory " + dir.string() + " not found");
  DetectorConfig config;
  try {
    config = load_detector_config(dir / "config.json");
  } catch (const ModelError&) {
    throw;
  } catch (const Error& e) {
    throw ModelError(std::string("bad model config: ") + e.what());
  }
  auto vocab = Vocabulary::load(dir / "vocab.txt");
  if (config.shape.vocab_size != static_cast<int>(vocab.size()))
    throw ModelError("config declares " + std::to_string(config.shape.vocab_size) + " tokens, vocab.txt has " +
                     std::to_string(vocab.size()));
  Network net(config.shape, config.seed);
  net.load(dir / "encoder.bin", true);
  net.load(dir / "head.bin", false);
  return DetectorModel(std::move(config), std::move(vocab), std::move(net));
}

Prediction ConstantClassifier::predict(const ChatQuad&) const {
  return {label_, label_ == Verdict::erroneous ? 1.0 : 0.0};
}

ConstantClassifier majority_classifier(std::span<const Verdict> labels) {
  const auto bad = std::count(labels.begin(), labels.end(), Verdict::erroneous);
  const auto good = static_cast<std::ptrdiff_t>(labels.size()) - bad;
  return ConstantClassifier(bad > good ? Verdict::erroneous : Verdict::correct);
}

ConstantClassifier minority_classifier(std::span<const Verdict> labels) {
  return ConstantClassifier(majority_classifier(labels).label() == Verdict::correct ? Verdict::erroneous
                                                                                     : Verdict::correct);
}

}  // namespace chatqe::detector
