// SPDX-License-Identifier: Apache-2.0
#include "chatqe/backends.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "chatqe/error.hpp"
#include "chatqe/text.hpp"

namespace chatqe {

std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

namespace {

// Uniform double in [0,1) from the top 53 bits; fixed across standard
// library implementations, unlike std::uniform_real_distribution.
double unit_interval(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string where_text(const UtteranceKey& k) { return k.chat_id.empty() ? "(unknown utterance)" : to_string(k); }

}  // namespace

void validate(const BackendConfig& config) {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(what) + " must be in [0,1]");
  };
  prob(config.degradation.drop_prob, "drop_prob");
  prob(config.degradation.swap_prob, "swap_prob");
  if (config.retry_count < 0) throw ValidationError("retry_count must be non-negative");
  if (config.timeout.count() <= 0) throw ValidationError("timeout must be positive");
}

// --- mock -------------------------------------------------------------------

DegradingMockBackend::DegradingMockBackend(std::string name, Origin tag, std::uint64_t seed, Degradation degradation)
    : name_(std::move(name)), tag_(tag), seed_(seed), degradation_(degradation) {
  BackendConfig probe;
  probe.degradation = degradation;
  validate(probe);
}

std::string DegradingMockBackend::degrade(const std::string& input, const UtteranceKey& where, int sentence) const {
  const bool spaced = input.find(' ') != std::string::npos;
  std::vector<std::string> tokens = spaced ? text::split_whitespace(input) : text::code_points(std::string(trim(input)));

  std::uint64_t h = fnv1a64(std::to_string(seed_));
  h = fnv1a64("|" + where.chat_id + "|" + std::to_string(where.index) + "|" + std::to_string(sentence), h);
  std::mt19937_64 rng(h);

  std::vector<std::string> kept;
  kept.reserve(tokens.size());
  for (auto& t : tokens)
    if (unit_interval(rng) >= degradation_.drop_prob) kept.push_back(std::move(t));
  if (kept.empty()) kept.emplace_back("\xE2\x80\xA6");  // U+2026, what an NMT system emits for nothing
  for (std::size_t i = 0; i + 1 < kept.size();) {
    if (unit_interval(rng) < degradation_.swap_prob) {
      std::swap(kept[i], kept[i + 1]);
      i += 2;
    } else {
      i += 1;
    }
  }
  std::string out;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (spaced && i > 0) out += ' ';
    out += kept[i];
  }
  return out;
}

std::vector<std::string> DegradingMockBackend::translate(const TranslationRequest& request) const {
  std::vector<std::string> out;
  if (request.reference && request.sentences.size() == 1 && request.sentence_offset == 0) {
    out.push_back(degrade(*request.reference, request.where, 0));
    return out;
  }
  for (std::size_t i = 0; i < request.sentences.size(); ++i)
    out.push_back(degrade(request.sentences[i], request.where, request.sentence_offset + static_cast<int>(i)));
  return out;
}

// --- human translations -----------------------------------------------------

HumanFileBackend::HumanFileBackend(std::string name, std::map<UtteranceKey, std::string> translations)
    : name_(std::move(name)), translations_(std::move(translations)) {}

HumanFileBackend HumanFileBackend::from_file(std::string name, const std::filesystem::path& path) {
  std::map<UtteranceKey, std::string> table;
  read_jsonl(path, [&](const json& r, std::size_t) {
    UtteranceKey key{require_string(r, "chat_id"), static_cast<int>(require_integer(r, "index"))};
    auto text = require_string(r, "text");
    if (trim(text).empty()) throw ValidationError("empty human translation for " + to_string(key));
    if (!table.emplace(key, std::move(text)).second)
      throw ValidationError("duplicate human translation for " + to_string(key));
  });
  return HumanFileBackend(std::move(name), std::move(table));
}

std::vector<std::string> HumanFileBackend::translate(const TranslationRequest& request) const {
  auto it = translations_.find(request.where);
  if (it == translations_.end())
    throw PipelineError("no human translation aligned to utterance " + where_text(request.where));
  return {it->second};
}

// --- remote -----------------------------------------------------------------

RemoteBackend::RemoteBackend(std::string name, Origin tag, BackendConfig config)
    : name_(std::move(name)), tag_(tag), config_(std::move(config)) {
  validate(config_);
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url))
    throw ValidationError("backend " + name_ + ": endpoint is not an http URL: " + config_.endpoint);
  base_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : "/translate";
}

std::vector<std::string> RemoteBackend::translate(const TranslationRequest& request) const {
  json body{{"src_lang", to_string(request.source)},
            {"tgt_lang", to_string(request.target)},
            {"sentences", request.sentences}};
  const std::string payload = body.dump();

  httplib::Client client(base_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  std::string last_error;
  auto delay = config_.backoff;
  for (int attempt = 0; attempt <= config_.retry_count; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
    auto res = client.Post(path_, payload, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500 || res->status == 429) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw BackendError("backend " + name_ + " rejected utterance " + where_text(request.where) + ": HTTP " +
                         std::to_string(res->status));
    json reply;
    try {
      reply = json::parse(res->body);
    } catch (const json::exception& e) {
      throw BackendError("backend " + name_ + " returned invalid JSON for " + where_text(request.where) + ": " +
                         e.what());
    }
    auto it = reply.find("translations");
    if (it == reply.end() || !it->is_array())
      throw BackendError("backend " + name_ + " reply lacks a translations array for " + where_text(request.where));
    std::vector<std::string> out;
    for (const auto& t : *it) {
      if (!t.is_string()) throw BackendError("backend " + name_ + " returned a non-string translation");
      out.push_back(t.get<std::string>());
    }
    if (out.size() != request.sentences.size())
      throw BackendError("backend " + name_ + " returned " + std::to_string(out.size()) + " translations for " +
                         std::to_string(request.sentences.size()) + " sentences of " + where_text(request.where));
    return out;
  }
  throw BackendError("backend " + name_ + " unreachable after " + std::to_string(config_.retry_count + 1) +
                     " attempts translating " + where_text(request.where) + ": " + last_error);
}

// --- factory ----------------------------------------------------------------

namespace {

std::string env_key(const std::string& name) {
  std::string key = "CHATQE_BACKEND_";
  for (char c : name) key += (c == '-' || c == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return key + "_ENDPOINT";
}

void apply_mock_options(std::string_view opts, BackendConfig& config) {
  std::stringstream ss{std::string(opts)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("mock option '" + item + "' is not key=value");
    const auto key = item.substr(0, eq);
    const auto value = item.substr(eq + 1);
    try {
      if (key == "drop") config.degradation.drop_prob = std::stod(value);
      else if (key == "swap") config.degradation.swap_prob = std::stod(value);
      else if (key == "seed") config.seed = std::stoull(value);
      else throw ValidationError("unknown mock option '" + key + "'");
    } catch (const std::logic_error&) {
      throw ValidationError("bad value for mock option '" + key + "': " + value);
    }
  }
}

}  // namespace

std::unique_ptr<TranslationBackend> make_backend(const std::string& name, Origin tag, BackendConfig config) {
  if (const char* override_endpoint = std::getenv(env_key(name).c_str()); override_endpoint && *override_endpoint)
    config.endpoint = override_endpoint;
  const std::string& ep = config.endpoint;
  if (ep == "mock" || ep.starts_with("mock:")) {
    if (ep.size() > 5) apply_mock_options(std::string_view(ep).substr(5), config);
    validate(config);
    return std::make_unique<DegradingMockBackend>(name, tag, config.seed, config.degradation);
  }
  if (ep.starts_with("http://") || ep.starts_with("https://")) return std::make_unique<RemoteBackend>(name, tag, config);
  if (ep.empty()) throw ValidationError("backend " + name + " has no endpoint");
  return std::make_unique<HumanFileBackend>(HumanFileBackend::from_file(name, ep));
}

// --- operations -------------------------------------------------------------

std::string translate_utterance(const TranslationBackend& backend, const std::string& text, Lang source, Lang target,
                                const UtteranceKey& where, const std::optional<std::string>& reference) {
  if (trim(text).empty()) throw ValidationError("cannot translate empty text at " + where_text(where));
  TranslationRequest req{source, target, {text}, where, reference, 0};
  std::vector<std::string> out;
  try {
    out = backend.translate(req);
  } catch (const BackendError&) {
    throw;
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw BackendError("backend " + backend.name() + " failed on " + where_text(where) + ": " + e.what());
  }
  if (out.size() != 1)
    throw BackendError("backend " + backend.name() + " returned " + std::to_string(out.size()) +
                       " outputs for one utterance at " + where_text(where));
  if (trim(out.front()).empty())
    throw BackendError("backend " + backend.name() + " produced empty output for " + where_text(where));
  return std::move(out.front());
}

std::vector<std::string> translate_windowed(const TranslationBackend& backend,
                                            const std::vector<std::string>& sentences, Lang source, Lang target,
                                            const UtteranceKey& where) {
  if (sentences.empty()) throw ValidationError("translate_windowed needs at least one sentence");
  if (sentences.size() == 1) return {translate_utterance(backend, sentences.front(), source, target, where)};
  std::vector<std::string> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i + 1 < sentences.size(); ++i) {
    TranslationRequest req{source, target, {sentences[i], sentences[i + 1]}, where, std::nullopt, static_cast<int>(i)};
    auto window = backend.translate(req);
    if (window.size() != 2)
      throw BackendError("backend " + backend.name() + " returned " + std::to_string(window.size()) +
                         " sentences for a 2-sentence window at " + where_text(where));
    for (const auto& s : window)
      if (trim(s).empty()) throw BackendError("backend " + backend.name() + " produced empty output for " + where_text(where));
    if (i == 0) out.push_back(std::move(window[0]));
    out.push_back(std::move(window[1]));
  }
  return out;
}

std::vector<std::string> split_sentences(const std::string& input) {
  std::vector<std::string> out;
  std::string current;
  std::size_t pos = 0;
  bool after_terminal = false;
  while (pos < input.size()) {
    const auto start = pos;
    const char32_t cp = text::next_code_point(input, pos);
    const bool terminal = cp == U'.' || cp == U'!' || cp == U'?' || cp == U'。' || cp == U'．' || cp == U'！' ||
                          cp == U'？';
    if (after_terminal && !terminal) {
      // A run of terminal marks ("?!", "...") closes the sentence as a unit.
      if (auto t = trim(current); !t.empty()) out.emplace_back(t);
      current.clear();
      after_terminal = false;
    }
    current.append(input, start, pos - start);
    if (terminal) after_terminal = true;
  }
  if (auto t = trim(current); !t.empty()) out.emplace_back(t);
  return out;
}

std::string join_sentences(const std::vector<std::string>& sentences, Lang lang) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty() && lang == Lang::en) out += ' ';
    out += s;
  }
  return out;
}

std::vector<TranslationCandidate> generate_candidates(const std::vector<Chat>& chats,
                                                      const std::vector<CandidateSource>& sources,
                                                      unsigned workers) {
  if (sources.empty()) return {};
  struct Job {
    const Chat* chat;
    const Utterance* utterance;
  };
  std::vector<Job> jobs;
  for (const auto& chat : chats)
    for (const auto& u : chat.utterances) jobs.push_back({&chat, &u});

  std::vector<std::size_t> order;  // human sources first: they supply the reference
  for (std::size_t i = 0; i < sources.size(); ++i)
    if (sources[i].origin == Origin::human) order.push_back(i);
  for (std::size_t i = 0; i < sources.size(); ++i)
    if (sources[i].origin != Origin::human) order.push_back(i);

  std::vector<std::vector<TranslationCandidate>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto run_job = [&](const Job& job) {
    const Chat& chat = *job.chat;
    const Utterance& u = *job.utterance;
    const UtteranceKey where{chat.chat_id, u.index};
    std::optional<std::string> reference;
    std::vector<std::string> outputs(sources.size());
    for (std::size_t i : order) {
      const auto& backend = *sources[i].backend;
      if (backend.windowed()) {
        outputs[i] = join_sentences(
            translate_windowed(backend, split_sentences(u.text), chat.src_lang, chat.tgt_lang, where), chat.tgt_lang);
      } else {
        outputs[i] = translate_utterance(backend, u.text, chat.src_lang, chat.tgt_lang, where, reference);
      }
      if (sources[i].origin == Origin::human && !reference) reference = outputs[i];
    }
    std::vector<TranslationCandidate> produced;
    for (std::size_t i = 0; i < sources.size(); ++i)
      produced.push_back({chat.chat_id, u.index, sources[i].origin, chat.tgt_lang, std::move(outputs[i]), std::nullopt});
    return produced;
  };

  auto worker = [&] {
    for (;;) {
      if (failed.load()) return;
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = run_job(jobs[i]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed = true;
        return;
      }
    }
  };

  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
  }
  if (first_error) std::rethrow_exception(first_error);

  std::vector<TranslationCandidate> out;
  out.reserve(jobs.size() * sources.size());
  for (auto& r : results)
    for (auto& c : r) out.push_back(std::move(c));
  return out;
}

}  // namespace chatqe
