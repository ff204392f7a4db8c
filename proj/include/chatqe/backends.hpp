// SPDX-License-Identifier: Apache-2.0
//
// Translation producers behind one interface: remote MT endpoints, a
// translator-supplied file, and a seeded degrading mock. Backends only ever
// see the text of a single utterance; chat context is never passed along.
#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chatqe/corpus.hpp"

namespace chatqe {

struct TranslationRequest {
  Lang source = Lang::en;
  Lang target = Lang::ja;
  std::vector<std::string> sentences;
  /// Coordinates of the utterance being translated; used for diagnostics,
  /// file alignment and mock seeding. Never sent to remote endpoints.
  UtteranceKey where;
  /// Reference translation of the whole utterance, when the caller has one.
  /// Only reference-wrapping backends (the degrading mock) read it.
  std::optional<std::string> reference;
  /// Position of sentences[0] inside its utterance.
  int sentence_offset = 0;
};

class TranslationBackend {
 public:
  virtual ~TranslationBackend() = default;

  virtual const std::string& name() const = 0;
  virtual Origin quality_tag() const = 0;
  /// Whether generate_candidates should feed this backend two-sentence
  /// windows (translate_windowed) instead of whole utterances.
  virtual bool windowed() const { return false; }

  /// One output per input sentence, in order. Throws BackendError.
  virtual std::vector<std::string> translate(const TranslationRequest& request) const = 0;
};

struct Degradation {
  double drop_prob = 0.0;
  double swap_prob = 0.0;
};

struct BackendConfig {
  /// http(s) URL for remote backends, a file path for the human ingestion
  /// backend, or "mock".
  std::string endpoint;
  std::chrono::milliseconds timeout{10'000};
  int retry_count = 3;
  std::chrono::milliseconds backoff{200};
  std::uint64_t seed = 0;
  Degradation degradation;
  bool windowed = false;
};

/// Seeded word dropout and adjacent-token swaps applied to the reference
/// translation (or to the input sentence when no reference is supplied).
/// Stateless: the output depends only on (seed, coordinates, text).
class DegradingMockBackend final : public TranslationBackend {
 public:
  DegradingMockBackend(std::string name, Origin tag, std::uint64_t seed, Degradation degradation);

  const std::string& name() const override { return name_; }
  Origin quality_tag() const override { return tag_; }
  std::vector<std::string> translate(const TranslationRequest& request) const override;

  /// The perturbation used for one sentence. Whitespace-separated text is
  /// perturbed per word, unspaced text (Japanese) per character.
  std::string degrade(const std::string& text, const UtteranceKey& where, int sentence) const;

 private:
  std::string name_;
  Origin tag_;
  std::uint64_t seed_;
  Degradation degradation_;
};

/// Serves translator-supplied translations aligned by (chat_id, index) from
/// a human_translations.jsonl file.
class HumanFileBackend final : public TranslationBackend {
 public:
  HumanFileBackend(std::string name, std::map<UtteranceKey, std::string> translations);
  static HumanFileBackend from_file(std::string name, const std::filesystem::path& path);

  const std::string& name() const override { return name_; }
  Origin quality_tag() const override { return Origin::human; }
  /// Returns the stored translation of the whole utterance; throws
  /// PipelineError when the utterance has none.
  std::vector<std::string> translate(const TranslationRequest& request) const override;

 private:
  std::string name_;
  std::map<UtteranceKey, std::string> translations_;
};

/// POST {"src_lang","tgt_lang","sentences"} -> {"translations"} over
/// HTTP+JSON, with a fixed number of retries and exponential backoff.
class RemoteBackend final : public TranslationBackend {
 public:
  RemoteBackend(std::string name, Origin tag, BackendConfig config);

  const std::string& name() const override { return name_; }
  Origin quality_tag() const override { return tag_; }
  bool windowed() const override { return config_.windowed; }
  std::vector<std::string> translate(const TranslationRequest& request) const override;

 private:
  std::string name_;
  Origin tag_;
  BackendConfig config_;
  std::string base_;  // scheme://host[:port]
  std::string path_;
};

/// Builds a backend from its config: endpoint "mock" (optionally
/// "mock:drop=0.3,swap=0.2,seed=7"), an http:// URL, or a file path.
/// The environment variable CHATQE_BACKEND_<NAME>_ENDPOINT overrides the
/// endpoint (name upper-cased, '-' mapped to '_').
std::unique_ptr<TranslationBackend> make_backend(const std::string& name, Origin tag, BackendConfig config);

/// Throws ValidationError for probabilities outside [0,1] or negative retry
/// counts and timeouts.
void validate(const BackendConfig& config);

/// Translates one utterance as a single unit. Throws BackendError (carrying
/// the coordinates) when the backend fails or returns empty text.
std::string translate_utterance(const TranslationBackend& backend, const std::string& text, Lang source,
                                Lang target, const UtteranceKey& where = {},
                                const std::optional<std::string>& reference = std::nullopt);

/// Sliding two-sentence window with stride 1. The first window contributes
/// both of its output sentences, each later window only its second one, so
/// the output has exactly as many sentences as the input. A one-sentence
/// input falls back to translate_utterance.
std::vector<std::string> translate_windowed(const TranslationBackend& backend,
                                            const std::vector<std::string>& sentences, Lang source, Lang target,
                                            const UtteranceKey& where = {});

/// Splits after terminal punctuation (。．.!?！？), keeping the delimiter
/// with its sentence. Never returns an empty list for non-blank text.
std::vector<std::string> split_sentences(const std::string& text);

/// Joins translated sentences the way the target language writes them.
std::string join_sentences(const std::vector<std::string>& sentences, Lang lang);

struct CandidateSource {
  Origin origin;
  const TranslationBackend* backend;
};

/// One candidate per (utterance, source). When a human source is present
/// its translation is passed to the other backends as the reference.
/// Utterances are translated on `workers` threads; output order is corpus
/// order then source order regardless of completion order. The first
/// failure aborts the whole run.
std::vector<TranslationCandidate> generate_candidates(const std::vector<Chat>& chats,
                                                      const std::vector<CandidateSource>& sources,
                                                      unsigned workers = 1);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t hash = 0xcbf29ce484222325ULL);

}  // namespace chatqe
