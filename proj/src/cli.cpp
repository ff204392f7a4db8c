// SPDX-License-Identifier: Apache-2.0
#include "chatqe/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include <CLI11.hpp>

#include "chatqe/backends.hpp"
#include "chatqe/bleu.hpp"
#include "chatqe/coherence.hpp"
#include "chatqe/corpus.hpp"
#include "chatqe/detector/model.hpp"
#include "chatqe/detector/training.hpp"
#include "chatqe/error.hpp"
#include "chatqe/evaluation.hpp"
#include "chatqe/labeling.hpp"
#include "chatqe/prediction.hpp"
#include "chatqe/service/chat_service.hpp"
#include "chatqe/service/http_api.hpp"

namespace chatqe::cli {

namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const BackendError*>(&e) || dynamic_cast<const ModelError*>(&e)) return kBackendFailure;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kIoFailure;
  return kValidationFailure;
}

namespace {

struct FilterArgs {
  std::string ratings, chats, output;
  std::size_t top = 200;
  int min_coherent = kDefaultMinCoherentVotes;
};

struct TranslateArgs {
  std::string chats, output;
  std::vector<std::string> backends, windowed;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  long long timeout_ms = 10'000;
  int retries = 3;
};

struct AggregateArgs {
  std::string candidates, ratings, output, chats, stats;
  std::string rule = "majority";
};

struct BuildArgs {
  std::string chats, candidates, output, stats;
  std::string ctx_policy = "first-correct";
};

struct TrainArgs {
  std::string examples, parallel, low_backend = "mock:drop=0.3,swap=0.2", config, output;
  std::string src = "en", tgt = "ja";
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

struct EvaluateArgs {
  std::string examples, predictions, model, write_predictions, output;
};

struct BleuArgs {
  std::string examples, predictions, output;
  double threshold = 50.0;
  std::string tokenizer = "punctuation", smoothing = "add-one";
};

struct ServeArgs {
  std::string config, model, storage, host;
  std::optional<int> port;
  std::optional<double> threshold;
};

void print_summary(std::ostream& out, const std::string& command, json fields) {
  json line = {{"command", command}, {"status", "ok"}};
  line.update(fields);
  out << line.dump() << std::endl;
}

// --- filter-chats ---------------------------------------------------------

int filter_chats(const FilterArgs& a, std::ostream& out, std::ostream& err) {
  if (a.top == 0) throw ValidationError("--top must be positive");
  const auto scores = score_chats(read_coherence_ratings(a.ratings));
  const auto sel = select_top(scores, a.top, a.min_coherent);
  AtomicFileWriter w(a.output);
  if (!a.chats.empty()) {
    std::map<std::string, Chat> by_id;
    for (auto& c : read_chats(a.chats)) by_id.emplace(c.chat_id, std::move(c));
    for (const auto& id : sel.chat_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw PipelineError("selected chat '" + id + "' is missing from " + a.chats);
      w.write_line(to_json(it->second));
    }
  } else {
    std::map<std::string, const ChatScore*> by_id;
    for (const auto& s : scores) by_id[s.chat_id] = &s;
    for (const auto& id : sel.chat_ids)
      w.write_line({{"chat_id", id},
                    {"coherent_votes", by_id.at(id)->coherent_votes},
                    {"total_votes", by_id.at(id)->total_votes}});
  }
  w.commit();
  if (sel.shortfall > 0)
    err << "warning: only " << sel.chat_ids.size() << " chats reach " << a.min_coherent << " coherent votes\n";
  print_summary(out, "filter-chats",
                {{"rated_chats", scores.size()}, {"selected", sel.chat_ids.size()}, {"shortfall", sel.shortfall},
                 {"output", a.output}});
  return kSuccess;
}

// --- translate-corpus -----------------------------------------------------

int translate_corpus(const TranslateArgs& a, std::ostream& out, std::ostream&) {
  const auto chats = read_chats(a.chats);
  std::vector<std::unique_ptr<TranslationBackend>> owned;
  std::vector<CandidateSource> sources;
  for (const auto& spec : a.backends) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ValidationError("--backend expects ORIGIN=ENDPOINT, got '" + spec + "'");
    const Origin origin = parse_origin(spec.substr(0, eq));
    for (const auto& s : sources)
      if (s.origin == origin) throw ValidationError("duplicate --backend for " + std::string(to_string(origin)));
    BackendConfig cfg;
    cfg.endpoint = spec.substr(eq + 1);
    cfg.timeout = std::chrono::milliseconds(a.timeout_ms);
    cfg.retry_count = a.retries;
    cfg.seed = a.seed + static_cast<std::uint64_t>(origin);
    cfg.windowed = std::find(a.windowed.begin(), a.windowed.end(), std::string(to_string(origin))) != a.windowed.end();
    validate(cfg);
    owned.push_back(make_backend(std::string(to_string(origin)), origin, cfg));
    sources.push_back({origin, owned.back().get()});
  }
  for (const auto& w : a.windowed) {
    const Origin o = parse_origin(w);
    if (std::none_of(sources.begin(), sources.end(), [&](const CandidateSource& s) { return s.origin == o; }))
      throw ValidationError("--windowed " + w + " names no configured backend");
  }
  const auto candidates = generate_candidates(chats, sources, std::max(1u, a.workers));
  write_candidates(candidates, a.output);
  print_summary(out, "translate-corpus",
                {{"chats", chats.size()}, {"candidates", candidates.size()}, {"output", a.output}});
  return kSuccess;
}

// --- aggregate-labels -----------------------------------------------------

int aggregate_labels(const AggregateArgs& a, std::ostream& out, std::ostream&) {
  const auto rule = parse_aggregation_rule(a.rule);
  const auto candidates = read_candidates(a.candidates);
  const auto verdicts = aggregate_verdicts(read_translation_ratings(a.ratings), rule);
  const auto labeled = apply_verdicts(candidates, verdicts);
  std::optional<DatasetStats> stats;
  if (!a.chats.empty()) stats = compute_stats(labeled, read_chats(a.chats));
  if (!a.stats.empty() && !stats) throw ValidationError("--stats needs --chats");
  write_candidates(labeled, a.output);
  if (!a.stats.empty()) write_text_file(a.stats, to_json(*stats).dump(2) + "\n");
  long long bad = 0;
  for (const auto& c : labeled) bad += c.verdict == Verdict::erroneous;
  json summary = {{"rule", to_string(rule)}, {"candidates", labeled.size()}, {"erroneous", bad}, {"output", a.output}};
  if (stats) {
    out << format_stats_table(*stats);
    summary["stats"] = to_json(*stats);
  }
  print_summary(out, "aggregate-labels", std::move(summary));
  return kSuccess;
}

// --- build-dataset --------------------------------------------------------

int build_dataset(const BuildArgs& a, std::ostream& out, std::ostream&) {
  const auto policy = parse_context_policy(a.ctx_policy);
  const auto chats = read_chats(a.chats);
  const auto candidates = read_candidates(a.candidates);
  const auto stats = compute_stats(candidates, chats);
  const auto built = build_quads(chats, candidates, policy);
  write_examples(built.examples, a.output);
  if (!a.stats.empty()) write_text_file(a.stats, to_json(stats).dump(2) + "\n");
  out << format_stats_table(stats);
  json per_dir = json::object();
  for (const auto& [d, s] : stats.directions) per_dir[std::string(to_string(d))] = s.example_count;
  print_summary(out, "build-dataset",
                {{"ctx_policy", to_string(policy)},
                 {"examples", built.examples.size()},
                 {"examples_by_direction", std::move(per_dir)},
                 {"dropped_responses", built.dropped.size()},
                 {"deleted", stats.deleted_total},
                 {"output", a.output}});
  return kSuccess;
}

// --- train-detector -------------------------------------------------------

int train_detector(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  auto config = a.config.empty() ? detector::DetectorConfig{} : detector::load_detector_config(a.config);
  if (a.seed) config.seed = *a.seed;
  if (a.epochs) config.epochs = *a.epochs;
  config.validate();
  if (a.examples.empty() == a.parallel.empty()) throw ValidationError("give exactly one of --examples or --parallel");

  std::vector<LabeledExample> examples;
  if (!a.examples.empty()) {
    examples = read_examples(a.examples);
  } else {
    const Lang src = parse_lang(a.src), tgt = parse_lang(a.tgt);
    BackendConfig bc;
    bc.endpoint = a.low_backend;
    bc.seed = config.seed;
    const auto low = make_backend("low", Origin::mt_low, bc);
    examples = detector::generate_training_set(detector::read_parallel_pairs(a.parallel), *low, src, tgt);
  }
  const long long total_steps =
      config.epochs * static_cast<long long>((examples.size() + static_cast<std::size_t>(config.batch_size) - 1) /
                                             static_cast<std::size_t>(config.batch_size));
  const auto result = detector::train(examples, config, [&](long long step, double loss, double lr) {
    if (step % 50 == 0 || step == total_steps)
      err << "step " << step << "/" << total_steps << " loss " << loss << " lr " << lr << "\n";
  });
  detector::save_training_result(result, a.output);
  print_summary(out, "train-detector",
                {{"examples", examples.size()},
                 {"steps", result.manifest.steps},
                 {"mean_loss", result.manifest.mean_loss},
                 {"dataset_sha256", result.manifest.dataset_sha256},
                 {"parameters", result.model.network().parameter_count()},
                 {"output", a.output}});
  return kSuccess;
}

// --- evaluate -------------------------------------------------------------

std::vector<PredictionRecord> predict_all(const detector::ErrorDetector& model,
                                          const std::vector<LabeledExample>& examples) {
  std::vector<ChatQuad> quads;
  quads.reserve(examples.size());
  for (const auto& e : examples) quads.push_back(e.quad);
  const auto preds = model.predict_batch(quads);
  std::vector<PredictionRecord> out;
  out.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i)
    out.push_back({quads[i].chat_id, quads[i].index, quads[i].origin, quads[i].direction, preds[i]});
  return out;
}

int evaluate_cmd(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  if (a.predictions.empty() == a.model.empty()) throw ValidationError("give exactly one of --predictions or --model");
  if (!a.write_predictions.empty() && a.model.empty()) throw ValidationError("--write-predictions needs --model");
  const auto examples = read_examples(a.examples);
  std::vector<PredictionRecord> preds;
  if (!a.predictions.empty()) {
    preds = read_predictions(a.predictions);
  } else {
    preds = predict_all(detector::DetectorModel::load(a.model), examples);
    if (!a.write_predictions.empty()) write_predictions(preds, a.write_predictions);
  }
  const auto reports = evaluate(examples, preds);
  if (!a.output.empty()) write_text_file(a.output, to_json(reports).dump(2) + "\n");
  out << format_report(reports);
  print_summary(out, "evaluate", {{"examples", examples.size()}, {"metrics", to_json(reports)}});
  return kSuccess;
}

// --- report-bleu ----------------------------------------------------------

int report_bleu(const BleuArgs& a, std::ostream& out, std::ostream&) {
  BleuConfig cfg;
  cfg.tokenizer = parse_bleu_tokenizer(a.tokenizer);
  cfg.smoothing = parse_bleu_smoothing(a.smoothing);
  if (!(a.threshold >= 0 && a.threshold <= 100)) throw ValidationError("--threshold must be in [0, 100]");
  const auto examples = read_examples(a.examples);
  std::vector<PredictionRecord> preds;
  if (!a.predictions.empty()) preds = read_predictions(a.predictions);
  // The human translation of each response is the BLEU reference.
  std::map<UtteranceKey, std::string> refs;
  for (const auto& e : examples)
    if (e.quad.origin == Origin::human) refs[{e.quad.chat_id, e.quad.index}] = e.quad.resp_tgt;
  const auto report = bleu_vs_label_report(examples, preds, refs, a.threshold, cfg);
  if (!a.output.empty()) write_text_file(a.output, to_json(report).dump(2) + "\n");
  out << format_report(report);
  print_summary(out, "report-bleu",
                {{"threshold", a.threshold}, {"references", refs.size()}, {"flagged", report.items.size()}});
  return kSuccess;
}

// --- serve ----------------------------------------------------------------

std::atomic<service::ApiServer*> g_server{nullptr};

extern "C" void stop_on_signal(int) {
  if (auto* s = g_server.load()) s->stop();
}

int serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  auto settings = service::load_service_settings(a.config.empty() ? std::nullopt : std::optional<fs::path>(a.config));
  if (!a.model.empty()) settings.model_path = a.model;
  if (!a.storage.empty()) settings.storage_dir = a.storage;
  if (!a.host.empty()) settings.host = a.host;
  if (a.port) settings.port = *a.port;
  if (a.threshold) settings.threshold = *a.threshold;

  std::shared_ptr<const detector::ErrorDetector> model;
  if (settings.model_path)
    model = std::make_shared<detector::DetectorModel>(detector::DetectorModel::load(*settings.model_path));
  else
    err << "no detector model configured; messages are delivered unchecked\n";
  std::shared_ptr<const TranslationBackend> backend =
      make_backend(settings.backend_name, Origin::mt_high, settings.backend);

  service::ServiceOptions opts;
  opts.threshold = settings.threshold;
  opts.storage_dir = settings.storage_dir;
  service::ChatService chat(backend, model, opts);
  service::ApiServer api(chat);
  const int port = api.bind(settings.host, settings.port);
  g_server = &api;
  std::signal(SIGINT, stop_on_signal);
  std::signal(SIGTERM, stop_on_signal);
  print_summary(out, "serve",
                {{"host", settings.host},
                 {"port", port},
                 {"detector", model ? "loaded" : "unavailable"},
                 {"storage_dir", settings.storage_dir.string()}});
  api.run();
  g_server = nullptr;
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Erroneous chat-translation detection toolkit", "chatqe"};
  app.require_subcommand(1);

  FilterArgs fa;
  auto* filter = app.add_subcommand("filter-chats", "Select the most coherent chats from crowd ratings");
  filter->add_option("--ratings", fa.ratings, "Coherence ratings JSONL")->required();
  filter->add_option("--chats", fa.chats, "Chats JSONL; when given the selected chats are written")
      ;
  filter->add_option("--top", fa.top, "Number of chats to keep")->capture_default_str();
  filter->add_option("--min-coherent", fa.min_coherent, "Minimum coherent votes")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  filter->add_option("-o,--output", fa.output, "Output JSONL")->required();

  TranslateArgs ta;
  auto* translate = app.add_subcommand("translate-corpus", "Produce translation candidates for every utterance");
  translate->add_option("--chats", ta.chats, "Chats JSONL")->required();
  translate
      ->add_option("--backend", ta.backends,
                   "ORIGIN=ENDPOINT, repeatable; ENDPOINT is mock[:drop=..,swap=..], an http URL or a "
                   "translations JSONL")
      ->required();
  translate->add_option("--windowed", ta.windowed, "Origins translated with two-sentence windows");
  translate->add_option("--seed", ta.seed, "Seed for mock backends")->capture_default_str();
  translate->add_option("--workers", ta.workers, "Parallel translation workers")->capture_default_str();
  translate->add_option("--timeout-ms", ta.timeout_ms, "Remote request timeout")->capture_default_str();
  translate->add_option("--retries", ta.retries, "Remote retry count")->capture_default_str();
  translate->add_option("-o,--output", ta.output, "Candidates JSONL")->required();

  AggregateArgs aa;
  auto* aggregate = app.add_subcommand("aggregate-labels", "Aggregate crowd quality ratings into verdicts");
  aggregate->add_option("--candidates", aa.candidates, "Candidates JSONL")->required();
  aggregate->add_option("--ratings", aa.ratings, "Translation ratings JSONL")->required();
  aggregate->add_option("--rule", aa.rule, "majority | any-bad | unanimous-bad")->capture_default_str();
  aggregate->add_option("--chats", aa.chats, "Chats JSONL, enables dataset statistics");
  aggregate->add_option("--stats", aa.stats, "Write statistics JSON here");
  aggregate->add_option("-o,--output", aa.output, "Labeled candidates JSONL")->required();

  BuildArgs ba;
  auto* build = app.add_subcommand("build-dataset", "Build detector examples from labeled candidates");
  build->add_option("--chats", ba.chats, "Chats JSONL")->required();
  build->add_option("--candidates", ba.candidates, "Labeled candidates JSONL")->required();
  build->add_option("--ctx-policy", ba.ctx_policy, "first-correct | human")->capture_default_str();
  build->add_option("--stats", ba.stats, "Write statistics JSON here");
  build->add_option("-o,--output", ba.output, "Examples JSONL")->required();

  TrainArgs tra;
  auto* train = app.add_subcommand("train-detector", "Train the error detector");
  train->add_option("--examples", tra.examples, "Labeled examples JSONL");
  train->add_option("--parallel", tra.parallel, "Aligned pairs JSONL; negatives come from --low-backend")
      ;
  train->add_option("--low-backend", tra.low_backend, "Endpoint of the low-quality backend")->capture_default_str();
  train->add_option("--src", tra.src, "Source language of --parallel")->capture_default_str();
  train->add_option("--tgt", tra.tgt, "Target language of --parallel")->capture_default_str();
  train->add_option("--config", tra.config, "Detector config JSON");
  train->add_option("--seed", tra.seed, "Override the config seed");
  train->add_option("--epochs", tra.epochs, "Override the config epochs");
  train->add_option("-o,--output", tra.output, "Model directory")->required();

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "Score predictions against gold labels");
  eval->add_option("--examples", ea.examples, "Gold examples JSONL")->required();
  eval->add_option("--predictions", ea.predictions, "Predictions JSONL");
  eval->add_option("--model", ea.model, "Model directory; predictions are computed");
  eval->add_option("--write-predictions", ea.write_predictions, "Save computed predictions");
  eval->add_option("-o,--output", ea.output, "Metrics JSON");

  BleuArgs bla;
  auto* bleu = app.add_subcommand("report-bleu", "List high-BLEU translations that are labeled or predicted erroneous");
  bleu->add_option("--examples", bla.examples, "Examples JSONL (human rows supply references)")
      ->required()
      ;
  bleu->add_option("--predictions", bla.predictions, "Predictions JSONL");
  bleu->add_option("--threshold", bla.threshold, "Minimum sentence BLEU (0-100)")->capture_default_str();
  bleu->add_option("--tokenizer", bla.tokenizer, "whitespace | punctuation")->capture_default_str();
  bleu->add_option("--smoothing", bla.smoothing, "none | epsilon | add-one | exponential")->capture_default_str();
  bleu->add_option("-o,--output", bla.output, "Report JSON");

  ServeArgs sa;
  auto* srv = app.add_subcommand("serve", "Run the chat relay service");
  srv->add_option("--config", sa.config, "Service settings JSON");
  srv->add_option("--model", sa.model, "Detector model directory");
  srv->add_option("--port", sa.port, "Listen port (0 picks one)");
  srv->add_option("--host", sa.host, "Listen address");
  srv->add_option("--storage", sa.storage, "Transcript storage directory");
  srv->add_option("--threshold", sa.threshold, "Warning threshold");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kValidationFailure;
  }

  try {
    if (filter->parsed()) return filter_chats(fa, out, err);
    if (translate->parsed()) return translate_corpus(ta, out, err);
    if (aggregate->parsed()) return aggregate_labels(aa, out, err);
    if (build->parsed()) return build_dataset(ba, out, err);
    if (train->parsed()) return train_detector(tra, out, err);
    if (eval->parsed()) return evaluate_cmd(ea, out, err);
    if (bleu->parsed()) return report_bleu(bla, out, err);
    if (srv->parsed()) return serve(sa, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kValidationFailure;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace chatqe::cli
