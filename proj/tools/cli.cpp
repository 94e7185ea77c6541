#include "cli.hpp"

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "http_server.hpp"
#include "modpipe/config.hpp"
#include "modpipe/corpus.hpp"
#include "modpipe/desk.hpp"
#include "modpipe/error.hpp"
#include "modpipe/evalx.hpp"
#include "modpipe/model.hpp"
#include "modpipe/probe.hpp"
#include "modpipe/quality.hpp"
#include "modpipe/select.hpp"
#include "modpipe/synthgen.hpp"
#include "modpipe/train.hpp"

namespace modpipe::tools {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
  std::string config;

  // shared
  std::string data, validation, pool, target_pool, checkpoint, out, out_dir, lexicon, redteam;
  std::optional<std::uint64_t> seed;

  // init
  std::string desk_dir;
  bool force = false;

  // import
  std::string input, mapping, text_field = "text", id_field, format;
  std::optional<double> threshold;

  // synth
  std::string templates, counterfactual;
  std::size_t count = 0;
  bool with_replacement = false;

  // train
  std::string mode, report;
  std::optional<double> lambda, lr;
  std::optional<std::size_t> epochs, batch_size;
  bool allow_noisy = false;

  // select / loop
  std::optional<std::size_t> size, iterations, pool_size;
  bool random_only = false;

  // audit / crossval
  std::string selection_out, truth;

  // probe / eval
  std::string text, category = "H", output_format = "json";

  // serve
  std::string host, queue, corpus, token;
  std::optional<int> port;
};

// Explicit paths (flag or environment) must exist; the implicit
// ./modpipe.json is optional.
AppConfig load_config(const Options& o) {
  const std::optional<std::string> flag =
      o.config.empty() ? std::nullopt : std::optional<std::string>(o.config);
  const char* env = std::getenv(kConfigEnvVar);
  const bool explicit_path = flag || (env != nullptr && *env != '\0');
  const auto path = resolve_config_path(flag);
  if (!explicit_path && !fs::exists(path)) return AppConfig{};
  return load_app_config(path);
}

std::string pick(const std::string& flag, const std::string& configured, const char* what) {
  if (!flag.empty()) return flag;
  if (!configured.empty()) return configured;
  throw InputError(std::string("missing ") + what);
}

void emit(const json& j, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << j.dump(2) << "\n";
    return;
  }
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw StorageError("cannot write " + path);
  f << j.dump(2) << "\n";
}

json stats_json(const Dataset& d) {
  const auto s = stats(d);
  json per = json::object();
  for (auto c : kAllCategories) {
    const auto& cc = s.per_category[index_of(c)];
    per[std::string(to_string(c))] = {
        {"positive", cc.positive}, {"negative", cc.negative}, {"unlabeled", cc.unlabeled}};
  }
  return {{"samples", s.samples}, {"labeled", s.labeled}, {"undesired", s.undesired},
          {"per_category", per}};
}

Dataset load_dataset(const std::string& path) {
  if (!fs::exists(path)) throw NotFoundError("dataset not found: " + path);
  return import_jsonl(path);
}

void apply_train_flags(const Options& o, TrainConfig& t) {
  if (!o.mode.empty()) {
    if (o.mode == "supervised") t.mode = TrainMode::supervised;
    else if (o.mode == "wdat") t.mode = TrainMode::wdat;
    else throw InputError("unknown mode: " + o.mode);
  }
  if (o.lambda) t.lambda = *o.lambda;
  if (o.lr) t.learning_rate = *o.lr;
  if (o.epochs) t.max_epochs = *o.epochs;
  if (o.batch_size) t.batch_size = *o.batch_size;
  if (o.seed) t.seed = *o.seed;
  t.validate();
}

// ---- init

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw StorageError("cannot write " + path.string());
  for (const auto& l : lines) f << l << "\n";
}

int cmd_init(const Options& o, std::ostream& out) {
  const fs::path cfg_path = o.out.empty() ? fs::path(kDefaultConfigFile) : fs::path(o.out);
  if (fs::exists(cfg_path) && !o.force) {
    throw InputError("refusing to overwrite " + cfg_path.string() + " (use --force)");
  }
  AppConfig c;
  json summary = {{"config", cfg_path.string()}};
  if (!o.desk_dir.empty()) {
    // A small two-domain desk setup plus settings that learn at this scale.
    const fs::path dir = o.desk_dir;
    fs::create_directories(dir);
    const std::uint64_t seed = o.seed.value_or(1);
    desk::Language lang(seed);

    auto make = [&](const char* name, const char* prefix, std::size_t n,
                    std::array<double, desk::kNumEvents> rates, Domain domain, std::uint64_t s) {
      desk::CorpusSpec spec;
      spec.name = name;
      spec.id_prefix = prefix;
      spec.size = n;
      spec.event_rates = rates;
      spec.domain = domain;
      spec.style_tokens = domain == Domain::target ? 2 : 0;
      spec.channels = {{"forum", 0.6}, {"chat", 0.3}, {"support", 0.1}};
      spec.seed = s;
      auto d = desk::generate(lang, spec);
      export_jsonl(d, dir / (std::string(name) + ".jsonl"));
      return d.size();
    };
    make("train", "tr", 2000, desk::uniform_rates(0.04), Domain::source, seed * 10 + 1);
    make("validation", "va", 1000, desk::uniform_rates(0.04), Domain::source, seed * 10 + 2);
    make("pool", "po", 8000, desk::rare_rates(), Domain::source, seed * 10 + 3);
    make("target", "ta", 1000, desk::uniform_rates(0.04), Domain::target, seed * 10 + 4);
    write_lines(dir / "lexicon.txt", lang.all_keywords());

    const auto spec = desk::model_spec();
    c.featurizer = spec.featurizer;
    c.network = spec.network;
    c.train = desk::train_config();
    c.loop.pool_size = 4000;
    c.loop.batch_size = 300;
    c.loop.reweight_key = "channel";
    c.paths.data = (dir / "train.jsonl").string();
    c.paths.validation = (dir / "validation.jsonl").string();
    c.paths.pool = (dir / "pool.jsonl").string();
    c.paths.target_pool = (dir / "target.jsonl").string();
    c.paths.lexicon = (dir / "lexicon.txt").string();
    c.paths.checkpoint = (dir / "model.ckpt").string();
    c.paths.redteam = (dir / "redteam.jsonl").string();
    c.paths.out_dir = (dir / "loop").string();
    c.service.checkpoint = c.paths.checkpoint;
    c.service.corpus_path = c.paths.data;
    c.service.redteam_path = c.paths.redteam;
    summary["desk"] = dir.string();
  }
  if (const auto parent = cfg_path.parent_path(); !parent.empty()) fs::create_directories(parent);
  emit(to_json(c), cfg_path.string(), out);
  out << summary.dump() << "\n";
  return 0;
}

// ---- import

int cmd_import(const Options& o, std::ostream& out) {
  if (o.input.empty()) throw InputError("missing --input");
  if (o.out.empty()) throw InputError("missing --out");
  json summary;
  Dataset d;
  if (o.mapping.empty()) {
    d = load_dataset(o.input);
    summary["skipped"] = 0;
  } else {
    TaxonomyMapping mapping;
    if (o.mapping == "jigsaw") mapping = TaxonomyMapping::jigsaw();
    else if (o.mapping == "perspective") mapping = TaxonomyMapping::perspective();
    else mapping = TaxonomyMapping::load(o.mapping);
    LabelFieldSpec spec;
    spec.text_field = o.text_field;
    spec.id_field = o.id_field;
    spec.threshold = o.threshold;
    if (o.format == "csv") spec.format = ExternalFormat::csv;
    else if (o.format == "jsonl") spec.format = ExternalFormat::jsonl;
    else if (!o.format.empty()) throw InputError("unknown format: " + o.format);
    if (!fs::exists(o.input)) throw NotFoundError("input not found: " + o.input);
    auto r = adapt_external(o.input, mapping, spec);
    d = std::move(r.dataset);
    summary["skipped"] = r.skipped;
    summary["errors"] = r.errors;
  }
  export_jsonl(d, o.out);
  summary["out"] = o.out;
  summary["stats"] = stats_json(d);
  out << summary.dump() << "\n";
  return 0;
}

// ---- synth

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw InputError("missing --out");
  if (o.templates.empty() && o.counterfactual.empty()) {
    throw InputError("need --templates and/or --counterfactual");
  }
  Dataset d("synthetic");
  std::size_t from_templates = 0, from_counterfactual = 0;
  if (!o.templates.empty()) {
    if (o.count == 0) throw InputError("--count must be >= 1");
    ExpandOptions opts;
    opts.with_replacement = o.with_replacement;
    const auto seed = o.seed.value_or(0);
    for (const auto& t : load_templates(o.templates)) {
      for (auto& s : expand_template(t, o.count, seed, opts)) {
        d.add(std::move(s));
        ++from_templates;
      }
    }
  }
  if (!o.counterfactual.empty()) {
    std::ifstream f(o.counterfactual, std::ios::binary);
    if (!f) throw NotFoundError("counterfactual spec not found: " + o.counterfactual);
    json j;
    try {
      j = json::parse(f);
    } catch (const json::exception& e) {
      throw InputError(o.counterfactual + ": " + e.what());
    }
    auto list = [&](const char* key) {
      if (!j.contains(key) || !j[key].is_array()) {
        throw InputError(o.counterfactual + ": '" + key + "' must be an array of strings");
      }
      return j[key].get<std::vector<std::string>>();
    };
    for (auto& s : build_counterfactual(list("identities"), list("objects"), list("predicates"))) {
      d.add(std::move(s));
      ++from_counterfactual;
    }
  }
  export_jsonl(d, o.out);
  out << json{{"out", o.out},
              {"templates", from_templates},
              {"counterfactual", from_counterfactual}}
             .dump()
      << "\n";
  return 0;
}

// ---- train

int cmd_train(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  TrainConfig tc = c.train;
  apply_train_flags(o, tc);

  const auto raw = load_dataset(pick(o.data, c.paths.data, "--data"));
  const auto labeled = filter_noisy_synthetic(raw, o.allow_noisy);
  std::optional<Dataset> target, validation;
  TrainData data;
  data.labeled = &labeled;
  if (tc.mode == TrainMode::wdat) {
    target = load_dataset(pick(o.target_pool, c.paths.target_pool, "--target-pool"));
    data.target_pool = &*target;
  }
  const auto vpath = o.validation.empty() ? c.paths.validation : o.validation;
  if (!vpath.empty()) {
    validation = load_dataset(vpath);
    data.validation = &*validation;
  }

  const auto ckpt = pick(o.out, c.paths.checkpoint, "--out");
  auto result = train(data, c.model_spec(), tc);
  save_checkpoint(result.model, ckpt);
  if (!o.report.empty()) emit(to_json(result.report), o.report, out);

  json summary = {{"checkpoint", ckpt},
                  {"checkpoint_id", checkpoint_id(result.model)},
                  {"samples", labeled.size()},
                  {"dropped_noisy", raw.size() - labeled.size()},
                  {"epochs", result.report.epochs.size()},
                  {"best_epoch", result.report.best_epoch}};
  if (!result.report.epochs.empty()) {
    summary["final_loss"] = result.report.epochs.back().objective;
  }
  out << summary.dump() << "\n";
  return 0;
}

// ---- select

int cmd_select(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto model = load_checkpoint(pick(o.checkpoint, c.paths.checkpoint, "--checkpoint"));
  const auto pool = load_dataset(pick(o.pool, c.paths.pool, "--pool"));
  IterationConfig it;
  it.batch_size = o.size.value_or(c.loop.batch_size);
  it.reweight_key = c.loop.reweight_key;
  it.reweight_oversample = c.loop.reweight_oversample;
  it.seed = o.seed.value_or(c.loop.seed);
  const auto scores = score_all(model, pool);
  const auto batch = select_batch(pool, scores, c.mix, it);
  emit(to_json(batch), o.out, out);
  if (!o.out.empty()) {
    out << json{{"out", o.out}, {"selected", batch.entries.size()}, {"warnings", batch.warnings}}
               .dump()
        << "\n";
  }
  return 0;
}

// ---- loop

int cmd_loop(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  LoopConfig lc = c.loop;
  if (o.iterations) lc.iterations = *o.iterations;
  if (o.pool_size) lc.pool_size = *o.pool_size;
  if (o.size) lc.batch_size = *o.size;
  if (o.seed) lc.seed = *o.seed;
  TrainConfig tc = c.train;
  apply_train_flags(o, tc);

  const auto initial = load_dataset(pick(o.data, c.paths.data, "--data"));
  const auto pool = load_dataset(pick(o.pool, c.paths.pool, "--pool"));
  const auto validation = load_dataset(pick(o.validation, c.paths.validation, "--validation"));
  const fs::path dir = pick(o.out_dir, c.paths.out_dir, "--out-dir");

  // The pool's own labels stand in for the labeling team.
  SimulatedAnnotator oracle(pool, 0.0, lc.seed, Role::oracle, "pool-labels");
  LoopInputs in;
  in.initial = &initial;
  in.pool_source = &pool;
  in.validation = &validation;
  in.mix = c.mix;
  if (o.random_only) in.mix = StrategyMix{1.0, 0.0, 0.0, c.mix.tau};
  in.out_dir = dir;

  const auto result = run_loop(in, lc, c.model_spec(), tc, oracle);
  const auto metrics = dir / "metrics.json";
  emit(to_json(result), metrics.string(), out);
  export_jsonl(result.final_training, dir / "training.jsonl");
  out << json{{"metrics", metrics.string()},
              {"checkpoints", result.checkpoint_paths.size()},
              {"final_training_size", result.final_training.size()}}
             .dump()
      << "\n";
  return 0;
}

// ---- audit

int cmd_audit(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto d = load_dataset(pick(o.data, c.paths.data, "--data"));
  std::map<std::string, LabelVector> annotator, auditor;
  for (const auto& s : d) {
    auto a = latest_vector(s, Role::annotator);
    auto b = latest_vector(s, Role::auditor);
    if (a && b) {
      annotator.emplace(s.id, *a);
      auditor.emplace(s.id, *b);
    }
  }

  json result;
  AuditReport report;
  const auto ckpt = o.checkpoint.empty() ? c.paths.checkpoint : o.checkpoint;
  if (!o.checkpoint.empty() || !o.selection_out.empty()) {
    const auto model = load_checkpoint(pick(ckpt, "", "--checkpoint"));
    const auto scores = score_all(model, d);
    auto selection = audit_select(d, scores, o.seed.value_or(0), c.audit);
    json sel = json::object();
    json pending = json::array();
    AuditSelection ready;
    for (auto cat : kAllCategories) {
      const auto& ids = selection[index_of(cat)];
      sel[std::string(to_string(cat))] = ids;
      for (const auto& id : ids) {
        if (auditor.count(id)) ready[index_of(cat)].push_back(id);
        else pending.push_back(id);
      }
    }
    if (!o.selection_out.empty()) emit(sel, o.selection_out, out);
    report = audit_f1(annotator, auditor, &ready, c.audit);
    result["pending"] = pending;
  } else {
    report = audit_f1(annotator, auditor, nullptr, c.audit);
  }
  result["report"] = to_json(report);
  result["audited"] = auditor.size();
  emit(result, o.out, out);
  return 0;
}

// ---- crossval

int cmd_crossval(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  TrainConfig tc = c.train;
  apply_train_flags(o, tc);
  const auto d = load_dataset(pick(o.data, c.paths.data, "--data"));
  const auto seed = o.seed.value_or(tc.seed);
  const auto cv = crossval_flag(d, c.model_spec(), tc, seed, c.crossval);
  std::vector<std::string> flagged(cv.flagged.begin(), cv.flagged.end());

  json result = {{"flagged", flagged},
                 {"first_half", cv.first_half},
                 {"second_half", cv.second_half}};
  std::vector<std::string> queue = flagged;
  if (!o.truth.empty()) {
    // Auditor answers come from a reference copy of the corpus.
    const auto truth = load_dataset(o.truth);
    SimulatedAnnotator auditor(truth, 0.0, seed, Role::auditor, "auditor");
    const auto decision = relabel_trigger(flagged, d, auditor, seed, c.relabel);
    result["relabel"] = to_json(decision);
    queue = decision.queue;
  }
  if (!o.out.empty()) {
    write_id_queue(queue, o.out);
    result["queue"] = o.out;
  }
  out << result.dump(2) << "\n";
  return 0;
}

// ---- probe

int cmd_probe(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto model = load_checkpoint(pick(o.checkpoint, c.paths.checkpoint, "--checkpoint"));
  const double thr = o.threshold.value_or(c.probe_threshold);

  if (!o.text.empty()) {
    const auto r = input_reduce(model, o.text, parse_category(o.category), thr);
    emit({{"category", o.category},
          {"original_score", r.original_score},
          {"reduced", r.reduced_text()},
          {"reduced_score", r.reduced_score},
          {"chars_before", r.chars_before},
          {"chars_after", r.chars_after},
          {"below_threshold_skip", r.below_threshold_skip}},
         o.out, out);
    return 0;
  }
  if (!o.redteam.empty()) {
    const auto cases = load_dataset(o.redteam);
    emit(to_json(evaluate_redteam(model, cases, o.threshold.value_or(0.5))), o.out, out);
    return 0;
  }
  const auto d = load_dataset(pick(o.data, c.paths.data, "--data"));
  const auto lex = pick(o.lexicon, c.paths.lexicon, "--lexicon");
  emit(to_json(keytoken_report(model, d, fs::path(lex), thr)), o.out, out);
  return 0;
}

// ---- eval

int cmd_eval(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  const auto model = load_checkpoint(pick(o.checkpoint, c.paths.checkpoint, "--checkpoint"));
  const auto path = pick(o.data, c.paths.validation, "--data");
  auto d = load_dataset(path);
  d.set_name(fs::path(path).stem().string());
  const auto table = evaluate(model, d);
  if (o.output_format == "text") {
    if (o.out.empty()) {
      out << to_text(table);
    } else {
      std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
      if (!f) throw StorageError("cannot write " + o.out);
      f << to_text(table);
    }
  } else if (o.output_format == "json") {
    emit(to_json(table), o.out, out);
  } else {
    throw InputError("unknown output format: " + o.output_format);
  }
  return 0;
}

// ---- serve

HttpServer* g_server = nullptr;

extern "C" void handle_stop_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

int cmd_serve(const Options& o, std::ostream& out) {
  const auto c = load_config(o);
  ServiceConfig sc = c.service;
  if (!o.checkpoint.empty()) sc.checkpoint = o.checkpoint;
  if (sc.checkpoint.empty()) sc.checkpoint = c.paths.checkpoint;
  if (!o.host.empty()) sc.host = o.host;
  if (o.port) sc.port = *o.port;
  if (!o.queue.empty()) sc.queue_path = o.queue;
  if (!o.corpus.empty()) sc.corpus_path = o.corpus;
  if (!o.redteam.empty()) sc.redteam_path = o.redteam;
  if (!o.token.empty()) sc.auth_token = o.token;

  auto services = make_services(sc);
  HttpServer server(services.scorer, services.labeling, sc);
  const int port = server.bind();
  out << json{{"listening", sc.host + ":" + std::to_string(port)},
              {"checkpoint", services.scorer->checkpoint()}}
             .dump()
      << std::endl;
  g_server = &server;
  std::signal(SIGINT, handle_stop_signal);
  std::signal(SIGTERM, handle_stop_signal);
  server.listen();
  g_server = nullptr;
  return 0;
}

void error_line(std::ostream& err, std::string_view kind, std::string_view message) {
  err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"modpipe: moderation model pipeline"};
  app.name("modpipe");
  app.require_subcommand(1);
  app.set_version_flag("--version", "modpipe 0.1.0");
  app.add_option("--config", o.config, "Config file (default $MODPIPE_CONFIG, then ./modpipe.json)");
  auto seed_opt = [&](CLI::App* s) { s->add_option("--seed", o.seed, "Random seed"); };
  auto train_opts = [&](CLI::App* s) {
    s->add_option("--mode", o.mode, "supervised or wdat");
    s->add_option("--lambda", o.lambda, "Domain loss weight");
    s->add_option("--lr", o.lr, "Learning rate");
    s->add_option("--epochs", o.epochs, "Maximum epochs");
    s->add_option("--batch-size", o.batch_size, "Minibatch size");
  };

  auto* init = app.add_subcommand("init", "Write a config file, optionally with a desk corpus");
  init->add_option("--out", o.out, "Config path (default ./modpipe.json)");
  init->add_option("--desk", o.desk_dir, "Generate desk-scale corpora into this directory");
  init->add_flag("--force", o.force, "Overwrite an existing config");
  seed_opt(init);

  auto* imp = app.add_subcommand("import", "Validate a corpus or map an external labeled file");
  imp->add_option("--input", o.input, "Canonical JSONL, or external JSONL/CSV with --mapping");
  imp->add_option("--out", o.out, "Output corpus JSONL");
  imp->add_option("--mapping", o.mapping, "jigsaw, perspective, or a mapping JSON file");
  imp->add_option("--text-field", o.text_field, "External text column");
  imp->add_option("--id-field", o.id_field, "External id column");
  imp->add_option("--threshold", o.threshold, "Score threshold for non-binary fields");
  imp->add_option("--format", o.format, "jsonl or csv (default: by extension)");

  auto* synth = app.add_subcommand("synth", "Expand templates and counterfactual lists");
  synth->add_option("--templates", o.templates, "Template JSON file");
  synth->add_option("--count", o.count, "Samples per template");
  synth->add_flag("--with-replacement", o.with_replacement, "Allow repeated slot combinations");
  synth->add_option("--counterfactual", o.counterfactual,
                    "JSON with identities, objects and predicates lists");
  synth->add_option("--out", o.out, "Output JSONL");
  seed_opt(synth);

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  tr->add_option("--data", o.data, "Labeled corpus");
  tr->add_option("--validation", o.validation, "Validation corpus for epoch selection");
  tr->add_option("--target-pool", o.target_pool, "Unlabeled target-domain pool (wdat)");
  tr->add_option("--out", o.out, "Checkpoint path");
  tr->add_option("--report", o.report, "Write the loss report JSON here");
  tr->add_flag("--allow-noisy", o.allow_noisy, "Keep uncurated synthetic samples");
  train_opts(tr);
  seed_opt(tr);

  auto* sel = app.add_subcommand("select", "Score a pool and select samples for labeling");
  sel->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  sel->add_option("--pool", o.pool, "Unlabeled pool");
  sel->add_option("--size", o.size, "Batch size");
  sel->add_option("--out", o.out, "SelectionBatch JSON (default stdout)");
  seed_opt(sel);

  auto* loop = app.add_subcommand("loop", "Run the iterative active-learning loop");
  loop->add_option("--data", o.data, "Initial labeled set");
  loop->add_option("--pool", o.pool, "Pool source; its labels answer the oracle");
  loop->add_option("--validation", o.validation, "Validation set");
  loop->add_option("--out-dir", o.out_dir, "Checkpoints and metrics.json");
  loop->add_option("--iterations", o.iterations, "Iterations N (N + 1 checkpoints)");
  loop->add_option("--pool-size", o.pool_size, "Pool drawn per iteration");
  loop->add_option("--size", o.size, "Selection batch size per iteration");
  loop->add_flag("--random-only", o.random_only, "Random-sampling baseline");
  train_opts(loop);
  seed_opt(loop);

  auto* audit = app.add_subcommand("audit", "Annotator-versus-auditor F1 per category");
  audit->add_option("--data", o.data, "Corpus with annotator and auditor records");
  audit->add_option("--checkpoint", o.checkpoint, "Restrict to the model-guided audit sample");
  audit->add_option("--selection-out", o.selection_out, "Write the audit selection here");
  audit->add_option("--out", o.out, "Report JSON (default stdout)");
  seed_opt(audit);

  auto* cv = app.add_subcommand("crossval", "Split-half mislabel detection and relabel rule");
  cv->add_option("--data", o.data, "Labeled corpus");
  cv->add_option("--truth", o.truth, "Reference labels used to answer audits");
  cv->add_option("--out", o.out, "Relabel queue JSONL");
  train_opts(cv);
  seed_opt(cv);

  auto* probe = app.add_subcommand("probe", "Input reduction, key-token audit, red-team regression");
  probe->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  probe->add_option("--data", o.data, "Samples to reduce");
  probe->add_option("--lexicon", o.lexicon, "Known-keyword lexicon");
  probe->add_option("--text", o.text, "Reduce a single text");
  probe->add_option("--category", o.category, "Category for --text");
  probe->add_option("--threshold", o.threshold, "Keep threshold");
  probe->add_option("--redteam", o.redteam, "Run red-team regression cases from this file");
  probe->add_option("--out", o.out, "Output JSON (default stdout)");

  auto* ev = app.add_subcommand("eval", "Per-category AUPRC table");
  ev->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  ev->add_option("--data", o.data, "Labeled dataset");
  ev->add_option("--format", o.output_format, "json or text");
  ev->add_option("--out", o.out, "Output file (default stdout)");

  auto* serve = app.add_subcommand("serve", "HTTP scoring and labeling service");
  serve->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  serve->add_option("--host", o.host, "Listen address");
  serve->add_option("--port", o.port, "Listen port (0: any free port)");
  serve->add_option("--queue", o.queue, "SelectionBatch JSON or id-queue JSONL");
  serve->add_option("--corpus", o.corpus, "Corpus receiving submitted labels");
  serve->add_option("--redteam", o.redteam, "Red-team case store");
  serve->add_option("--token", o.token, "Require this bearer token");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    err << app.help();
    return 2;
  }

  try {
    if (init->parsed()) return cmd_init(o, out);
    if (imp->parsed()) return cmd_import(o, out);
    if (synth->parsed()) return cmd_synth(o, out);
    if (tr->parsed()) return cmd_train(o, out);
    if (sel->parsed()) return cmd_select(o, out);
    if (loop->parsed()) return cmd_loop(o, out);
    if (audit->parsed()) return cmd_audit(o, out);
    if (cv->parsed()) return cmd_crossval(o, out);
    if (probe->parsed()) return cmd_probe(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (serve->parsed()) return cmd_serve(o, out);
  } catch (const Error& e) {
    error_line(err, e.kind(), e.what());
    return 1;
  } catch (const nlohmann::json::exception& e) {
    error_line(err, "invalid_input", e.what());
    return 1;
  } catch (const std::exception& e) {
    error_line(err, "internal", e.what());
    return 1;
  }
  error_line(err, "usage", "no command");
  return 2;
}

}  // namespace modpipe::tools
