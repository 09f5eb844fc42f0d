// causalrec: data preparation, graph export, training, evaluation and
// explanations from the command line. Every command writes a manifest.json
// next to its outputs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "causalrec/checkpoint.h"
#include "causalrec/eval.h"
#include "causalrec/explain.h"
#include "causalrec/graphs.h"
#include "causalrec/ingest.h"
#include "causalrec/io.h"
#include "causalrec/manifest.h"
#include "causalrec/stats.h"
#include "causalrec/synthetic.h"
#include "causalrec/trainer.h"

namespace fs = std::filesystem;
using namespace causalrec;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_file;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  std::string preset;
  std::vector<std::string> settings;  // key=value overrides
  std::vector<std::string> expect_digests;
};

// Digest checks and manifest bookkeeping for one command.
class Run {
 public:
  Run(std::string command, const Globals& g) : g_(g), start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.seed = g.seed;
  }

  void input(const std::string& label, const fs::path& path) {
    if (!fs::exists(path)) throw std::runtime_error("missing input " + path.string());
    manifest_.add_input(label, path);
  }
  void output(const std::string& label, const fs::path& path) { manifest_.add_output(label, path); }
  void config(const std::string& key, const std::string& value) { manifest_.config.emplace_back(key, value); }
  void config(const std::vector<trainer::Setting>& settings) {
    for (const auto& s : settings) manifest_.config.push_back(s);
  }

  // LABEL=HEX compares against that input; a bare HEX against the first one.
  void verify_digests() const {
    for (const auto& spec : g_.expect_digests) {
      const auto eq = spec.find('=');
      const std::string label = eq == std::string::npos ? "" : spec.substr(0, eq);
      const std::string want = eq == std::string::npos ? spec : spec.substr(eq + 1);
      const auto& inputs = manifest_.inputs;
      auto it = label.empty() ? inputs.begin()
                              : std::find_if(inputs.begin(), inputs.end(),
                                             [&](const auto& kv) { return kv.first == label; });
      if (it == inputs.end()) throw UsageError("--expect-digest: no input labelled '" + label + "'");
      if (it->second != want) {
        throw std::runtime_error("digest mismatch for input '" + it->first + "': expected " + want + ", got " +
                                 it->second);
      }
    }
  }

  void finish(const fs::path& dir) {
    manifest_.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    manifest_.finished_at = utc_timestamp();
    manifest_.write(dir / "manifest.json");
  }

 private:
  const Globals& g_;
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
};

trainer::TrainConfig resolve_config(const Globals& g) try {
  trainer::TrainConfig c;
  if (!g.preset.empty()) trainer::apply_preset(c, g.preset);
  if (!g.config_file.empty()) {
    std::ifstream in(g.config_file);
    if (!in) throw UsageError("cannot read config file " + g.config_file);
    for (const auto& [k, v] : trainer::parse_settings(in)) trainer::apply_setting(c, k, v);
  }
  for (const auto& s : g.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    trainer::apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
  }
  c.seed = g.seed;
  c.threads = g.threads;
  c.validate();
  return c;
} catch (const std::invalid_argument& e) {
  throw UsageError(e.what());
}

void write_text(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  io::write_atomic(path, writer);
}

struct DataDir {
  fs::path dir;
  ingest::Vocabulary vocab;
  std::vector<ingest::Session> train;
  std::vector<ingest::Session> test;
  bool has_test = false;
};

DataDir load_data(const fs::path& dir, Run& run, bool need_test) {
  DataDir d;
  d.dir = dir;
  const auto vocab_path = dir / "vocab.txt";
  const auto train_path = dir / "train.txt";
  const auto test_path = dir / "test.txt";
  run.input("vocab", vocab_path);
  run.input("train", train_path);
  {
    std::ifstream in(vocab_path);
    d.vocab = ingest::read_vocabulary(in);
  }
  {
    std::ifstream in(train_path);
    d.train = ingest::read_sessions(in, d.vocab.size());
  }
  d.has_test = fs::exists(test_path);
  if (need_test && !d.has_test) throw std::runtime_error("missing input " + test_path.string());
  if (d.has_test) {
    run.input("test", test_path);
    std::ifstream in(test_path);
    d.test = ingest::read_sessions(in, d.vocab.size());
  }
  return d;
}

struct LoadedModel {
  checkpoint::Checkpoint cp;
  std::optional<model::Model> model;
};

LoadedModel load_model(const fs::path& path, const DataDir& data, Run& run) {
  run.input("checkpoint", path);
  LoadedModel lm;
  lm.cp = checkpoint::load_file(path);
  if (lm.cp.num_items != data.vocab.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(lm.cp.num_items) + " items but the vocabulary has " +
                             std::to_string(data.vocab.size()));
  }
  const auto g = graphs::SessionGraph::build(data.train, data.vocab.size());
  lm.model.emplace(lm.cp.config, model::build_graph_inputs(g, lm.cp.config));
  run.config(trainer::model_settings(lm.cp.config));
  return lm;
}

// ---- commands --------------------------------------------------------------

struct PrepArgs {
  std::string in, out, split = "last:0.2", key = "session";
  std::size_t min_item_freq = 5, min_len = 2;
  std::optional<std::size_t> max_len, top_items;
  bool single_pass = false;
};

void cmd_prep(const PrepArgs& a, const Globals& g) {
  Run run("prep", g);
  run.input("log", a.in);
  run.verify_digests();
  ingest::PreprocessConfig pc;
  pc.min_item_freq = a.min_item_freq;
  pc.min_len = a.min_len;
  pc.max_len = a.max_len;
  pc.top_items = a.top_items;
  pc.split = ingest::SplitSpec::parse(a.split);
  pc.iterate_to_fixpoint = !a.single_pass;
  const auto key = a.key == "user-day" ? ingest::SessionKey::kUserDay : ingest::SessionKey::kSessionId;

  std::ifstream in(a.in);
  const auto log = ingest::parse_log(in);
  const auto raw = ingest::sessionize(log, key);
  const auto ds = ingest::preprocess(raw, pc);

  const fs::path out = a.out;
  fs::create_directories(out);
  write_text(out / "train.txt", [&](std::ostream& o) { ingest::write_sessions(o, ds.train); });
  write_text(out / "test.txt", [&](std::ostream& o) { ingest::write_sessions(o, ds.test); });
  write_text(out / "vocab.txt", [&](std::ostream& o) { ingest::write_vocabulary(o, ds.vocab); });
  run.config("split", pc.split.to_string());
  run.config("session_key", a.key);
  run.config("min_item_freq", std::to_string(pc.min_item_freq));
  run.config("min_len", std::to_string(pc.min_len));
  run.config("max_len", pc.max_len ? std::to_string(*pc.max_len) : "none");
  run.config("top_items", pc.top_items ? std::to_string(*pc.top_items) : "none");
  run.config("iterate_to_fixpoint", pc.iterate_to_fixpoint ? "true" : "false");
  for (const char* f : {"train.txt", "test.txt", "vocab.txt"}) run.output(f, out / f);
  run.finish(out);
  std::cout << "prep: " << ds.train.size() << " train sessions, " << ds.test.size() << " test sessions, "
            << ds.vocab.size() << " items\n";
}

void cmd_graphs(const std::string& data_dir, const std::string& out_dir, const Globals& g) {
  Run run("graphs", g);
  const auto cfg = resolve_config(g);
  auto data = load_data(data_dir, run, false);
  run.verify_digests();
  const auto sg = graphs::SessionGraph::build(data.train, data.vocab.size());
  const auto effect = graphs::effect_graph(sg, cfg.model.effect);
  const auto cause = graphs::cause_graph(effect);
  const auto corr = graphs::correlation_graph(sg);
  const auto& names = data.vocab.ids();

  const fs::path out = out_dir;
  fs::create_directories(out);
  write_text(out / "session_graph.csv", [&](std::ostream& o) { graphs::write_session_csv(o, sg, names); });
  write_text(out / "effect_graph.csv", [&](std::ostream& o) { graphs::write_digraph_csv(o, effect, names); });
  write_text(out / "cause_graph.csv", [&](std::ostream& o) { graphs::write_digraph_csv(o, cause, names); });
  write_text(out / "correlation_graph.csv", [&](std::ostream& o) { graphs::write_correlation_csv(o, corr, names); });
  run.config(trainer::model_settings(cfg.model));
  for (const char* f : {"session_graph.csv", "effect_graph.csv", "cause_graph.csv", "correlation_graph.csv"}) {
    run.output(f, out / f);
  }
  run.finish(out);
  std::cout << "graphs: " << sg.num_edges() << " transitions, " << effect.edges.size() << " causal edges, "
            << corr.edges.size() << " correlation edges\n";
}

void cmd_stats(const std::string& data_dir, const std::string& out_dir, std::optional<double> epsilon, bool flip,
               const Globals& g) {
  Run run("stats", g);
  auto data = load_data(data_dir, run, false);
  run.verify_digests();
  const auto sg = graphs::SessionGraph::build(data.train, data.vocab.size());
  stats::GridOptions opt;
  opt.epsilon = epsilon;
  opt.orientation = flip ? stats::Orientation::kLargerFirst : stats::Orientation::kSmallerFirst;
  const auto grid = stats::build_grid(sg, opt);

  const fs::path out = out_dir;
  fs::create_directories(out);
  write_text(out / "grid.csv", [&](std::ostream& o) { stats::write_grid_csv(o, grid); });
  write_text(out / "grid_boundaries.csv", [&](std::ostream& o) { stats::write_boundaries_csv(o, grid); });
  run.config("orientation", flip ? "larger_first" : "smaller_first");
  run.config("epsilon", epsilon ? graphs::format_weight(*epsilon) : "none");
  run.output("grid.csv", out / "grid.csv");
  run.output("grid_boundaries.csv", out / "grid_boundaries.csv");
  run.finish(out);
  std::cout << "stats: " << grid.pairs << " item pairs\n";
}

struct RunSummary {
  std::vector<trainer::EpochRecord> history;
  std::size_t best_epoch = 0;
  std::optional<eval::RankingResult> test;
};

RunSummary train_once(const DataDir& data, const trainer::TrainConfig& cfg, const fs::path& out,
                      const std::string& prefix, Run& run, bool verbose) {
  auto setup = trainer::prepare(data.train, data.vocab.size(), cfg);
  const auto init = model::init_params(data.vocab.size(), cfg.model, cfg.seed);
  const auto result = trainer::train(setup.model, init, setup.samples, setup.validation, cfg,
                                     [&](const trainer::EpochRecord& r, const model::Parameters&) {
                                       if (verbose) {
                                         std::fprintf(stderr, "epoch %zu loss %.6f val_mrr20 %.4f\n", r.epoch,
                                                      r.train_loss, r.val_mrr);
                                       }
                                       return true;
                                     });
  fs::create_directories(out);
  checkpoint::save_file(out / "checkpoint.cgsr", cfg.model, result.params);
  write_text(out / "history.csv", [&](std::ostream& o) { trainer::write_history_csv(o, result.history); });
  run.output(prefix + "checkpoint.cgsr", out / "checkpoint.cgsr");
  run.output(prefix + "history.csv", out / "history.csv");

  RunSummary s{result.history, result.best_epoch, std::nullopt};
  if (data.has_test && !data.test.empty()) {
    const auto samples = ingest::augment_prefixes(data.test);
    if (!samples.empty()) {
      s.test = eval::evaluate(setup.model, result.params, samples, eval::kDefaultCutoffs, cfg.threads);
      write_text(out / "test_metrics.csv", [&](std::ostream& o) { eval::write_metrics_csv(o, *s.test); });
      run.output(prefix + "test_metrics.csv", out / "test_metrics.csv");
    }
  }
  return s;
}

void cmd_train(const std::string& data_dir, const std::string& out_dir, std::size_t repeat, bool verbose,
               const Globals& g) {
  if (repeat == 0) throw UsageError("--repeat must be >= 1");
  Run run("train", g);
  const auto cfg = resolve_config(g);
  auto data = load_data(data_dir, run, false);
  run.verify_digests();
  run.config(trainer::to_settings(cfg));
  run.config("repeat", std::to_string(repeat));
  const fs::path out = out_dir;
  fs::create_directories(out);

  if (repeat == 1) {
    const auto s = train_once(data, cfg, out, "", run, verbose);
    run.finish(out);
    std::cout << "train: " << s.history.size() << " epochs, best epoch " << s.best_epoch << "\n";
    return;
  }

  // Repeated runs use consecutive seeds; the summary reports mean and
  // (population) standard deviation of the test metrics.
  std::vector<RunSummary> runs;
  for (std::size_t r = 0; r < repeat; ++r) {
    auto c = cfg;
    c.seed = cfg.seed + r;
    const std::string name = "run" + std::to_string(r);
    runs.push_back(train_once(data, c, out / name, name + "/", run, verbose));
  }
  write_text(out / "summary.csv", [&](std::ostream& o) {
    o << "metric,K,mean,std,runs\n";
    if (!runs.front().test) return;
    for (const auto k : eval::kDefaultCutoffs) {
      for (const char* name : {"HR", "MRR", "NDCG"}) {
        std::vector<double> v;
        for (const auto& s : runs) {
          const auto& m = s.test->at.at(k);
          v.push_back(name[0] == 'H' ? m.hr : name[0] == 'M' ? m.mrr : m.ndcg);
        }
        double mean = 0.0;
        for (const double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (const double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size());
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%zu\n", name, k, mean, std::sqrt(var), v.size());
        o << buf;
      }
    }
  });
  run.output("summary.csv", out / "summary.csv");
  run.finish(out);
  std::cout << "train: " << repeat << " runs, summary in " << (out / "summary.csv").string() << "\n";
}

void cmd_eval(const std::string& data_dir, const std::string& ckpt, const std::string& out_dir, const Globals& g) {
  Run run("eval", g);
  auto data = load_data(data_dir, run, true);
  auto lm = load_model(ckpt, data, run);
  run.verify_digests();
  const auto samples = ingest::augment_prefixes(data.test);
  if (samples.empty()) throw std::runtime_error("test split has no prefixes to evaluate");
  const auto result = eval::evaluate(*lm.model, lm.cp.params, samples, eval::kDefaultCutoffs, g.threads);
  const fs::path out = out_dir;
  fs::create_directories(out);
  write_text(out / "metrics.csv", [&](std::ostream& o) { eval::write_metrics_csv(o, result); });
  write_text(out / "metrics.json", [&](std::ostream& o) { eval::write_metrics_json(o, result); });
  run.output("metrics.csv", out / "metrics.csv");
  run.output("metrics.json", out / "metrics.json");
  run.finish(out);
  eval::write_metrics_csv(std::cout, result);
}

// `session_id<TAB>item_id,item_id,...`; ids resolved through the vocabulary.
std::vector<ingest::Session> read_id_sessions(const fs::path& path, const ingest::Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<ingest::Session> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ingest::ParseError(line_no, "expected session_id<TAB>items");
    ingest::Session s{line.substr(0, tab), static_cast<std::int64_t>(line_no), {}};
    std::stringstream items(line.substr(tab + 1));
    std::string id;
    while (std::getline(items, id, ',')) {
      const auto idx = vocab.find(id);
      if (!idx) throw ingest::ParseError(line_no, "item '" + id + "' is not in the vocabulary");
      s.items.push_back(*idx);
    }
    if (s.items.empty()) throw ingest::ParseError(line_no, "empty session");
    out.push_back(std::move(s));
  }
  return out;
}

void cmd_explain(const std::string& data_dir, const std::string& ckpt, const std::string& sessions_file,
                 const std::vector<std::string>& items, const std::string& out_dir, const Globals& g) {
  Run run("explain", g);
  auto data = load_data(data_dir, run, false);
  auto lm = load_model(ckpt, data, run);
  run.input("sessions", sessions_file);
  run.verify_digests();
  const auto sessions = read_id_sessions(sessions_file, data.vocab);
  for (const auto& id : items) {
    if (!data.vocab.find(id)) throw UsageError("--item: '" + id + "' is not in the vocabulary");
  }

  explain::Explainer explainer(*lm.model, lm.cp.params);
  model::Scorer scorer(*lm.model, lm.cp.params);
  std::vector<explain::ExplanationReport> reports;
  for (const auto& s : sessions) {
    if (items.empty()) {
      // Explain the top recommendation.
      const auto scores = scorer.score(s.items);
      const auto best = std::max_element(scores.total.values().begin(), scores.total.values().end()) -
                        scores.total.values().begin();
      reports.push_back(explainer.explain(s, static_cast<ItemIndex>(best)));
    } else {
      for (const auto& id : items) reports.push_back(explainer.explain(s, id, data.vocab));
    }
  }
  const auto written = explain::write_reports(out_dir, reports, data.vocab);
  run.config("items", items.empty() ? std::string("top-1") : std::to_string(items.size()));
  for (const auto& p : written) run.output(p.filename().string(), p);
  run.finish(out_dir);
  std::cout << "explain: " << written.size() << " reports in " << out_dir << "\n";
}

void cmd_synth(const synthetic::PlantedConfig& pc, const std::string& out_dir, const Globals& g) {
  Run run("synth", g);
  auto c = pc;
  c.seed = g.seed;
  const auto data = synthetic::planted_chains(c);
  ingest::Vocabulary vocab;
  for (std::size_t i = 0; i < c.num_items(); ++i) vocab.add("i" + std::to_string(i));
  const fs::path out = out_dir;
  fs::create_directories(out);
  write_text(out / "train.txt", [&](std::ostream& o) { ingest::write_sessions(o, data.sessions); });
  write_text(out / "vocab.txt", [&](std::ostream& o) { ingest::write_vocabulary(o, vocab); });
  run.config("chains", std::to_string(c.num_chains));
  run.config("chain_length", std::to_string(c.chain_length));
  run.config("sessions", std::to_string(c.num_sessions));
  run.config("noise", graphs::format_weight(c.noise));
  run.output("train.txt", out / "train.txt");
  run.output("vocab.txt", out / "vocab.txt");
  run.finish(out);
  std::cout << "synth: " << data.sessions.size() << " sessions over " << c.num_items() << " items\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Session-based recommendation with causal and correlation item graphs"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_file, "key = value settings file");
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for evaluation")->check(CLI::PositiveNumber);
  app.add_option("--preset", g.preset, "dataset preset")->check(CLI::IsMember({"diginetica", "gowalla", "amazon"}));
  app.add_option("--set", g.settings, "override one setting (key=value), repeatable");
  app.add_option("--expect-digest", g.expect_digests, "required input sha256 ([label=]hex), repeatable");

  PrepArgs prep;
  auto* p = app.add_subcommand("prep", "sessionize, filter and split an interaction log");
  p->add_option("--in", prep.in, "TAB-separated session_id, timestamp, item_id log")->required();
  p->add_option("--out", prep.out, "output directory")->required();
  p->add_option("--split", prep.split, "last:FRACTION or period:SECONDS")->capture_default_str();
  p->add_option("--session-key", prep.key, "session or user-day")
      ->check(CLI::IsMember({"session", "user-day"}))
      ->capture_default_str();
  p->add_option("--min-item-freq", prep.min_item_freq)->capture_default_str();
  p->add_option("--min-len", prep.min_len)->capture_default_str();
  p->add_option("--max-len", prep.max_len);
  p->add_option("--top-items", prep.top_items);
  p->add_flag("--single-pass", prep.single_pass, "filter once instead of until stable");

  std::string data_dir, out_dir, ckpt, sessions_file;
  auto* gr = app.add_subcommand("graphs", "export session, effect, cause and correlation graphs");
  gr->add_option("--data", data_dir, "directory with train.txt and vocab.txt")->required();
  gr->add_option("--out", out_dir)->required();

  std::optional<double> epsilon;
  bool flip = false;
  auto* st = app.add_subcommand("stats", "decile grid of p(a|b) against p(b|a)");
  st->add_option("--data", data_dir)->required();
  st->add_option("--out", out_dir)->required();
  st->add_option("--epsilon", epsilon, "also count pairs with |p(a|b) - p(b|a)| >= epsilon");
  st->add_flag("--flip-orientation", flip, "take the larger item index as a");

  std::size_t repeat = 1;
  bool verbose = false;
  auto* tr = app.add_subcommand("train", "train a model; writes checkpoint.cgsr and history.csv");
  tr->add_option("--data", data_dir)->required();
  tr->add_option("--out", out_dir)->required();
  tr->add_option("--repeat", repeat, "independent runs with consecutive seeds")->capture_default_str();
  tr->add_flag("--verbose", verbose, "per-epoch progress on stderr");

  auto* ev = app.add_subcommand("eval", "ranking metrics of a checkpoint on the test split");
  ev->add_option("--data", data_dir)->required();
  ev->add_option("--checkpoint", ckpt)->required();
  ev->add_option("--out", out_dir)->required();

  std::vector<std::string> items;
  auto* ex = app.add_subcommand("explain", "per-item causality and correlation attributions");
  ex->add_option("--data", data_dir)->required();
  ex->add_option("--checkpoint", ckpt)->required();
  ex->add_option("--sessions", sessions_file, "session_id<TAB>item,item,... lines")->required();
  ex->add_option("--item", items, "recommended item id to explain (default: top-1), repeatable");
  ex->add_option("--out", out_dir)->required();

  synthetic::PlantedConfig planted;
  auto* sy = app.add_subcommand("synth", "generate a planted-chain session corpus");
  sy->add_option("--out", out_dir)->required();
  sy->add_option("--chains", planted.num_chains)->capture_default_str();
  sy->add_option("--chain-length", planted.chain_length)->capture_default_str();
  sy->add_option("--sessions", planted.num_sessions)->capture_default_str();
  sy->add_option("--noise", planted.noise)->capture_default_str();

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*p) cmd_prep(prep, g);
    else if (*gr) cmd_graphs(data_dir, out_dir, g);
    else if (*st) cmd_stats(data_dir, out_dir, epsilon, flip, g);
    else if (*tr) cmd_train(data_dir, out_dir, repeat, verbose, g);
    else if (*ev) cmd_eval(data_dir, ckpt, out_dir, g);
    else if (*ex) cmd_explain(data_dir, ckpt, sessions_file, items, out_dir, g);
    else if (*sy) cmd_synth(planted, out_dir, g);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
