#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nisnn/checkpoint.hpp"
#include "nisnn/config.hpp"
#include "nisnn/data.hpp"
#include "nisnn/errors.hpp"
#include "nisnn/export.hpp"
#include "nisnn/profiler.hpp"
#include "nisnn/train.hpp"
#include "nisnn/verify.hpp"

namespace fs = std::filesystem;
using namespace nisnn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = load_run_config(path);
  apply_overrides(cfg, overrides, fs::path(path).parent_path());
  cfg.validate();
  return cfg;
}

fs::path require_dataset(const fs::path& p) {
  if (p.empty()) throw ConfigError("data.path: no dataset configured");
  if (!fs::exists(p / "manifest.json")) throw ConfigError("data.path: no dataset at " + p.string());
  return p;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// verify -------------------------------------------------------------------

struct VerifyArgs {
  std::vector<std::string> suites;
  std::uint64_t seed = 0;
  bool inject_fault = false;
  std::string dataset;
};

int cmd_verify(const VerifyArgs& a) {
  VerifyOptions o;
  o.seed = a.seed;
  o.inject_wrong_l_out = a.inject_fault;
  o.dataset = a.dataset;
  std::vector<std::string> names = a.suites.empty() ? verify_suite_names() : a.suites;
  std::vector<SuiteResult> results;
  for (const auto& n : names) results.push_back(run_verify_suite(n, o));
  std::cout << render_verify_table(results);
  for (const auto& r : results) {
    if (!r.passed) {
      std::cout << "counterexample " << r.suite << ": " << r.counterexample.dump() << '\n';
      return kExitFailure;
    }
  }
  return kExitOk;
}

// train --------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string split = "all";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  bool resume = false;
  std::size_t max_epochs = 0;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_config(a.config, a.overrides);
  if (a.seed) cfg.train.seed = *a.seed;
  if (!a.out.empty()) cfg.out_dir = a.out;
  Dataset ds = Dataset::open(require_dataset(cfg.data_path));
  const auto plans = loso_splits(ds.manifest());
  std::vector<const SplitPlan*> chosen;
  for (const auto& p : plans) {
    if (a.split == "all" || p.held_out == a.split) chosen.push_back(&p);
  }
  if (chosen.empty()) throw ConfigError("--split: no subject '" + a.split + "' in the dataset");
  std::vector<Trial> trials = ds.load_all();
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "config.toml", render_run_config(cfg));

  nlohmann::json summary;
  summary["seed"] = cfg.train.seed;
  summary["splits"] = nlohmann::json::array();
  double acc_sum = 0.0;
  bool complete = true;
  for (const SplitPlan* plan : chosen) {
    TrainOptions opt;
    opt.out_dir = cfg.out_dir / plan->held_out;
    opt.log = &std::cerr;
    opt.max_epochs = a.max_epochs;
    fs::create_directories(opt.out_dir);
    std::optional<Checkpoint> state;
    if (a.resume && fs::exists(opt.out_dir / "state.ckpt")) {
      state = load_checkpoint(opt.out_dir / "state.ckpt");
      opt.resume = &*state;
    }
    TrainResult r = train_loop(cfg.network, trials, *plan, cfg.train, opt);
    complete = complete && r.complete;
    acc_sum += r.final_eval.accuracy;
    summary["splits"].push_back({{"held_out", plan->held_out},
                                 {"accuracy", r.final_eval.accuracy},
                                 {"loss", r.final_eval.loss},
                                 {"test_trials", r.final_eval.count},
                                 {"complete", r.complete}});
    std::cout << plan->held_out << "  accuracy " << fixed(r.final_eval.accuracy, 4) << "  loss "
              << fixed(r.final_eval.loss, 4) << (r.complete ? "" : "  (stopped early)") << '\n';
  }
  if (!complete) return kExitOk;
  summary["mean_accuracy"] = acc_sum / static_cast<double>(chosen.size());
  write_text(cfg.out_dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "mean accuracy " << fixed(summary["mean_accuracy"].get<double>(), 4) << " over " << chosen.size()
            << " split(s)\n";
  return kExitOk;
}

// eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string dataset;
  std::string split;
  std::vector<std::string> overrides;
};

int cmd_eval(const EvalArgs& a) {
  if (!fs::exists(a.checkpoint)) throw CheckpointError("checkpoint not found: " + a.checkpoint);
  Checkpoint ckpt = load_checkpoint(a.checkpoint);
  Model model = model_from_checkpoint(ckpt);
  fs::path data = a.dataset;
  std::size_t batch = 64;
  if (!a.config.empty()) {
    RunConfig cfg = load_config(a.config, a.overrides);
    if (data.empty()) data = cfg.data_path;
    batch = cfg.eval_batch;
  }
  Dataset ds = Dataset::open(require_dataset(data));
  std::string subject = a.split.empty() ? ckpt.meta.value("held_out", std::string()) : a.split;
  std::vector<Trial> trials = ds.load_all();
  std::vector<const Trial*> chosen;
  for (const auto& t : trials) {
    if (subject.empty() || subject == "all" || t.ref.subject == subject) chosen.push_back(&t);
  }
  if (chosen.empty()) throw ConfigError("--split: no trials for subject '" + subject + "'");
  EvalResult r = evaluate(model, chosen, batch);
  std::cout << "trials " << r.count << "  accuracy " << fixed(r.accuracy, 4) << "  loss " << fixed(r.loss, 4) << '\n';
  std::cout << "confusion (rows true, columns predicted)\n";
  for (const auto& row : r.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) std::cout << (j ? " " : "") << row[j];
    std::cout << '\n';
  }
  return kExitOk;
}

// profile ------------------------------------------------------------------

struct ProfileArgs {
  std::string config;
  std::string checkpoint;
  std::string dataset;
  std::string out;
  std::vector<std::string> overrides;
};

int cmd_profile(const ProfileArgs& a) {
  RunConfig cfg = load_config(a.config, a.overrides);
  Model model;
  if (!a.checkpoint.empty()) {
    if (!fs::exists(a.checkpoint)) throw CheckpointError("checkpoint not found: " + a.checkpoint);
    model = model_from_checkpoint(load_checkpoint(a.checkpoint));
  } else {
    model = build_model(cfg.network, cfg.train.seed);
  }
  CostReport report = profile_static(model);
  if (!a.checkpoint.empty() && model.family() == Family::kSnn) {
    fs::path data = a.dataset.empty() ? cfg.data_path : fs::path(a.dataset);
    if (!data.empty()) {
      Dataset ds = Dataset::open(require_dataset(data));
      std::vector<Trial> trials = ds.load_all();
      std::vector<Tensor> batches;
      for (std::size_t i = 0; i < trials.size(); i += cfg.eval_batch) {
        std::vector<const Trial*> chunk;
        for (std::size_t j = i; j < std::min(trials.size(), i + cfg.eval_batch); ++j) chunk.push_back(&trials[j]);
        batches.push_back(make_batch(chunk, model.spec().timepieces, model.spec().steps));
      }
      apply_rates(report, measure_spike_rates(model, batches));
    }
  }
  std::cout << render_report(report, ReportFormat::kTable);
  fs::path out = a.out.empty() ? cfg.out_dir / "profile.jsonl" : fs::path(a.out);
  write_text(out, render_report(report, ReportFormat::kJsonLines));
  std::cout << "json-lines report: " << out.string() << '\n';
  return kExitOk;
}

// export-attention ---------------------------------------------------------

struct ExportArgs {
  std::string checkpoint;
  std::string trial;
  std::string dataset;
  std::string config;
  std::string out = "attention-export";
};

int cmd_export(const ExportArgs& a) {
  if (!fs::exists(a.checkpoint)) throw CheckpointError("checkpoint not found: " + a.checkpoint);
  Model model = model_from_checkpoint(load_checkpoint(a.checkpoint));
  fs::path data = a.dataset;
  if (data.empty() && !a.config.empty()) data = load_config(a.config, {}).data_path;
  Dataset ds = Dataset::open(require_dataset(data));
  for (const auto& ref : ds.manifest().trials()) {
    if (ref.key() != a.trial) continue;
    AttentionExport e = export_attention(model, ds.load(ref));
    write_attention_export(a.out, e);
    std::cout << "wrote input.csv, raster.csv, attention.csv, channel_mean.csv to " << a.out << '\n';
    return kExitOk;
  }
  throw IngestError("trial '" + a.trial + "' is not in the dataset (use <subject>_<trial>)");
}

// synth / import -----------------------------------------------------------

int cmd_synth(const SynthConfig& sc, const std::string& out) {
  SynthDataset d = synth_generate(sc);
  write_dataset(out, d.manifest, d.trials);
  std::cout << "generated " << d.manifest.trial_count() << " trials from " << d.manifest.subjects.size()
            << " subjects (" << d.manifest.channels << " x " << d.manifest.samples << ") in " << out << '\n';
  return kExitOk;
}

int cmd_import(const std::string& src, const std::string& out) {
  DatasetManifest m = import_csv(src, out);
  std::cout << "imported " << m.trial_count() << " trials from " << m.subjects.size() << " subjects ("
            << m.channels << " x " << m.samples << ") into " << out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-iterative leaky integrate-and-fire spiking networks for EEG"};
  app.require_subcommand(1);

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run the invariant suites");
  verify->add_option("--suite", va.suites, "Suites to run (default: all)")
      ->check(CLI::IsMember(verify_suite_names()));
  verify->add_option("--seed", va.seed, "Seed of the random inputs");
  verify->add_flag("--inject-fault", va.inject_fault, "Corrupt the output leaky matrix");
  verify->add_option("--dataset", va.dataset, "Dataset checked by the data suite");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train leave-one-subject-out splits");
  train->add_option("--config", ta.config, "Run config")->required();
  train->add_option("--split", ta.split, "Held-out subject id or 'all'");
  train->add_option("--seed", ta.seed, "Override train.seed");
  train->add_option("--out", ta.out, "Override output.dir");
  train->add_option("--set", ta.overrides, "section.key=value override");
  train->add_flag("--resume", ta.resume, "Continue from <out>/<split>/state.ckpt when present");
  train->add_option("--max-epochs", ta.max_epochs, "Stop each split after this many epochs");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a trained checkpoint");
  eval->add_option("--checkpoint", ea.checkpoint, "model.ckpt")->required();
  eval->add_option("--config", ea.config, "Run config (dataset and batch size)");
  eval->add_option("--dataset", ea.dataset, "Dataset directory");
  eval->add_option("--split", ea.split, "Subject to evaluate, 'all', default: the held-out subject");
  eval->add_option("--set", ea.overrides, "section.key=value override");

  ProfileArgs pa;
  auto* profile = app.add_subcommand("profile", "Operation counts and energy");
  profile->add_option("--config", pa.config, "Run config")->required();
  profile->add_option("--checkpoint", pa.checkpoint, "Trained model for measured spike rates");
  profile->add_option("--dataset", pa.dataset, "Dataset for spike rates (default: data.path)");
  profile->add_option("--out", pa.out, "json-lines report path (default: <output.dir>/profile.jsonl)");
  profile->add_option("--set", pa.overrides, "section.key=value override");

  ExportArgs xa;
  auto* exporter = app.add_subcommand("export-attention", "Write attention visualization tables");
  exporter->add_option("--checkpoint", xa.checkpoint, "model.ckpt")->required();
  exporter->add_option("--trial", xa.trial, "Trial key <subject>_<trial>")->required();
  exporter->add_option("--dataset", xa.dataset, "Dataset directory");
  exporter->add_option("--config", xa.config, "Run config supplying data.path");
  exporter->add_option("--out", xa.out, "Output directory");

  SynthConfig sc;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-class dataset");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", sc.seed, "Generator seed");
  synth->add_option("--subjects", sc.subjects, "Number of subjects");
  synth->add_option("--trials", sc.trials_per_subject, "Trials per subject");
  synth->add_option("--channels", sc.channels, "Channels");
  synth->add_option("--samples", sc.samples, "Samples per trial");
  synth->add_option("--difficulty", sc.difficulty, "Noise standard deviation");

  std::string import_src, import_out;
  auto* import = app.add_subcommand("import", "Import a CSV dataset");
  import->add_option("--src", import_src, "Directory with manifest.json and CSV files")->required();
  import->add_option("--out", import_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*verify) return cmd_verify(va);
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*profile) return cmd_profile(pa);
    if (*exporter) return cmd_export(xa);
    if (*synth) return cmd_synth(sc, synth_out);
    if (*import) return cmd_import(import_src, import_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const TransferError& e) {
    std::cerr << "transfer error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IngestError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
