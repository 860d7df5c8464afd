// Command-line front end: train, eval, sample, gradcheck, sweep, export-prior.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <memory>
#include <sstream>

#include "restoregrad/checkpoint.hpp"
#include "restoregrad/config.hpp"
#include "restoregrad/gradcheck.hpp"
#include "restoregrad/sampler.hpp"
#include "restoregrad/trainer.hpp"

#ifndef RESTOREGRAD_VERSION
#define RESTOREGRAD_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace restoregrad;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kDiverged = 3, kGradcheckFailed = 4 };

constexpr double kGradTolerance = 1e-3;

// A failure that maps to a specific exit code.
struct CliError {
  int code;
  std::string kind;
  std::string message;
};

void print_error(const CliError& e) {
  const json line = {{"code", e.code}, {"kind", e.kind}, {"message", e.message}};
  std::cerr << "error: " << line.dump() << "\n";
}

class Manifest {
 public:
  Manifest(std::string command, fs::path dir)
      : command_(std::move(command)), dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {}

  void config(const TrainConfig& cfg) {
    json c = json::object();
    std::istringstream in(format_config(cfg));
    std::string line;
    while (std::getline(in, line)) {
      const auto eq = line.find(" = ");
      if (eq != std::string::npos) c[line.substr(0, eq)] = line.substr(eq + 3);
    }
    extra_["config"] = c;
  }
  void set(const std::string& key, json value) { extra_[key] = std::move(value); }
  void artifact(const fs::path& p) { artifacts_.push_back(p.string()); }

  // Written last; lists only files that exist.
  void write(int exit_code) {
    json m = extra_;
    m["command"] = command_;
    m["exit_code"] = exit_code;
    m["version"] = RESTOREGRAD_VERSION;
    m["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json arts = json::array();
    for (const auto& a : artifacts_)
      if (fs::exists(a)) arts.push_back(a);
    m["artifacts"] = arts;
    fs::create_directories(dir_);
    write_file_atomic((dir_ / "manifest.json").string(), m.dump(2) + "\n");
    written_ = true;
  }
  bool written() const { return written_; }

 private:
  std::string command_;
  fs::path dir_;
  std::chrono::steady_clock::time_point start_;
  json extra_ = json::object();
  std::vector<std::string> artifacts_;
  bool written_ = false;
};

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path().empty() ? fs::path(".") : p.parent_path());
  write_file_atomic(p.string(), text);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& sets) {
  if (!path.empty() && !fs::is_regular_file(path))
    throw CliError{kUsage, "missing_file", "no such config file: " + path};
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  for (const std::string& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string x) {
      x.erase(0, x.find_first_not_of(' '));
      x.erase(x.find_last_not_of(' ') + 1);
      return x;
    };
    set_config_value(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
  }
  validate(cfg);
  return cfg;
}

Checkpoint open_checkpoint(const std::string& path) {
  if (!fs::is_regular_file(path)) throw CliError{kUsage, "missing_file", "no such checkpoint: " + path};
  return load_checkpoint(path);
}

std::string keys_footer() {
  std::string s = "\nConfig keys (key = value lines; '#' starts a comment):\n";
  for (const ConfigKey& k : config_keys()) s += "  " + k.key + std::string(18 - std::min<std::size_t>(17, k.key.size()), ' ') + k.help + "\n";
  return s;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string mode;
  std::string out = "runs/train";
  std::string resume;
  std::vector<std::string> sets;
};

int cmd_train(const TrainArgs& a, Manifest& man) {
  const fs::path out(a.out);
  std::unique_ptr<Trainer> trainer;
  if (!a.resume.empty()) {
    Checkpoint ck = open_checkpoint(a.resume);
    if (!a.mode.empty() || !a.config.empty()) throw ConfigError("--resume takes its config from the checkpoint");
    if (!a.sets.empty()) {
      // Only the run length and evaluation settings may change on resume.
      static const std::set<std::string> kResumable{"n_steps", "eval_every", "eval_subset", "eval_seed",
                                                    "eval_schedule"};
      for (const std::string& s : a.sets)
        if (!kResumable.count(s.substr(0, s.find('='))))
          throw ConfigError("--set " + s + " cannot change on resume (allowed: n_steps, eval_every, eval_subset, "
                            "eval_seed, eval_schedule)");
      TrainConfig cfg = parse_config(ck.config_text);
      for (const std::string& s : a.sets) set_config_value(cfg, s.substr(0, s.find('=')), s.substr(s.find('=') + 1));
      validate(cfg);
      ck.config_text = format_config(cfg);
    }
    trainer = std::make_unique<Trainer>(ck);
    man.set("resumed_from", a.resume);
  } else {
    TrainConfig cfg = resolve_config(a.config, a.sets);
    if (!a.mode.empty()) cfg.mode = parse_mode(a.mode);
    trainer = std::make_unique<Trainer>(cfg);
  }
  man.config(trainer->config());
  fs::create_directories(out);
  const fs::path metrics = out / "metrics.csv";
  const fs::path ckpt = out / "checkpoint.bin";
  std::string csv = std::string(kMetricsHeader) + "\n";
  auto flush = [&] { write_text(metrics, csv); };
  try {
    trainer->run([&](const MetricsRow& row) {
      csv += format_metrics_row(row) + "\n";
      flush();
      std::fprintf(stderr, "step %llu  loss %.6g  eval_sisnr %.3f dB\n",
                   static_cast<unsigned long long>(row.step), row.loss_total, row.eval_sisnr);
    });
  } catch (const DivergenceError& e) {
    flush();
    man.artifact(metrics);
    man.set("status", "diverged");
    man.set("divergence", {{"step", e.step()},
                           {"loss_total", e.loss().total},
                           {"loss_lr", e.loss().lr},
                           {"loss_dm", e.loss().dm},
                           {"loss_pm", e.loss().pm},
                           {"message", e.what()}});
    man.write(kDiverged);
    throw CliError{kDiverged, "divergence", e.what()};
  }
  flush();
  save_checkpoint(ckpt.string(), trainer->checkpoint());
  man.artifact(metrics);
  man.artifact(ckpt);
  man.set("status", "ok");
  man.set("steps", trainer->steps_done());
  man.write(kOk);
  return kOk;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string steps = "6";
  std::string out = "runs/eval";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t n = 0;
  bool per_sample = false;
};

const char* kEvalHeader = "schedule,mode,n,sisnr,ssnr,mse,sisnr_noisy,ssnr_noisy,mse_noisy";

int cmd_eval(const EvalArgs& a, Manifest& man) {
  const fs::path out(a.out);
  const Checkpoint ckpt = open_checkpoint(a.checkpoint);
  const TrainConfig cfg = parse_config(ckpt.config_text);
  man.config(cfg);
  const EvalSchedule which = parse_eval_schedule(a.steps);
  const Models models = models_from_checkpoint(ckpt, true);
  const Dataset ds = generate_dataset(cfg.data);
  std::vector<SignalPair> pairs = ds.test;
  if (a.n > 0 && a.n < pairs.size()) pairs.resize(a.n);
  const EvalResult r = evaluate(models, cfg, pairs, which, a.seed_set ? a.seed : cfg.eval_seed);

  // eval.csv keeps one row per schedule; rerunning a schedule replaces its row.
  const fs::path table = out / "eval.csv";
  std::map<std::string, std::string> rows;
  if (std::ifstream in(table); in) {
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
      if (!line.empty()) rows[line.substr(0, line.find(','))] = line;
  }
  rows[to_string(which)] = to_string(which) + "," + to_string(cfg.mode) + "," + std::to_string(r.count) +
                           "," + fmt(r.sisnr) + "," + fmt(r.ssnr) + "," + fmt(r.mse) + "," +
                           fmt(r.sisnr_noisy) + "," + fmt(r.ssnr_noisy) + "," + fmt(r.mse_noisy);
  std::string csv = std::string(kEvalHeader) + "\n";
  for (const char* key : {"full", "6", "3"})
    if (rows.count(key)) csv += rows[key] + "\n";
  write_text(table, csv);
  man.artifact(table);
  if (a.per_sample) {
    std::string s = "index,snr_db,sisnr,ssnr,mse,sisnr_noisy\n";
    for (const EvalSample& e : r.samples)
      s += std::to_string(e.index) + "," + fmt(e.snr_db) + "," + fmt(e.sisnr) + "," + fmt(e.ssnr) + "," +
           fmt(e.mse) + "," + fmt(e.sisnr_noisy) + "\n";
    const fs::path p = out / ("eval_samples_" + to_string(which) + ".csv");
    write_text(p, s);
    man.artifact(p);
  }
  std::printf("schedule %s  n %zu  sisnr %.3f dB (noisy %.3f)  ssnr %.3f dB  mse %.5g\n",
              to_string(which).c_str(), r.count, r.sisnr, r.sisnr_noisy, r.ssnr, r.mse);
  man.set("status", "ok");
  man.write(kOk);
  return kOk;
}

// ------------------------------------------------------------------ sample

struct SampleArgs {
  std::string checkpoint;
  std::size_t index = 0;
  bool trace = false;
  std::string steps = "6";
  std::string out = "runs/sample";
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_sample(const SampleArgs& a, Manifest& man) {
  const fs::path out(a.out);
  const Checkpoint ckpt = open_checkpoint(a.checkpoint);
  const TrainConfig cfg = parse_config(ckpt.config_text);
  man.config(cfg);
  const Models models = models_from_checkpoint(ckpt, true);
  const std::size_t global = cfg.data.n_train + a.index;
  if (a.index >= cfg.data.n_test) throw ConfigError("--index must be below n_test");
  const SignalPair p = generate_pair(cfg.data, global);
  const NoiseSchedule train = linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
  const InferenceSchedule infer = eval_inference_schedule(train, parse_eval_schedule(a.steps));
  const DiagGaussian prior =
      resolve_prior(prior_source(cfg.mode), p.y, models.psi ? &*models.psi : nullptr, cfg.prior);
  Rng rng(a.seed_set ? a.seed : cfg.eval_seed, Stream::kSampling, global);
  Trajectory trace;
  const std::vector<double> x = fast_reverse_sample(*models.theta, prior, p.y, infer, rng, a.trace ? &trace : nullptr);

  std::string csv = "i,x0,y,x_hat\n";
  for (std::size_t i = 0; i < x.size(); ++i)
    csv += std::to_string(i) + "," + fmt(p.x0[i]) + "," + fmt(p.y[i]) + "," + fmt(x[i]) + "\n";
  const fs::path sp = out / ("sample_" + std::to_string(a.index) + ".csv");
  write_text(sp, csv);
  man.artifact(sp);
  if (a.trace) {
    std::ostringstream t;
    write_trajectory_csv(t, trace);
    const fs::path tp = out / ("trajectory_" + std::to_string(a.index) + ".csv");
    write_text(tp, t.str());
    man.artifact(tp);
  }
  std::printf("index %zu  sisnr %.3f dB (noisy %.3f dB)\n", a.index, si_snr(x, p.x0), si_snr(p.y, p.x0));
  man.set("status", "ok");
  man.write(kOk);
  return kOk;
}

// --------------------------------------------------------------- gradcheck

struct GradArgs {
  std::size_t d = 8;
  std::size_t T = 5;
  std::uint64_t seed = 1;
  std::string out = "runs/gradcheck";
};

int cmd_gradcheck(const GradArgs& a, Manifest& man) {
  const auto reports = run_gradcheck_suite(a.d, a.T, a.seed);
  double worst = 0.0;
  json rows = json::array();
  for (const FdReport& r : reports) {
    std::printf("%-22s max_rel_error %.3e  (%zu coords, worst %s: analytic %.6e numeric %.6e)\n",
                r.name.c_str(), r.max_error, r.checked, r.worst.c_str(), r.analytic, r.numeric);
    worst = std::max(worst, r.max_error);
    rows.push_back({{"loss", r.name}, {"max_rel_error", r.max_error}, {"coords", r.checked}, {"worst", r.worst}});
  }
  std::printf("worst relative error %.3e\n", worst);
  man.set("d", a.d);
  man.set("T", a.T);
  man.set("reports", rows);
  man.set("worst_rel_error", worst);
  const bool ok = worst < kGradTolerance;
  man.set("status", ok ? "ok" : "failed");
  man.write(ok ? kOk : kGradcheckFailed);
  if (!ok) throw CliError{kGradcheckFailed, "gradcheck", "worst relative error " + fmt(worst) + " >= 1e-3"};
  return kOk;
}

// ------------------------------------------------------------------- sweep

struct SweepArgs {
  std::string param;
  std::string values;
  std::string config;
  std::string steps = "6";
  std::string out = "runs/sweep";
  std::vector<std::string> sets;
};

int cmd_sweep(const SweepArgs& a, Manifest& man) {
  if (a.param != "eta" && a.param != "lambda") throw ConfigError("--param must be eta or lambda");
  const fs::path out(a.out);
  TrainConfig base = resolve_config(a.config, a.sets);
  base.mode = TrainMode::kRestoreGrad;
  man.config(base);
  std::vector<std::string> values;
  {
    std::stringstream ss(a.values);
    std::string v;
    while (std::getline(ss, v, ',')) values.push_back(v);
  }
  if (values.empty()) throw ConfigError("--values is empty");
  const EvalSchedule which = parse_eval_schedule(a.steps);
  std::string csv = "param,value,status,sisnr,ssnr,mse,final_loss\n";
  const fs::path table = out / "sweep.csv";
  for (const std::string& v : values) {
    TrainConfig cfg = base;
    set_config_value(cfg, a.param, v);
    validate(cfg);
    Trainer trainer(cfg);
    double last_loss = 0.0;
    std::string status = "ok";
    EvalResult r;
    try {
      trainer.run([&](const MetricsRow& row) { last_loss = row.loss_total; });
      const std::vector<SignalPair>& test = trainer.dataset().test;
      r = evaluate(trainer.eval_models(), cfg, test, which, cfg.eval_seed);
    } catch (const DivergenceError& e) {
      status = "diverged";
    }
    csv += a.param + "," + v + "," + status + "," + (status == "ok" ? fmt(r.sisnr) : "") + "," +
           (status == "ok" ? fmt(r.ssnr) : "") + "," + (status == "ok" ? fmt(r.mse) : "") + "," +
           fmt(last_loss) + "\n";
    write_text(table, csv);
    std::fprintf(stderr, "%s = %s: %s sisnr %.3f dB\n", a.param.c_str(), v.c_str(), status.c_str(), r.sisnr);
  }
  man.artifact(table);
  man.set("status", "ok");
  man.write(kOk);
  return kOk;
}

// ------------------------------------------------------------ export-prior

struct ExportArgs {
  std::string checkpoint;
  std::size_t index = 0;
  std::string out = "runs/prior";
};

int cmd_export_prior(const ExportArgs& a, Manifest& man) {
  const fs::path out(a.out);
  const Checkpoint ckpt = open_checkpoint(a.checkpoint);
  const TrainConfig cfg = parse_config(ckpt.config_text);
  man.config(cfg);
  if (a.index >= cfg.data.n_test) throw ConfigError("--index must be below n_test");
  const Models models = models_from_checkpoint(ckpt, true);
  const SignalPair p = generate_pair(cfg.data, cfg.data.n_train + a.index);
  const std::vector<double> prior =
      resolve_prior(prior_source(cfg.mode), p.y, models.psi ? &*models.psi : nullptr, cfg.prior).stddev();
  std::vector<double> post;
  if (models.phi) post = encode_posterior(*models.phi, p.x0, p.y).stddev();
  std::string csv = "i,y,x0,sigma_prior,sigma_post\n";
  for (std::size_t i = 0; i < p.y.size(); ++i)
    csv += std::to_string(i) + "," + fmt(p.y[i]) + "," + fmt(p.x0[i]) + "," + fmt(prior[i]) + "," +
           (post.empty() ? std::string() : fmt(post[i])) + "\n";
  const fs::path path = out / ("prior_" + std::to_string(a.index) + ".csv");
  write_text(path, csv);
  man.artifact(path);
  man.set("status", "ok");
  man.write(kOk);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional diffusion with learned zero-mean Gaussian priors on synthetic 1-D signals"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RESTOREGRAD_VERSION);
  const std::string footer = keys_footer();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model and write metrics.csv, checkpoint.bin, manifest.json");
  train->add_option("--config", ta.config, "Config file of key = value lines");
  train->add_option("--mode", ta.mode, "restoregrad | no_posterior | standard_prior | handcrafted_prior (overrides the config)");
  train->add_option("--out", ta.out, "Output directory")->capture_default_str();
  train->add_option("--resume", ta.resume, "Continue from a checkpoint with its config; --set may change n_steps and eval_* keys");
  train->add_option("--set", ta.sets, "Override a config key: --set key=value (repeatable)");
  train->footer(footer);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split and upsert a row of eval.csv");
  eval->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  eval->add_option("--steps", ea.steps, "Sampling schedule: full | 6 | 3")->capture_default_str();
  eval->add_option("--out", ea.out, "Output directory")->capture_default_str();
  eval->add_option("--n", ea.n, "Evaluate only the first N test pairs (0 = all)");
  auto* eseed = eval->add_option("--seed", ea.seed, "Sampling seed (default: eval_seed of the checkpoint)");
  eval->add_flag("--per-sample", ea.per_sample, "Also write per-pair metrics");

  SampleArgs sa;
  auto* sample = app.add_subcommand("sample", "Restore one test pair and write x0, y and the estimate");
  sample->add_option("--checkpoint", sa.checkpoint, "Checkpoint file")->required();
  sample->add_option("--index", sa.index, "Test pair index")->capture_default_str();
  sample->add_flag("--trace", sa.trace, "Also write the per-step trajectory CSV");
  sample->add_option("--steps", sa.steps, "Sampling schedule: full | 6 | 3")->capture_default_str();
  sample->add_option("--out", sa.out, "Output directory")->capture_default_str();
  auto* sseed = sample->add_option("--seed", sa.seed, "Sampling seed (default: eval_seed of the checkpoint)");

  GradArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Compare reverse-mode gradients of every loss with finite differences");
  grad->add_option("--d", ga.d, "Signal length")->capture_default_str();
  grad->add_option("--T", ga.T, "Diffusion steps")->capture_default_str();
  grad->add_option("--seed", ga.seed, "Seed of the random instance")->capture_default_str();
  grad->add_option("--out", ga.out, "Directory of the run manifest")->capture_default_str();

  SweepArgs wa;
  auto* sweep = app.add_subcommand("sweep", "Train restoregrad for each value of eta or lambda and tabulate test metrics");
  sweep->add_option("--param", wa.param, "eta | lambda")->required();
  sweep->add_option("--values", wa.values, "Comma-separated values")->required();
  sweep->add_option("--config", wa.config, "Base config file");
  sweep->add_option("--steps", wa.steps, "Evaluation schedule: full | 6 | 3")->capture_default_str();
  sweep->add_option("--out", wa.out, "Output directory")->capture_default_str();
  sweep->add_option("--set", wa.sets, "Override a config key: --set key=value (repeatable)");
  sweep->footer(footer);

  ExportArgs xa;
  auto* exp = app.add_subcommand("export-prior", "Write y, x0, prior std and posterior std of one test pair");
  exp->add_option("--checkpoint", xa.checkpoint, "Checkpoint file")->required();
  exp->add_option("--index", xa.index, "Test pair index")->capture_default_str();
  exp->add_option("--out", xa.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    print_error({kUsage, "usage", e.what()});
    return kUsage;
  }
  ea.seed_set = eseed->count() > 0;
  sa.seed_set = sseed->count() > 0;

  std::unique_ptr<Manifest> man;
  auto fail = [&](const CliError& e) {
    print_error(e);
    if (man && !man->written()) {
      man->set("status", "error");
      man->set("error", {{"code", e.code}, {"kind", e.kind}, {"message", e.message}});
      man->write(e.code);
    }
    return e.code;
  };
  try {
    if (*train) return cmd_train(ta, *(man = std::make_unique<Manifest>("train", ta.out)));
    if (*eval) return cmd_eval(ea, *(man = std::make_unique<Manifest>("eval", ea.out)));
    if (*sample) return cmd_sample(sa, *(man = std::make_unique<Manifest>("sample", sa.out)));
    if (*grad) return cmd_gradcheck(ga, *(man = std::make_unique<Manifest>("gradcheck", ga.out)));
    if (*sweep) return cmd_sweep(wa, *(man = std::make_unique<Manifest>("sweep", wa.out)));
    if (*exp) return cmd_export_prior(xa, *(man = std::make_unique<Manifest>("export-prior", xa.out)));
  } catch (const CliError& e) {
    return fail(e);
  } catch (const ConfigError& e) {
    return fail({kUsage, "config", e.what()});
  } catch (const CheckpointError& e) {
    return fail({kFailure, "checkpoint", e.what()});
  } catch (const std::exception& e) {
    return fail({kFailure, "error", e.what()});
  }
  return kUsage;
}
