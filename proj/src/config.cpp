#include "restoregrad/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "restoregrad/error.hpp"

namespace restoregrad {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double to_double(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError("'" + s + "' is not a finite number");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("'" + s + "' is not a non-negative integer");
  return v;
}

std::vector<double> to_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(trim(item)));
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

struct Entry {
  const char* key;
  const char* help;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define RG_DOUBLE(name, field, help)                                                 \
  Entry{name, help, [](TrainConfig& c, const std::string& v) { c.field = to_double(v); }, \
        [](const TrainConfig& c) { return fmt(c.field); }}
#define RG_SIZE(name, field, help)                                                          \
  Entry{name, help,                                                                         \
        [](TrainConfig& c, const std::string& v) { c.field = static_cast<std::size_t>(to_u64(v)); }, \
        [](const TrainConfig& c) { return std::to_string(c.field); }}
#define RG_U64(name, field, help)                                                  \
  Entry{name, help, [](TrainConfig& c, const std::string& v) { c.field = to_u64(v); }, \
        [](const TrainConfig& c) { return std::to_string(c.field); }}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      RG_SIZE("T", T, "number of training diffusion steps"),
      RG_DOUBLE("beta_min", beta_min, "first beta of the linear schedule"),
      RG_DOUBLE("beta_max", beta_max, "last beta of the linear schedule"),
      RG_DOUBLE("eta", eta, "weight of the latent regularization term"),
      RG_DOUBLE("lambda", lambda, "weight of the prior matching term"),
      RG_DOUBLE("sigma_min", sigma_min, "std floor added to the encoder outputs"),
      Entry{"mode", "restoregrad | no_posterior | standard_prior | handcrafted_prior",
            [](TrainConfig& c, const std::string& v) { c.mode = parse_mode(v); },
            [](const TrainConfig& c) { return to_string(c.mode); }},
      RG_DOUBLE("lr", adam.lr, "Adam learning rate"),
      RG_DOUBLE("adam_beta1", adam.beta1, "Adam first-moment decay"),
      RG_DOUBLE("adam_beta2", adam.beta2, "Adam second-moment decay"),
      RG_DOUBLE("adam_eps", adam.eps, "Adam denominator epsilon"),
      RG_SIZE("batch_size", batch_size, "pairs per training step"),
      RG_SIZE("n_steps", n_steps, "training steps"),
      RG_DOUBLE("ema_decay", ema_decay, "EMA weight of the parameter shadow; 0 disables"),
      RG_U64("seed", seed, "training seed (initialization, batches, noise, timesteps)"),
      RG_SIZE("eval_every", eval_every, "steps between metric rows"),
      RG_SIZE("eval_subset", eval_subset, "test pairs sampled for each metric row"),
      RG_U64("eval_seed", eval_seed, "seed of the sampling noise during evaluation"),
      Entry{"eval_schedule", "sampling schedule of metric rows: full | 6 | 3",
            [](TrainConfig& c, const std::string& v) { c.eval_schedule = parse_eval_schedule(v); },
            [](const TrainConfig& c) { return to_string(c.eval_schedule); }},
      Entry{"precision", "parameter storage between updates: f32 | f64",
            [](TrainConfig& c, const std::string& v) {
              if (v == "f32") c.precision = Precision::kF32;
              else if (v == "f64") c.precision = Precision::kF64;
              else throw ConfigError("precision must be f32 or f64");
            },
            [](const TrainConfig& c) { return std::string(c.precision == Precision::kF32 ? "f32" : "f64"); }},
      RG_SIZE("d", data.d, "signal length"),
      RG_SIZE("n_train", data.n_train, "training pairs"),
      RG_SIZE("n_test", data.n_test, "test pairs"),
      Entry{"train_snrs", "comma-separated training SNRs in dB",
            [](TrainConfig& c, const std::string& v) { c.data.train_snrs = to_list(v); },
            [](const TrainConfig& c) { return fmt_list(c.data.train_snrs); }},
      Entry{"test_snrs", "comma-separated test SNRs in dB",
            [](TrainConfig& c, const std::string& v) { c.data.test_snrs = to_list(v); },
            [](const TrainConfig& c) { return fmt_list(c.data.test_snrs); }},
      Entry{"noise_kind", "white | pink",
            [](TrainConfig& c, const std::string& v) { c.data.noise_kind = parse_noise_kind(v); },
            [](const TrainConfig& c) { return to_string(c.data.noise_kind); }},
      RG_U64("data_seed", data.seed, "dataset seed"),
      RG_SIZE("prior_frame_len", prior.frame_len, "handcrafted prior frame length"),
      RG_SIZE("prior_hop", prior.hop, "handcrafted prior hop"),
      RG_DOUBLE("prior_floor", prior.floor, "handcrafted prior std floor"),
      RG_SIZE("ssnr_seg_len", ssnr.seg_len, "SSNR segment length in samples"),
      RG_DOUBLE("ssnr_overlap", ssnr.overlap, "SSNR segment overlap fraction"),
  };
  return table;
}

#undef RG_DOUBLE
#undef RG_SIZE
#undef RG_U64

const Entry& find_entry(const std::string& key) {
  for (const Entry& e : entries())
    if (key == e.key) return e;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kRestoreGrad: return "restoregrad";
    case TrainMode::kNoPosterior: return "no_posterior";
    case TrainMode::kStandardPrior: return "standard_prior";
    case TrainMode::kHandcraftedPrior: return "handcrafted_prior";
  }
  return "unknown";
}

TrainMode parse_mode(const std::string& s) {
  if (s == "restoregrad") return TrainMode::kRestoreGrad;
  if (s == "no_posterior") return TrainMode::kNoPosterior;
  if (s == "standard_prior") return TrainMode::kStandardPrior;
  if (s == "handcrafted_prior") return TrainMode::kHandcraftedPrior;
  throw ConfigError("unknown mode '" + s + "'");
}

std::string to_string(EvalSchedule s) {
  switch (s) {
    case EvalSchedule::kFull: return "full";
    case EvalSchedule::kSix: return "6";
    case EvalSchedule::kThree: return "3";
  }
  return "unknown";
}

EvalSchedule parse_eval_schedule(const std::string& s) {
  if (s == "full") return EvalSchedule::kFull;
  if (s == "6") return EvalSchedule::kSix;
  if (s == "3") return EvalSchedule::kThree;
  throw ConfigError("schedule must be full, 6 or 3, got '" + s + "'");
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  find_entry(key).set(cfg, value);
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty() || value.empty()) throw ConfigError(where + "expected 'key = value'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' set twice");
    try {
      set_config_value(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  validate(cfg);
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  for (const Entry& e : entries()) out += std::string(e.key) + " = " + e.get(cfg) + "\n";
  return out;
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.T == 0) fail("T must be at least 1");
  if (!(c.beta_min > 0.0 && c.beta_min <= c.beta_max && c.beta_max < 1.0))
    fail("need 0 < beta_min <= beta_max < 1");
  if (c.eta < 0.0) fail("eta must be non-negative");
  if (c.lambda < 0.0) fail("lambda must be non-negative");
  if (!(c.sigma_min > 0.0)) fail("sigma_min must be positive");
  if (!(c.adam.lr > 0.0)) fail("lr must be positive");
  if (!(c.adam.beta1 >= 0.0 && c.adam.beta1 < 1.0)) fail("adam_beta1 must lie in [0, 1)");
  if (!(c.adam.beta2 >= 0.0 && c.adam.beta2 < 1.0)) fail("adam_beta2 must lie in [0, 1)");
  if (!(c.adam.eps > 0.0)) fail("adam_eps must be positive");
  if (c.batch_size == 0) fail("batch_size must be at least 1");
  if (!(c.ema_decay >= 0.0 && c.ema_decay < 1.0)) fail("ema_decay must lie in [0, 1)");
  if (c.eval_every == 0) fail("eval_every must be at least 1");
  if (c.data.d < 2) fail("d must be at least 2");
  if (c.data.n_train < c.batch_size) fail("n_train must be at least batch_size");
  if (c.data.n_test == 0) fail("n_test must be at least 1");
  if (c.data.train_snrs.empty() || c.data.test_snrs.empty()) fail("SNR lists must be nonempty");
  if (c.prior.hop == 0 || c.prior.frame_len < c.prior.hop) fail("need prior_frame_len >= prior_hop >= 1");
  if (c.prior.frame_len > c.data.d) fail("prior_frame_len exceeds the signal length");
  if (!(c.prior.floor > 0.0 && c.prior.floor < 1.0)) fail("prior_floor must lie in (0, 1)");
  if (c.ssnr.seg_len < 2 || c.ssnr.seg_len > c.data.d) fail("ssnr_seg_len must lie in [2, d]");
  if (!(c.ssnr.overlap >= 0.0 && c.ssnr.overlap < 1.0)) fail("ssnr_overlap must lie in [0, 1)");
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const Entry& e : entries()) k.push_back({e.key, e.help});
    return k;
  }();
  return keys;
}

}  // namespace restoregrad
