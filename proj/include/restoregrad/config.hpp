#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "restoregrad/adam.hpp"
#include "restoregrad/priors.hpp"
#include "restoregrad/signals.hpp"

namespace restoregrad {

enum class TrainMode { kRestoreGrad, kNoPosterior, kStandardPrior, kHandcraftedPrior };

std::string to_string(TrainMode m);
TrainMode parse_mode(const std::string& s);

// Which sampling schedule a metric row was produced with.
enum class EvalSchedule { kFull, kSix, kThree };

std::string to_string(EvalSchedule s);
EvalSchedule parse_eval_schedule(const std::string& s);

// Storage precision of parameters between updates.
enum class Precision { kF32, kF64 };

struct TrainConfig {
  std::size_t T = 50;
  double beta_min = 1e-4;
  double beta_max = 0.035;
  double eta = 0.1;
  double lambda = 0.5;
  double sigma_min = 0.1;
  TrainMode mode = TrainMode::kRestoreGrad;
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t n_steps = 2000;
  double ema_decay = 0.0;
  std::uint64_t seed = 1;
  std::size_t eval_every = 250;
  std::size_t eval_subset = 32;
  std::uint64_t eval_seed = 7;
  EvalSchedule eval_schedule = EvalSchedule::kSix;
  Precision precision = Precision::kF32;
  DatasetSpec data;
  EnergyPriorConfig prior;
  SsnrConfig ssnr;
};

/// Parses `key = value` lines. Blank lines and text after '#' are ignored;
/// keys may appear in any order and unset keys keep their defaults. Unknown
/// keys, repeated keys, malformed values and failed validation throw
/// ConfigError naming the line.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::string& path);

// Applies one assignment to an existing config.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

// Every key in a fixed order with values printed exactly (round-trips).
std::string format_config(const TrainConfig& cfg);

// Throws ConfigError if the config is inconsistent.
void validate(const TrainConfig& cfg);

struct ConfigKey {
  std::string key;
  std::string help;
};
const std::vector<ConfigKey>& config_keys();

}  // namespace restoregrad
