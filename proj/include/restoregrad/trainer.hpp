#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "restoregrad/adam.hpp"
#include "restoregrad/checkpoint.hpp"
#include "restoregrad/config.hpp"
#include "restoregrad/error.hpp"
#include "restoregrad/nets.hpp"
#include "restoregrad/objective.hpp"
#include "restoregrad/sampler.hpp"
#include "restoregrad/schedule.hpp"
#include "restoregrad/signals.hpp"

namespace restoregrad {

// Raised when the training loss exceeds kDivergenceLimit or is non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::uint64_t step, LossBreakdown loss)
      : Error(what), step_(step), loss_(loss) {}
  std::uint64_t step() const { return step_; }
  const LossBreakdown& loss() const { return loss_; }

 private:
  std::uint64_t step_;
  LossBreakdown loss_;
};

inline constexpr double kDivergenceLimit = 1e6;

NetConfig net_config(const TrainConfig& cfg);

// The networks a mode trains: theta always, psi for the learned-prior
// modes, phi for restoregrad only.
struct Models {
  std::optional<NoiseEstimator> theta;
  std::optional<PriorNet> psi;
  std::optional<PosteriorNet> phi;

  Networks networks() const;
};

Models init_models(const TrainConfig& cfg);

// Prior used at sampling time for a mode.
PriorSource prior_source(TrainMode mode);

struct MetricsRow {
  std::uint64_t step = 0;
  double loss_total = 0.0;
  double loss_lr = 0.0;
  double loss_dm = 0.0;
  double loss_pm = 0.0;
  double eval_sisnr = 0.0;
  double eval_ssnr = 0.0;
};

inline constexpr const char* kMetricsHeader = "step,loss_total,loss_lr,loss_dm,loss_pm,eval_sisnr,eval_ssnr";
std::string format_metrics_row(const MetricsRow& row);

InferenceSchedule eval_inference_schedule(const NoiseSchedule& train, EvalSchedule which);

struct EvalSample {
  std::size_t index = 0;
  double snr_db = 0.0;
  double sisnr = 0.0;
  double ssnr = 0.0;
  double mse = 0.0;
  double sisnr_noisy = 0.0;
};

struct EvalResult {
  EvalSchedule schedule = EvalSchedule::kSix;
  std::size_t count = 0;
  double sisnr = 0.0;
  double ssnr = 0.0;
  double mse = 0.0;
  // The same metrics for the unprocessed conditioner y.
  double sisnr_noisy = 0.0;
  double ssnr_noisy = 0.0;
  double mse_noisy = 0.0;
  std::vector<EvalSample> samples;
};

/// Restores every pair with the mode's prior over the chosen schedule.
/// Pair i uses the sampling stream (seed, sampling, pair index), so results
/// do not depend on which other pairs are evaluated alongside it.
EvalResult evaluate(const Models& models, const TrainConfig& cfg, const std::vector<SignalPair>& pairs,
                    EvalSchedule schedule, std::uint64_t seed);

/// Training state of one run: networks, Adam moments, optional EMA shadows
/// and the position in the deterministic data and noise streams.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);
  // Resumes from a checkpoint written by checkpoint().
  explicit Trainer(const Checkpoint& ckpt);

  // One optimizer step on the next batch. Throws DivergenceError before
  // touching any parameter if the loss is non-finite or too large.
  LossBreakdown step();

  // Runs until n_steps, emitting a metrics row every eval_every steps and
  // after the last step. Throws DivergenceError.
  void run(const std::function<void(const MetricsRow&)>& on_row);

  // The loss of the batch the next step() would take, without updating.
  LossBreakdown peek_loss() const;

  Checkpoint checkpoint() const;

  const TrainConfig& config() const { return cfg_; }
  std::uint64_t steps_done() const { return step_; }
  const Models& models() const { return models_; }
  // EMA shadows when enabled, otherwise the live parameters.
  const Models& eval_models() const { return ema_ ? *ema_ : models_; }
  const Dataset& dataset() const { return data_; }
  const NoiseSchedule& schedule() const { return sched_; }

  // Indices of the training pairs in the batch of step `step` (0-based).
  std::vector<std::size_t> batch_indices(std::uint64_t step) const;

 private:
  struct StepResult {
    LossBreakdown loss;
    ad::Gradients grads;
  };
  StepResult compute(std::uint64_t step, bool with_grads) const;
  MetricsRow make_row();

  TrainConfig cfg_;
  NoiseSchedule sched_;
  Dataset data_;
  Models models_;
  std::optional<Models> ema_;
  AdamState adam_;
  std::uint64_t step_ = 0;
  // Loss sums since the last metrics row: total, lr, dm, pm, count.
  std::vector<double> window_ = std::vector<double>(5, 0.0);
  mutable std::uint64_t perm_epoch_ = UINT64_MAX;
  mutable std::vector<std::size_t> perm_;
};

// Networks stored in a checkpoint (EMA shadows if requested and present).
Models models_from_checkpoint(const Checkpoint& ckpt, bool prefer_ema);

}  // namespace restoregrad
