#include "restoregrad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace restoregrad {

namespace {

constexpr std::size_t kEvalBatch = 32;
const char* const kEmaPrefix = "ema/";
const char* const kAdamM = "adam.m/";
const char* const kAdamV = "adam.v/";
const char* const kWindow = "train/window";

void round_models(Models& m) {
  if (m.theta) m.theta->params().round_to_float();
  if (m.psi) m.psi->params().round_to_float();
  if (m.phi) m.phi->params().round_to_float();
}

// (prefix, store) pairs of the networks present.
template <class M, class F>
void for_each_store(M& m, F&& f) {
  if (m.theta) f(std::string(NoiseEstimator::kPrefix), m.theta->params());
  if (m.psi) f(std::string(PriorNet::kPrefix), m.psi->params());
  if (m.phi) f(std::string(PosteriorNet::kPrefix), m.phi->params());
}

std::vector<double> gather(const std::vector<SignalPair>& pairs, const std::vector<std::size_t>& idx,
                           bool clean) {
  const std::size_t d = pairs.front().x0.size();
  std::vector<double> out(idx.size() * d);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const auto& src = clean ? pairs[idx[b]].x0 : pairs[idx[b]].y;
    std::copy(src.begin(), src.end(), out.begin() + static_cast<std::ptrdiff_t>(b * d));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

ParamStore load_store(const Checkpoint& c, const std::string& prefix, const ParamStore& layout) {
  ParamStore s;
  for (const ParamArray& a : layout.arrays()) {
    const CheckpointArray* e = c.find(prefix + "/" + a.name);
    if (!e) throw CheckpointError("checkpoint is missing " + prefix + "/" + a.name);
    if (e->shape != a.shape) throw CheckpointError("shape of " + prefix + "/" + a.name + " changed");
    s.add(a.name, a.shape, e->values);
  }
  return s;
}

Models load_models(const Checkpoint& c, const TrainConfig& cfg, const std::string& prefix) {
  // A freshly initialized set provides the expected layout.
  const Models layout = init_models(cfg);
  const NetConfig net = net_config(cfg);
  Models m;
  if (layout.theta)
    m.theta.emplace(net, load_store(c, prefix + NoiseEstimator::kPrefix, layout.theta->params()));
  if (layout.psi) m.psi.emplace(net, load_store(c, prefix + PriorNet::kPrefix, layout.psi->params()));
  if (layout.phi)
    m.phi.emplace(net, load_store(c, prefix + PosteriorNet::kPrefix, layout.phi->params()));
  return m;
}

}  // namespace

NetConfig net_config(const TrainConfig& cfg) {
  NetConfig n;
  n.sigma_min = cfg.sigma_min;
  return n;
}

Networks Models::networks() const {
  Networks n;
  if (theta) n.theta = &*theta;
  if (psi) n.psi = &*psi;
  if (phi) n.phi = &*phi;
  return n;
}

Models init_models(const TrainConfig& cfg) {
  const NetConfig net = net_config(cfg);
  Models m;
  m.theta.emplace(net, cfg.seed);
  if (cfg.mode == TrainMode::kRestoreGrad || cfg.mode == TrainMode::kNoPosterior) m.psi.emplace(net, cfg.seed);
  if (cfg.mode == TrainMode::kRestoreGrad) m.phi.emplace(net, cfg.seed);
  if (cfg.precision == Precision::kF32) round_models(m);
  return m;
}

PriorSource prior_source(TrainMode mode) {
  switch (mode) {
    case TrainMode::kRestoreGrad:
    case TrainMode::kNoPosterior: return PriorSource::kLearned;
    case TrainMode::kStandardPrior: return PriorSource::kStandard;
    case TrainMode::kHandcraftedPrior: return PriorSource::kHandcrafted;
  }
  return PriorSource::kStandard;
}

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.step) + "," + fmt(r.loss_total) + "," + fmt(r.loss_lr) + "," + fmt(r.loss_dm) +
         "," + fmt(r.loss_pm) + "," + fmt(r.eval_sisnr) + "," + fmt(r.eval_ssnr);
}

InferenceSchedule eval_inference_schedule(const NoiseSchedule& train, EvalSchedule which) {
  switch (which) {
    case EvalSchedule::kFull: return full_inference_schedule(train);
    case EvalSchedule::kSix: return inference_schedule(train, {kFastBetas6.begin(), kFastBetas6.end()});
    case EvalSchedule::kThree: return inference_schedule(train, {kFastBetas3.begin(), kFastBetas3.end()});
  }
  throw ScheduleError("unknown evaluation schedule");
}

EvalResult evaluate(const Models& models, const TrainConfig& cfg, const std::vector<SignalPair>& pairs,
                    EvalSchedule schedule, std::uint64_t seed) {
  if (!models.theta) throw Error("evaluation needs the noise estimator");
  const NoiseSchedule train = linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
  const InferenceSchedule infer = eval_inference_schedule(train, schedule);
  const PriorSource source = prior_source(cfg.mode);
  const EpsilonFn eps = estimator_fn(*models.theta);

  EvalResult res;
  res.schedule = schedule;
  res.count = pairs.size();
  for (std::size_t start = 0; start < pairs.size(); start += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, pairs.size() - start);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), start);
    const std::vector<double> y = gather(pairs, idx, false);
    const std::size_t d = pairs[start].y.size();
    std::vector<double> prior_std(y.size());
    if (source == PriorSource::kLearned) {
      if (!models.psi) throw Error("learned-prior evaluation needs the prior net");
      prior_std = models.psi->evaluate_stddev(y, n);
    } else {
      for (std::size_t b = 0; b < n; ++b) {
        const auto row = std::span<const double>(y).subspan(b * d, d);
        const std::vector<double> s = resolve_prior(source, row, nullptr, cfg.prior).stddev();
        std::copy(s.begin(), s.end(), prior_std.begin() + static_cast<std::ptrdiff_t>(b * d));
      }
    }
    std::vector<Rng> rngs;
    for (std::size_t b = 0; b < n; ++b) rngs.emplace_back(seed, Stream::kSampling, pairs[start + b].index);
    const std::vector<double> x = reverse_sample_batch(eps, prior_std, y, n, infer, rngs);
    for (std::size_t b = 0; b < n; ++b) {
      const SignalPair& p = pairs[start + b];
      const auto est = std::span<const double>(x).subspan(b * d, d);
      EvalSample s;
      s.index = p.index;
      s.snr_db = p.snr_db;
      s.sisnr = si_snr(est, p.x0);
      s.ssnr = ssnr(est, p.x0, cfg.ssnr);
      s.mse = mse(est, p.x0);
      s.sisnr_noisy = si_snr(p.y, p.x0);
      res.sisnr += s.sisnr;
      res.ssnr += s.ssnr;
      res.mse += s.mse;
      res.sisnr_noisy += s.sisnr_noisy;
      res.ssnr_noisy += ssnr(p.y, p.x0, cfg.ssnr);
      res.mse_noisy += mse(p.y, p.x0);
      res.samples.push_back(s);
    }
  }
  const double n = static_cast<double>(std::max<std::size_t>(res.count, 1));
  res.sisnr /= n;
  res.ssnr /= n;
  res.mse /= n;
  res.sisnr_noisy /= n;
  res.ssnr_noisy /= n;
  res.mse_noisy /= n;
  return res;
}

// ---------------------------------------------------------------- Trainer

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(cfg),
      sched_(linear_schedule(cfg.T, cfg.beta_min, cfg.beta_max)),
      data_(generate_dataset(cfg.data)),
      models_(init_models(cfg)) {
  validate(cfg_);
  if (cfg_.ema_decay > 0.0) ema_ = models_;
}

Trainer::Trainer(const Checkpoint& c)
    : cfg_(parse_config(c.config_text)),
      sched_(linear_schedule(cfg_.T, cfg_.beta_min, cfg_.beta_max)),
      data_(generate_dataset(cfg_.data)),
      models_(load_models(c, cfg_, "")) {
  if (c.rng_seed != cfg_.seed || c.rng_counter != c.step)
    throw CheckpointError("checkpoint random-stream state does not match its config");
  step_ = c.step;
  if (cfg_.ema_decay > 0.0) ema_ = load_models(c, cfg_, kEmaPrefix);
  for_each_store(models_, [&](const std::string& prefix, ParamStore& store) {
    for (const ParamArray& a : store.arrays()) {
      const std::string key = prefix + "/" + a.name;
      const CheckpointArray* m = c.find(kAdamM + key);
      const CheckpointArray* v = c.find(kAdamV + key);
      if (!m || !v) {
        if (step_ > 0) throw CheckpointError("checkpoint is missing Adam moments of " + key);
        continue;
      }
      AdamMoments& mo = adam_.moments(key, a.values.size());
      mo.m = m->values;
      mo.v = v->values;
    }
  });
  if (const CheckpointArray* w = c.find(kWindow); w && w->values.size() == window_.size())
    window_ = w->values;
}

std::vector<std::size_t> Trainer::batch_indices(std::uint64_t step) const {
  const std::size_t n = cfg_.data.n_train;
  std::vector<std::size_t> idx(cfg_.batch_size);
  for (std::size_t j = 0; j < cfg_.batch_size; ++j) {
    const std::uint64_t pos = step * cfg_.batch_size + j;
    const std::uint64_t epoch = pos / n;
    if (epoch != perm_epoch_) {
      perm_.resize(n);
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      Rng rng(cfg_.seed, Stream::kPermutation, epoch);
      for (std::size_t i = n - 1; i > 0; --i) std::swap(perm_[i], perm_[rng.index(i + 1)]);
      perm_epoch_ = epoch;
    }
    idx[j] = perm_[pos % n];
  }
  return idx;
}

Trainer::StepResult Trainer::compute(std::uint64_t step, bool with_grads) const {
  const std::vector<std::size_t> idx = batch_indices(step);
  Batch batch;
  batch.batch = idx.size();
  batch.length = cfg_.data.d;
  batch.x0 = gather(data_.train, idx, true);
  batch.y = gather(data_.train, idx, false);

  LossDraws draws;
  draws.t.resize(batch.batch);
  Rng t_rng(cfg_.seed, Stream::kTrainTime, step);
  for (auto& t : draws.t) t = t_rng.index(sched_.steps()) + 1;
  draws.u.resize(batch.batch * batch.length);
  Rng u_rng(cfg_.seed, Stream::kTrainNoise, step);
  u_rng.fill_normal(draws.u);

  ad::Tape tape;
  BoundNetworks nets(tape, models_.networks(), with_grads);
  LossGraph g;
  try {
    switch (cfg_.mode) {
      case TrainMode::kRestoreGrad:
        g = simplified_loss(nets, batch, sched_, cfg_.eta, cfg_.lambda, draws);
        break;
      case TrainMode::kNoPosterior:
        g = no_posterior_loss(nets, batch, sched_, cfg_.eta, draws);
        break;
      case TrainMode::kStandardPrior:
        g = standard_prior_loss(nets, batch, sched_, draws);
        break;
      case TrainMode::kHandcraftedPrior: {
        std::vector<double> std(batch.y.size());
        for (std::size_t b = 0; b < batch.batch; ++b) {
          const auto row = std::span<const double>(batch.y).subspan(b * batch.length, batch.length);
          const std::vector<double> s = energy_prior(row, cfg_.prior).stddev();
          std::copy(s.begin(), s.end(), std.begin() + static_cast<std::ptrdiff_t>(b * batch.length));
        }
        g = fixed_prior_loss(nets, batch, sched_, std, draws);
        break;
      }
    }
  } catch (const NonFiniteError& e) {
    throw DivergenceError("training diverged at step " + std::to_string(step + 1) + ": " + e.what(),
                          step + 1, LossBreakdown{});
  }
  const LossBreakdown& v = g.values;
  if (!std::isfinite(v.total) || v.total > kDivergenceLimit) {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "training diverged at step %llu: total=%.6g lr=%.6g dm=%.6g pm=%.6g",
                  static_cast<unsigned long long>(step + 1), v.total, v.lr, v.dm, v.pm);
    throw DivergenceError(buf, step + 1, v);
  }
  StepResult r;
  r.loss = v;
  if (with_grads) {
    try {
      r.grads = tape.backward(g.total);
    } catch (const NonFiniteError& e) {
      throw DivergenceError("training diverged at step " + std::to_string(step + 1) +
                                " (gradient): " + e.what(),
                            step + 1, v);
    }
  }
  return r;
}

LossBreakdown Trainer::peek_loss() const { return compute(step_, false).loss; }

LossBreakdown Trainer::step() {
  StepResult r = compute(step_, true);
  const std::uint64_t t = step_ + 1;
  for_each_store(models_, [&](const std::string& prefix, ParamStore& store) {
    adam_update(store, prefix, r.grads, adam_, t, cfg_.adam);
  });
  if (cfg_.precision == Precision::kF32) round_models(models_);
  if (ema_) {
    if (ema_->theta) ema_update(ema_->theta->params(), models_.theta->params(), cfg_.ema_decay);
    if (ema_->psi) ema_update(ema_->psi->params(), models_.psi->params(), cfg_.ema_decay);
    if (ema_->phi) ema_update(ema_->phi->params(), models_.phi->params(), cfg_.ema_decay);
    if (cfg_.precision == Precision::kF32) round_models(*ema_);
  }
  step_ = t;
  window_[0] += r.loss.total;
  window_[1] += r.loss.lr;
  window_[2] += r.loss.dm;
  window_[3] += r.loss.pm;
  window_[4] += 1.0;
  return r.loss;
}

MetricsRow Trainer::make_row() {
  MetricsRow row;
  row.step = step_;
  const double n = std::max(window_[4], 1.0);
  row.loss_total = window_[0] / n;
  row.loss_lr = window_[1] / n;
  row.loss_dm = window_[2] / n;
  row.loss_pm = window_[3] / n;
  std::fill(window_.begin(), window_.end(), 0.0);
  const std::size_t m = std::min(cfg_.eval_subset, data_.test.size());
  if (m > 0) {
    const std::vector<SignalPair> subset(data_.test.begin(), data_.test.begin() + static_cast<std::ptrdiff_t>(m));
    const EvalResult e = evaluate(eval_models(), cfg_, subset, cfg_.eval_schedule, cfg_.eval_seed);
    row.eval_sisnr = e.sisnr;
    row.eval_ssnr = e.ssnr;
  }
  return row;
}

void Trainer::run(const std::function<void(const MetricsRow&)>& on_row) {
  while (step_ < cfg_.n_steps) {
    step();
    if (step_ % cfg_.eval_every == 0 || step_ == cfg_.n_steps) {
      const MetricsRow row = make_row();
      if (on_row) on_row(row);
    }
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config_text = format_config(cfg_);
  c.step = step_;
  c.rng_seed = cfg_.seed;
  c.rng_counter = step_;
  const DType pdt = cfg_.precision == Precision::kF32 ? DType::kF32 : DType::kF64;
  auto add_models = [&](const Models& m, const std::string& prefix) {
    for_each_store(m, [&](const std::string& net, const ParamStore& store) {
      for (const ParamArray& a : store.arrays()) c.arrays.push_back({prefix + net + "/" + a.name, pdt, a.shape, a.values});
    });
  };
  add_models(models_, "");
  if (ema_) add_models(*ema_, kEmaPrefix);
  for_each_store(models_, [&](const std::string& net, const ParamStore& store) {
    for (const ParamArray& a : store.arrays()) {
      const std::string key = net + "/" + a.name;
      const auto it = adam_.all().find(key);
      if (it == adam_.all().end()) continue;
      c.arrays.push_back({kAdamM + key, DType::kF64, a.shape, it->second.m});
      c.arrays.push_back({kAdamV + key, DType::kF64, a.shape, it->second.v});
    }
  });
  c.arrays.push_back({kWindow, DType::kF64, {window_.size()}, window_});
  return c;
}

Models models_from_checkpoint(const Checkpoint& ckpt, bool prefer_ema) {
  const TrainConfig cfg = parse_config(ckpt.config_text);
  const bool has_ema = ckpt.find(std::string(kEmaPrefix) + NoiseEstimator::kPrefix + "/out.b") != nullptr;
  return load_models(ckpt, cfg, prefer_ema && has_ema ? kEmaPrefix : "");
}

}  // namespace restoregrad
