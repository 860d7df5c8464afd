#include "restoregrad/objective.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "restoregrad/error.hpp"

namespace restoregrad {

namespace {

using ad::Tensor;

void require_positive(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!(x > 0.0)) throw Error(std::string(what) + ": variances must be positive");
}

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": length mismatch");
}

// Per-row coefficient arrays sqrt(abar_t) and sqrt(1 - abar_t), expanded to [B, L].
struct ForwardCoefs {
  std::vector<double> signal;
  std::vector<double> noise;
};

ForwardCoefs forward_coefs(const std::vector<std::size_t>& t, std::size_t length,
                           const NoiseSchedule& sched) {
  ForwardCoefs c;
  c.signal.resize(t.size() * length);
  c.noise.resize(t.size() * length);
  for (std::size_t b = 0; b < t.size(); ++b) {
    if (t[b] < 1 || t[b] > sched.steps()) throw ScheduleError("timestep out of range");
    const double a = std::sqrt(sched.alpha_bar(t[b]));
    const double n = std::sqrt(1.0 - sched.alpha_bar(t[b]));
    for (std::size_t i = 0; i < length; ++i) {
      c.signal[b * length + i] = a;
      c.noise[b * length + i] = n;
    }
  }
  return c;
}

struct Inputs {
  Tensor x0, y, u;
  ad::Shape shape;
};

Inputs place_inputs(ad::Tape& tape, const Batch& batch, const LossDraws& draws) {
  const std::size_t n = batch.batch * batch.length;
  if (batch.x0.size() != n || batch.y.size() != n || draws.u.size() != n ||
      draws.t.size() != batch.batch)
    throw ShapeError("loss inputs do not match the batch shape");
  Inputs in;
  in.shape = {batch.batch, batch.length};
  in.x0 = tape.constant(in.shape, batch.x0);
  in.y = tape.constant(in.shape, batch.y);
  in.u = tape.constant(in.shape, draws.u);
  return in;
}

// x_t and eps_hat for noise eps.
Tensor predict_noise(BoundNetworks& nets, const Inputs& in, const Tensor& eps,
                     const LossDraws& draws, const NoiseSchedule& sched) {
  ad::Tape& tape = in.x0.tape();
  const ForwardCoefs c = forward_coefs(draws.t, in.shape[1], sched);
  const Tensor x_t = ad::add(ad::mul(tape.constant(in.shape, c.signal), in.x0),
                             ad::mul(tape.constant(in.shape, c.noise), eps));
  std::vector<double> t_hat(draws.t.begin(), draws.t.end());
  return nets.nets.theta->forward(*nets.theta, x_t, in.y, t_hat);
}

LossGraph finish(Tensor lr, Tensor dm, Tensor pm, std::size_t batch, double eta,
                 double lambda) {
  const double inv = 1.0 / static_cast<double>(batch);
  LossGraph g;
  g.lr = ad::scale(lr, inv);
  g.dm = ad::scale(dm, inv);
  g.pm = ad::scale(pm, inv);
  g.total = ad::add(ad::add(ad::scale(g.lr, eta), g.dm), ad::scale(g.pm, lambda));
  g.values = combine_terms(g.lr.item(), g.dm.item(), g.pm.item(), eta, lambda);
  return g;
}

void require_theta(const BoundNetworks& nets) {
  if (!nets.theta) throw Error("loss needs the noise estimator");
}

}  // namespace

LossBreakdown combine_terms(double lr, double dm, double pm, double eta, double lambda) {
  LossBreakdown b;
  b.lr = lr;
  b.dm = dm;
  b.pm = pm;
  b.eta = eta;
  b.lambda = lambda;
  b.total = eta * lr + dm + lambda * pm;
  return b;
}

double weighted_norm(std::span<const double> x, std::span<const double> variances) {
  require_same(x.size(), variances.size(), "weighted_norm");
  require_positive(variances, "weighted_norm");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * x[i] / variances[i];
  return s;
}

double lr_loss(std::span<const double> x0, const DiagGaussian& post, double alpha_bar_T) {
  const double norm = weighted_norm(x0, post.variances);
  double logdet = 0.0;
  for (double v : post.variances) logdet += std::log(v);
  return alpha_bar_T * norm + logdet;
}

double dm_loss(std::span<const double> eps, std::span<const double> eps_hat, const DiagGaussian& post) {
  require_same(eps.size(), eps_hat.size(), "dm_loss");
  std::vector<double> diff(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) diff[i] = eps[i] - eps_hat[i];
  return weighted_norm(diff, post.variances);
}

double pm_loss(const DiagGaussian& post, const DiagGaussian& prior) {
  require_same(post.dim(), prior.dim(), "pm_loss");
  require_positive(post.variances, "pm_loss");
  require_positive(prior.variances, "pm_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < post.dim(); ++i) {
    const double p = prior.variances[i];
    const double q = post.variances[i];
    s += std::log(p / q) + q / p;
  }
  return s;
}

double gaussian_kl(const DiagGaussian& post, const DiagGaussian& prior) {
  return 0.5 * (pm_loss(post, prior) - static_cast<double>(post.dim()));
}

Tensor weighted_norm(const Tensor& x, const Tensor& variances) {
  return ad::sum(ad::div(ad::square(x), variances));
}

Tensor lr_loss(const Tensor& x0, const Tensor& post_var, double alpha_bar_T) {
  return ad::add(ad::scale(weighted_norm(x0, post_var), alpha_bar_T), ad::sum(ad::log(post_var)));
}

Tensor dm_loss(const Tensor& eps, const Tensor& eps_hat, const Tensor& post_var) {
  return weighted_norm(ad::sub(eps, eps_hat), post_var);
}

Tensor pm_loss(const Tensor& post_var, const Tensor& prior_var) {
  const Tensor log_ratio = ad::sub(ad::log(prior_var), ad::log(post_var));
  return ad::sum(ad::add(log_ratio, ad::div(post_var, prior_var)));
}

LossDraws draw_loss_inputs(std::size_t batch, std::size_t length, std::size_t steps, Rng& rng) {
  LossDraws d;
  d.t.resize(batch);
  for (auto& t : d.t) t = rng.index(steps) + 1;
  d.u.resize(batch * length);
  rng.fill_normal(d.u);
  return d;
}

BoundNetworks::BoundNetworks(ad::Tape& tape, const Networks& n, bool trainable) : nets(n) {
  if (n.theta) theta.emplace(tape, n.theta->params(), NoiseEstimator::kPrefix, trainable);
  if (n.psi) psi.emplace(tape, n.psi->params(), PriorNet::kPrefix, trainable);
  if (n.phi) phi.emplace(tape, n.phi->params(), PosteriorNet::kPrefix, trainable);
}

LossGraph simplified_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                          double eta, double lambda, const LossDraws& draws) {
  require_theta(nets);
  if (!nets.psi || !nets.phi) throw Error("joint loss needs both encoders");
  ad::Tape& tape = nets.theta->tape();
  const Inputs in = place_inputs(tape, batch, draws);

  const Tensor post_std = nets.nets.phi->stddev(*nets.phi, in.x0, in.y);
  const Tensor prior_std = nets.nets.psi->stddev(*nets.psi, in.y);
  const Tensor post_var = ad::square(post_std);
  const Tensor prior_var = ad::square(prior_std);

  const Tensor eps = ad::mul(post_std, in.u);
  const Tensor eps_hat = predict_noise(nets, in, eps, draws, sched);

  return finish(lr_loss(in.x0, post_var, sched.alpha_bar_final()),
                dm_loss(eps, eps_hat, post_var), pm_loss(post_var, prior_var), batch.batch, eta,
                lambda);
}

LossGraph simplified_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                          double eta, double lambda, Rng& rng) {
  const LossDraws draws = draw_loss_inputs(batch.batch, batch.length, sched.steps(), rng);
  return simplified_loss(nets, batch, sched, eta, lambda, draws);
}

LossGraph no_posterior_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                            double eta, const LossDraws& draws) {
  require_theta(nets);
  if (!nets.psi) throw Error("no-posterior loss needs the prior encoder");
  ad::Tape& tape = nets.theta->tape();
  const Inputs in = place_inputs(tape, batch, draws);

  const Tensor prior_std = nets.nets.psi->stddev(*nets.psi, in.y);
  const Tensor prior_var = ad::square(prior_std);
  const Tensor eps = ad::mul(prior_std, in.u);
  const Tensor eps_hat = predict_noise(nets, in, eps, draws, sched);

  return finish(lr_loss(in.x0, prior_var, sched.alpha_bar_final()),
                dm_loss(eps, eps_hat, prior_var), tape.scalar(0.0), batch.batch, eta, 0.0);
}

LossGraph standard_prior_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                              const LossDraws& draws) {
  require_theta(nets);
  ad::Tape& tape = nets.theta->tape();
  const Inputs in = place_inputs(tape, batch, draws);
  const Tensor eps_hat = predict_noise(nets, in, in.u, draws, sched);
  const Tensor dm = ad::sum(ad::square(ad::sub(in.u, eps_hat)));
  return finish(tape.scalar(0.0), dm, tape.scalar(0.0), batch.batch, 0.0, 0.0);
}

LossGraph fixed_prior_loss(BoundNetworks& nets, const Batch& batch, const NoiseSchedule& sched,
                           std::span<const double> prior_std, const LossDraws& draws) {
  require_theta(nets);
  ad::Tape& tape = nets.theta->tape();
  const Inputs in = place_inputs(tape, batch, draws);
  require_same(prior_std.size(), batch.batch * batch.length, "fixed prior");
  require_positive(prior_std, "fixed prior");
  const Tensor std_t = tape.constant(in.shape, {prior_std.begin(), prior_std.end()});
  const Tensor var = ad::square(std_t);
  const Tensor eps = ad::mul(std_t, in.u);
  const Tensor eps_hat = predict_noise(nets, in, eps, draws, sched);
  return finish(tape.scalar(0.0), dm_loss(eps, eps_hat, var), tape.scalar(0.0), batch.batch,
                0.0, 0.0);
}

double elbo_lt_term(std::span<const double> x0, const DiagGaussian& post, const NoiseSchedule& sched) {
  const double abar = sched.alpha_bar_final();
  const double d = static_cast<double>(x0.size());
  return 0.5 * abar * weighted_norm(x0, post.variances) - 0.5 * d * (abar + std::log(1.0 - abar));
}

ElboBreakdown assemble_elbo(std::span<const double> x0, const DiagGaussian& post,
                            const DiagGaussian& prior, std::span<const double> dm_per_t,
                            const NoiseSchedule& sched) {
  if (dm_per_t.size() != sched.steps()) throw ShapeError("need one DM value per timestep");
  ElboBreakdown e;
  e.lt = elbo_lt_term(x0, post, sched);
  for (double v : post.variances) e.log_det += 0.5 * std::log(v);
  for (std::size_t t = 1; t <= sched.steps(); ++t) e.dm_sum += sched.gamma(t) * dm_per_t[t - 1];
  e.pm_half = 0.5 * pm_loss(post, prior);
  e.l0_const = 0.5 * static_cast<double>(x0.size()) * std::log(2.0 * std::numbers::pi * sched.beta(1));
  e.total = e.lt + e.log_det + e.dm_sum + e.pm_half + e.l0_const;
  return e;
}

ElboBreakdown exact_elbo(const NoiseEstimator& theta, const PosteriorNet& phi, const PriorNet& psi,
                         std::span<const double> x0, std::span<const double> y,
                         const NoiseSchedule& sched, std::size_t n_mc, Rng& rng) {
  if (n_mc == 0) throw Error("exact_elbo needs at least one Monte-Carlo draw");
  require_same(x0.size(), y.size(), "exact_elbo");
  const std::size_t d = x0.size(), T = sched.steps();
  const DiagGaussian post = encode_posterior(phi, x0, y);
  const DiagGaussian prior = encode_prior(psi, y);

  // All T timesteps of one draw go through the estimator as one batch.
  std::vector<double> y_rep(T * d), t_hat(T);
  for (std::size_t t = 0; t < T; ++t) {
    std::copy(y.begin(), y.end(), y_rep.begin() + static_cast<std::ptrdiff_t>(t * d));
    t_hat[t] = static_cast<double>(t + 1);
  }
  std::vector<double> dm_per_t(T, 0.0), x_t(T * d);
  for (std::size_t m = 0; m < n_mc; ++m) {
    const std::vector<double> eps = sample_diag(post, rng);
    for (std::size_t t = 1; t <= T; ++t) {
      const auto row = forward_sample(x0, eps, t, sched);
      std::copy(row.begin(), row.end(), x_t.begin() + static_cast<std::ptrdiff_t>((t - 1) * d));
    }
    const std::vector<double> eps_hat = theta.evaluate(x_t, y_rep, t_hat, T);
    for (std::size_t t = 0; t < T; ++t) {
      const std::span<const double> row(eps_hat.data() + t * d, d);
      dm_per_t[t] += dm_loss(eps, row, post) / static_cast<double>(n_mc);
    }
  }
  return assemble_elbo(x0, post, prior, dm_per_t, sched);
}

}  // namespace restoregrad
