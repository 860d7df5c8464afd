#include "restoregrad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "restoregrad/error.hpp"
#include "restoregrad/objective.hpp"
#include "restoregrad/rng.hpp"

namespace restoregrad {

namespace {

double evaluate(const StoreLoss& loss) {
  ad::Tape tape;
  return loss(tape, false).item();
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t max, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n <= max) return idx;
  for (std::size_t i = 0; i < max; ++i) std::swap(idx[i], idx[i + rng.index(n - i)]);
  idx.resize(max);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void randomize(ParamStore& store, double scale, Rng& rng) {
  for (ParamArray& a : store.arrays())
    for (double& v : a.values) v = scale * rng.normal();
}

}  // namespace

FdReport finite_diff_check(const std::vector<std::pair<std::string, ParamStore*>>& stores,
                           const StoreLoss& loss, const FdOptions& opts) {
  ad::Gradients grads;
  {
    ad::Tape tape;
    const ad::Tensor l = loss(tape, true);
    grads = tape.backward(l);
  }
  const double base = evaluate(loss);
  if (evaluate(loss) != base) throw Error("finite_diff_check: loss is not deterministic");

  FdReport rep;
  Rng rng(opts.seed, Stream::kTest, 0);
  for (const auto& [prefix, store] : stores) {
    for (ParamArray& a : store->arrays()) {
      const std::string key = prefix + "/" + a.name;
      const auto it = grads.find(key);
      if (it == grads.end()) throw Error("finite_diff_check: no gradient for " + key);
      for (std::size_t i : pick_coords(a.values.size(), opts.max_coords_per_array, rng)) {
        const double orig = a.values[i];
        a.values[i] = orig + opts.step;
        const double up = evaluate(loss);
        a.values[i] = orig - opts.step;
        const double down = evaluate(loss);
        a.values[i] = orig;
        const double numeric = (up - down) / (2.0 * opts.step);
        const double analytic = it->second[i];
        const double scale = std::max(std::abs(analytic), std::abs(numeric));
        const double diff = std::abs(analytic - numeric);
        const double err = scale < opts.abs_floor ? diff : diff / scale;
        ++rep.checked;
        if (rep.worst.empty() || err > rep.max_error) {
          rep.max_error = err;
          rep.worst = key + "[" + std::to_string(i) + "]";
          rep.analytic = analytic;
          rep.numeric = numeric;
        }
      }
    }
  }
  return rep;
}

std::vector<FdReport> run_gradcheck_suite(std::size_t d, std::size_t T, std::uint64_t seed,
                                          const FdOptions& opts) {
  if (d < 2 || T < 1) throw Error("gradcheck needs d >= 2 and T >= 1");
  const NetConfig net;
  NoiseEstimator theta(net, seed);
  PriorNet psi(net, seed);
  PosteriorNet phi(net, seed);
  Rng rng(seed, Stream::kTest, 1);
  randomize(theta.params(), 0.1, rng);
  randomize(psi.params(), 0.1, rng);
  randomize(phi.params(), 0.1, rng);

  const NoiseSchedule sched = linear_schedule(T, 1e-4, 0.035);
  Batch batch;
  batch.batch = 2;
  batch.length = d;
  batch.x0.resize(batch.batch * d);
  batch.y.resize(batch.batch * d);
  rng.fill_normal(batch.x0);
  rng.fill_normal(batch.y);
  const LossDraws draws = draw_loss_inputs(batch.batch, d, T, rng);

  const std::vector<std::pair<std::string, ParamStore*>> all = {
      {NoiseEstimator::kPrefix, &theta.params()},
      {PriorNet::kPrefix, &psi.params()},
      {PosteriorNet::kPrefix, &phi.params()}};
  const std::vector<std::pair<std::string, ParamStore*>> no_phi = {all[0], all[1]};

  auto joint = [&](int which) {
    return [&, which](ad::Tape& tape, bool trainable) {
      BoundNetworks nets(tape, {&theta, &psi, &phi}, trainable);
      const LossGraph g = simplified_loss(nets, batch, sched, 0.1, 0.5, draws);
      switch (which) {
        case 0: return g.lr;
        case 1: return g.dm;
        case 2: return g.pm;
        default: return g.total;
      }
    };
  };
  StoreLoss ablation = [&](ad::Tape& tape, bool trainable) {
    BoundNetworks nets(tape, {&theta, &psi, nullptr}, trainable);
    return no_posterior_loss(nets, batch, sched, 0.1, draws).total;
  };

  std::vector<FdReport> out;
  const char* names[] = {"latent_regularization", "denoising_matching", "prior_matching", "joint_total"};
  for (int k = 0; k < 4; ++k) {
    FdReport r = finite_diff_check(all, joint(k), opts);
    r.name = names[k];
    out.push_back(r);
  }
  FdReport r = finite_diff_check(no_phi, ablation, opts);
  r.name = "no_posterior_total";
  out.push_back(r);
  return out;
}

}  // namespace restoregrad
