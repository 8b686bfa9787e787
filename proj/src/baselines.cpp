#include "davt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace davt {

void ons_update(OnsState& state, double z) {
  if (!(std::abs(z) <= 1.0)) throw std::invalid_argument("ons_update: |z| must be <= 1");
  double inc = 1.0 + state.lambda * z;
  state.log_wealth += std::log(inc);
  state.wealth = std::exp(state.log_wealth);
  double g = z / inc;
  state.a_accum += g * g;
  double step_scale = 2.0 / (2.0 - std::log(3.0));
  state.lambda = std::clamp(state.lambda + step_scale * g / state.a_accum, -0.5, 0.5);
}

TrialRecord seqit_run(std::span<const MiniBatch> stream, const SequentialTestSpec& spec) {
  if (stream.empty()) throw std::invalid_argument("seqit_run: empty stream");
  validate_spec(spec);
  const auto* pair = std::get_if<PairNull>(&spec.null_spec);
  if (!pair) throw std::invalid_argument("seqit_run: requires a paired two-sample null");

  OnsState ons;
  PayoffModel model = spec.model_init;
  std::vector<MiniBatch> accumulated;
  double log_threshold = std::log(threshold(spec.config));
  TrialRecord record;
  bool stopped = false;
  std::size_t raw_seen = 0;
  std::size_t limit = std::min(stream.size(), spec.config.t_max);
  for (std::size_t i = 0; i < limit; ++i) {
    MiniBatch eff = adapt_batch(stream[i], spec.null_spec);
    std::vector<double> payoffs = batch_payoffs(eff, model, spec.null_spec);
    double z = 0.0;
    for (double p : payoffs) z += p;
    z /= static_cast<double>(payoffs.size());  // |z| <= 2q < 1
    double lambda_used = ons.lambda;
    ons_update(ons, z);
    raw_seen += stream[i].observations.size();
    double score = 1.0 + lambda_used * z;
    record.trajectory.emplace_back(i + 1, ons.log_wealth);
    record.diagnostics.push_back({i + 1, score,
                                  std::log(score) / static_cast<double>(payoffs.size()),
                                  growth_threshold(spec.config.q_bound, raw_seen)});
    if (ons.log_wealth >= log_threshold) {
      stopped = true;
      record.stopping_time = i + 1;
      record.decision = Decision::kReject;
      break;
    }
    accumulated.push_back(std::move(eff));
    UpdateResult res = update_model(model, accumulated, to_train_spec(spec.null_spec),
                                    spec.training);
    model = std::move(res.model);
    record.divergence_warning = record.divergence_warning || res.divergence_warning;
  }
  (void)stopped;
  record.samples_consumed = raw_seen;
  record.validate();
  return record;
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double bandwidth) {
  if (x.size() != y.size()) throw std::invalid_argument("rbf_kernel: dimension mismatch");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("rbf_kernel: bandwidth must be positive");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * bandwidth * bandwidth));
}

double median_heuristic_bandwidth(std::span<const Observation> xs,
                                  std::span<const Observation> ys) {
  std::vector<const Observation*> pooled;
  pooled.reserve(xs.size() + ys.size());
  for (const auto& z : xs) pooled.push_back(&z);
  for (const auto& z : ys) pooled.push_back(&z);
  std::vector<double> dists;
  dists.reserve(pooled.size() * (pooled.size() - 1) / 2);
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = i + 1; j < pooled.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < pooled[i]->data.size(); ++k) {
        double d = pooled[i]->data[k] - pooled[j]->data[k];
        d2 += d * d;
      }
      dists.push_back(std::sqrt(d2));
    }
  }
  if (dists.empty()) return 1.0;
  std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + mid, dists.end());
  double med = dists[mid];
  return med > 0.0 ? med : 1.0;
}

namespace {

double mmd2_from_pointers(const std::vector<const Observation*>& xs,
                          const std::vector<const Observation*>& ys, double bw) {
  std::size_t n = xs.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      acc += rbf_kernel(xs[i]->data, xs[j]->data, bw);
      acc += rbf_kernel(ys[i]->data, ys[j]->data, bw);
      acc -= rbf_kernel(xs[i]->data, ys[j]->data, bw);
      acc -= rbf_kernel(xs[j]->data, ys[i]->data, bw);
    }
  }
  return acc / (static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace

double mmd2_unbiased(std::span<const Observation> xs, std::span<const Observation> ys,
                     const KernelSpec& kernel) {
  if (xs.size() != ys.size()) throw std::invalid_argument("mmd2_unbiased: sample sizes must match");
  if (xs.size() < 2) throw std::invalid_argument("mmd2_unbiased: need at least 2 points per sample");
  double bw = kernel.bandwidth ? *kernel.bandwidth : median_heuristic_bandwidth(xs, ys);
  std::vector<const Observation*> xp, yp;
  for (const auto& z : xs) xp.push_back(&z);
  for (const auto& z : ys) yp.push_back(&z);
  return mmd2_from_pointers(xp, yp, bw);
}

double permutation_pvalue(std::span<const Observation> xs, std::span<const Observation> ys,
                          const KernelSpec& kernel, Rng& rng) {
  if (kernel.permutations < 99) {
    throw std::invalid_argument("permutation_pvalue: need at least 99 permutations");
  }
  if (xs.size() != ys.size()) throw std::invalid_argument("permutation_pvalue: size mismatch");
  std::size_t n = xs.size();
  // Bandwidth is fixed from the observed pooled sample, once per invocation.
  double bw = kernel.bandwidth ? *kernel.bandwidth : median_heuristic_bandwidth(xs, ys);

  std::vector<const Observation*> pooled;
  pooled.reserve(2 * n);
  for (const auto& z : xs) pooled.push_back(&z);
  for (const auto& z : ys) pooled.push_back(&z);

  std::vector<const Observation*> px(pooled.begin(), pooled.begin() + n);
  std::vector<const Observation*> py(pooled.begin() + n, pooled.end());
  double observed = mmd2_from_pointers(px, py, bw);

  std::size_t count = 0;
  std::vector<const Observation*> shuffled = pooled;
  for (std::size_t p = 0; p < kernel.permutations; ++p) {
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      std::size_t j = rng.next_index(i);
      std::swap(shuffled[i - 1], shuffled[j]);
    }
    px.assign(shuffled.begin(), shuffled.begin() + n);
    py.assign(shuffled.begin() + n, shuffled.end());
    if (mmd2_from_pointers(px, py, bw) >= observed) ++count;
  }
  return static_cast<double>(1 + count) / static_cast<double>(1 + kernel.permutations);
}

}  // namespace davt
