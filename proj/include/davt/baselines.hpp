#pragma once

#include <optional>
#include <span>
#include <vector>

#include "davt/core.hpp"
#include "davt/engine.hpp"
#include "davt/rng.hpp"

namespace davt {

// Batch-wise online Newton step betting on a fair [-1, 1]-valued payoff.
struct OnsState {
  double lambda = 0.0;   // bet fraction, clipped to [-1/2, 1/2]
  double a_accum = 1.0;  // curvature accumulator, seeded at 1
  double wealth = 1.0;
  double log_wealth = 0.0;
};

// Wealth update then the ONS recurrence, ascending log-wealth:
//   g = z / (1 + lambda * z);  a += g^2;
//   lambda = clip(lambda + (2 / (2 - ln 3)) * g / a, [-1/2, 1/2]).
void ons_update(OnsState& state, double z);

// Seq-IT style sequential test: per batch, the payoff fed to ONS is the batch
// mean of samplewise payoff differences under the spec's pair null; the model
// is retrained exactly as in the engine.
TrialRecord seqit_run(std::span<const MiniBatch> stream, const SequentialTestSpec& spec);

struct KernelSpec {
  std::optional<double> bandwidth;  // nullopt = median heuristic
  std::size_t permutations = 200;
};

double rbf_kernel(std::span<const double> x, std::span<const double> y, double bandwidth);

// Median of pairwise Euclidean distances over the pooled sample; falls back
// to 1 when the median is zero.
double median_heuristic_bandwidth(std::span<const Observation> xs,
                                  std::span<const Observation> ys);

// U-statistic estimator of MMD^2 for equal-size samples: the i != j average
// of k(x_i, x_j) + k(y_i, y_j) - k(x_i, y_j) - k(x_j, y_i).
double mmd2_unbiased(std::span<const Observation> xs, std::span<const Observation> ys,
                     const KernelSpec& kernel);

// p = (1 + #{permuted statistic >= observed}) / (1 + permutations), with
// label permutations of the pooled sample drawn from rng.
double permutation_pvalue(std::span<const Observation> xs, std::span<const Observation> ys,
                          const KernelSpec& kernel, Rng& rng);

}  // namespace davt
