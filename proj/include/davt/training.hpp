#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include "davt/core.hpp"
#include "davt/model.hpp"
#include "davt/operators.hpp"

namespace davt {

enum class LossVariant { kPlain, kSigma };

struct TrainingParams {
  double learning_rate = 5e-4;
  std::size_t max_epochs = 150;
  std::size_t patience = 10;
  LossVariant loss_variant = LossVariant::kPlain;
  double l1_coeff = 0.0;
  double l2_coeff = 0.0;
  std::uint64_t rng_seed = 0;
};

const TrainingParams& validate_training(const TrainingParams& params);

struct GradientBundle {
  std::vector<double> values;  // same layout as PayoffModel::params
};

struct AdamState {
  std::vector<double> m, v;
  std::size_t step = 0;
};

// Training-side view of a null specification. Unpaired streams train a signed
// per-observation payoff (+g for group 0, -g for group 1) derived from the
// batch group labels.
struct UnpairedTraining {};
using TrainSpec = std::variant<PairNull, SetsNull, UnpairedTraining>;

// Every objective term reduces to log(1 + f(sum_k c_k * branch_k(z))): each
// observation expands into operator-transformed branch inputs with fixed
// coefficients. Transforms are applied once here, not per epoch.
struct PreparedData {
  std::size_t input_dim = 0;
  std::size_t n_obs = 0;
  std::vector<double> inputs;          // branch inputs, each input_dim wide
  std::vector<double> coeff;           // one coefficient per branch
  std::vector<std::size_t> obs_start;  // n_obs + 1 branch offsets
};

PreparedData prepare_training_data(std::span<const MiniBatch> batches, const TrainSpec& spec);

// Sum over observations in [first, last) of the per-observation log term.
// plain: log(1 + sum_k c_k * g(x_k)); sigma: log(1 + q * tanh(sum_k c_k * raw(x_k))).
double objective_on_prepared(const PayoffModel& model, const PreparedData& data, std::size_t first,
                             std::size_t last, LossVariant variant);

// Analytic gradient of [objective - l1 * sum|w| - l2 * sum w^2] over the same
// range; penalties apply to weights only.
GradientBundle gradient_on_prepared(const PayoffModel& model, const PreparedData& data,
                                    std::size_t first, std::size_t last, LossVariant variant,
                                    double l1_coeff, double l2_coeff);

// Convenience wrappers for the two-operator form.
double batch_objective(const PayoffModel& model, std::span<const Observation> data,
                       const Operator& t1, const Operator& t2, LossVariant variant);
GradientBundle objective_gradient(const PayoffModel& model, std::span<const Observation> data,
                                  const Operator& t1, const Operator& t2, LossVariant variant,
                                  double l1_coeff = 0.0, double l2_coeff = 0.0);

// Ascent step: theta += lr * m_hat / (sqrt(v_hat) + eps), beta1 = 0.9,
// beta2 = 0.999, eps = 1e-8.
void adam_step(PayoffModel& model, const GradientBundle& grads, AdamState& state, double lr);

struct UpdateResult {
  PayoffModel model;
  bool divergence_warning = false;
  std::size_t epochs_run = 0;
};

// Epoch-wise full-gradient Adam ascent on all batches but the last, early
// stopped on the last batch's objective (patience consecutive non-improving
// epochs); returns the best-validation snapshot, counting the entry model as
// epoch 0. A single batch trains without early stopping. Any non-finite
// parameter restores the last finite snapshot and sets the warning flag.
UpdateResult update_model(const PayoffModel& model, std::span<const MiniBatch> accumulated,
                          const TrainSpec& spec, const TrainingParams& params,
                          const std::function<void(std::size_t, double)>& epoch_observer = {});

// Mean of log(1 + payoff_difference) over a holdout set: the empirical growth
// rate E[log(1 + g~_theta(Z))].
double growth_rate_estimate(const PayoffModel& model, std::span<const Observation> holdout,
                            const Operator& t1, const Operator& t2);

// Comparison level 2c * sqrt(log(n) / n) with c = 2 * log(1 / (1 - 2q)); the
// sequential test's consistency condition asks the growth rate to clear this.
double growth_threshold(double q_bound, std::size_t n_samples);

}  // namespace davt
