#include "davt/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace davt {

namespace {
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
}

const TrainingParams& validate_training(const TrainingParams& params) {
  if (!(params.learning_rate > 0.0)) {
    throw std::invalid_argument("TrainingParams: learning_rate must be positive");
  }
  if (params.patience < 1) throw std::invalid_argument("TrainingParams: patience must be positive");
  if (params.patience > params.max_epochs && params.max_epochs > 0) {
    throw std::invalid_argument("TrainingParams: patience must not exceed max_epochs");
  }
  if (params.l1_coeff < 0.0 || params.l2_coeff < 0.0) {
    throw std::invalid_argument("TrainingParams: regularization coefficients must be nonnegative");
  }
  return params;
}

PreparedData prepare_training_data(std::span<const MiniBatch> batches, const TrainSpec& spec) {
  PreparedData out;
  out.obs_start.push_back(0);
  auto add_branch = [&out](const Observation& w, double c) {
    if (out.input_dim == 0) out.input_dim = w.size();
    if (w.size() != out.input_dim) {
      throw std::invalid_argument("prepare_training_data: inconsistent branch input sizes");
    }
    out.inputs.insert(out.inputs.end(), w.data.begin(), w.data.end());
    out.coeff.push_back(c);
  };
  for (const auto& batch : batches) {
    bool unpaired = std::holds_alternative<UnpairedTraining>(spec);
    if (unpaired && batch.groups.size() != batch.observations.size()) {
      throw std::invalid_argument("prepare_training_data: unpaired spec needs group labels");
    }
    for (std::size_t i = 0; i < batch.observations.size(); ++i) {
      const Observation& z = batch.observations[i];
      if (const auto* pair = std::get_if<PairNull>(&spec)) {
        add_branch(pair->t1.apply(z), 1.0);
        add_branch(pair->t2.apply(z), -1.0);
      } else if (const auto* sets = std::get_if<SetsNull>(&spec)) {
        double c1 = 1.0 / static_cast<double>(sets->set1.members.size());
        double c2 = -1.0 / static_cast<double>(sets->set2.members.size());
        for (const auto& t : sets->set1.members) add_branch(t.apply(z), c1);
        for (const auto& t : sets->set2.members) add_branch(t.apply(z), c2);
      } else {
        add_branch(z, batch.groups[i] == 0 ? 1.0 : -1.0);
      }
      out.n_obs += 1;
      out.obs_start.push_back(out.coeff.size());
    }
  }
  return out;
}

double objective_on_prepared(const PayoffModel& model, const PreparedData& data, std::size_t first,
                             std::size_t last, LossVariant variant) {
  if (data.n_obs > 0 && model.input_dim() != data.input_dim) {
    throw std::invalid_argument("objective: model input dim does not match data");
  }
  ModelWorkspace ws;
  double total = 0.0;
  for (std::size_t i = first; i < last; ++i) {
    double acc = 0.0;
    for (std::size_t k = data.obs_start[i]; k < data.obs_start[i + 1]; ++k) {
      std::span<const double> x(data.inputs.data() + k * data.input_dim, data.input_dim);
      if (variant == LossVariant::kPlain) {
        acc += data.coeff[k] * forward_ws(model, x, ws);
      } else {
        double raw = 0.0;
        forward_ws(model, x, ws, &raw);
        acc += data.coeff[k] * raw;
      }
    }
    double payoff = variant == LossVariant::kPlain ? acc : model.q_bound * std::tanh(acc);
    total += std::log1p(payoff);
  }
  return total;
}

GradientBundle gradient_on_prepared(const PayoffModel& model, const PreparedData& data,
                                    std::size_t first, std::size_t last, LossVariant variant,
                                    double l1_coeff, double l2_coeff) {
  if (data.n_obs > 0 && model.input_dim() != data.input_dim) {
    throw std::invalid_argument("gradient: model input dim does not match data");
  }
  GradientBundle g;
  g.values.assign(model.params.size(), 0.0);
  std::vector<ModelWorkspace> wss;  // one per branch slot, activations kept for backprop
  std::vector<double> raws;
  for (std::size_t i = first; i < last; ++i) {
    std::size_t k0 = data.obs_start[i], k1 = data.obs_start[i + 1];
    std::size_t nb = k1 - k0;
    if (wss.size() < nb) wss.resize(nb);
    raws.resize(nb);
    double acc = 0.0;
    for (std::size_t k = k0; k < k1; ++k) {
      std::span<const double> x(data.inputs.data() + k * data.input_dim, data.input_dim);
      double raw = 0.0;
      double gv = forward_ws(model, x, wss[k - k0], &raw);
      raws[k - k0] = raw;
      acc += data.coeff[k] * (variant == LossVariant::kPlain ? gv : raw);
    }
    if (variant == LossVariant::kPlain) {
      double denom = 1.0 + acc;
      for (std::size_t k = k0; k < k1; ++k) {
        std::span<const double> x(data.inputs.data() + k * data.input_dim, data.input_dim);
        double th = std::tanh(0.5 * raws[k - k0]);
        double dsquash = 0.5 * model.q_bound * (1.0 - th * th);
        double seed = data.coeff[k] * dsquash / denom;
        backward_raw_ws(model, x, seed, wss[k - k0], g.values);
      }
    } else {
      double th = std::tanh(acc);
      double payoff = model.q_bound * th;
      double outer = model.q_bound * (1.0 - th * th) / (1.0 + payoff);
      for (std::size_t k = k0; k < k1; ++k) {
        std::span<const double> x(data.inputs.data() + k * data.input_dim, data.input_dim);
        double seed = data.coeff[k] * outer;
        backward_raw_ws(model, x, seed, wss[k - k0], g.values);
      }
    }
  }
  if (l1_coeff > 0.0 || l2_coeff > 0.0) {
    for (const auto& v : layer_views(model.layer_dims)) {
      for (std::size_t idx = v.w_offset; idx < v.b_offset; ++idx) {
        double w = model.params[idx];
        double sgn = w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
        g.values[idx] -= l1_coeff * sgn + 2.0 * l2_coeff * w;
      }
    }
  }
  return g;
}

namespace {

PreparedData prepare_observations(std::span<const Observation> data, const Operator& t1,
                                  const Operator& t2) {
  MiniBatch b;
  b.index = 1;
  b.observations.assign(data.begin(), data.end());
  TrainSpec spec = PairNull{t1, t2};
  if (data.empty()) return PreparedData{};
  return prepare_training_data(std::span<const MiniBatch>(&b, 1), spec);
}

}  // namespace

double batch_objective(const PayoffModel& model, std::span<const Observation> data,
                       const Operator& t1, const Operator& t2, LossVariant variant) {
  PreparedData prepared = prepare_observations(data, t1, t2);
  return objective_on_prepared(model, prepared, 0, prepared.n_obs, variant);
}

GradientBundle objective_gradient(const PayoffModel& model, std::span<const Observation> data,
                                  const Operator& t1, const Operator& t2, LossVariant variant,
                                  double l1_coeff, double l2_coeff) {
  PreparedData prepared = prepare_observations(data, t1, t2);
  return gradient_on_prepared(model, prepared, 0, prepared.n_obs, variant, l1_coeff, l2_coeff);
}

void adam_step(PayoffModel& model, const GradientBundle& grads, AdamState& state, double lr) {
  if (grads.values.size() != model.params.size()) {
    throw std::invalid_argument("adam_step: gradient layout does not match parameters");
  }
  if (state.m.empty()) {
    state.m.assign(model.params.size(), 0.0);
    state.v.assign(model.params.size(), 0.0);
  }
  if (state.m.size() != model.params.size()) {
    throw std::invalid_argument("adam_step: moment arrays do not match parameters");
  }
  state.step += 1;
  double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    double gi = grads.values[i];
    state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * gi;
    state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * gi * gi;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    model.params[i] += lr * mhat / (std::sqrt(vhat) + kAdamEps);
  }
}

namespace {

bool params_finite(const PayoffModel& model) {
  for (double p : model.params) {
    if (!std::isfinite(p)) return false;
  }
  return true;
}

}  // namespace

UpdateResult update_model(const PayoffModel& model, std::span<const MiniBatch> accumulated,
                          const TrainSpec& spec, const TrainingParams& params,
                          const std::function<void(std::size_t, double)>& epoch_observer) {
  validate_training(params);
  UpdateResult result{model, false, 0};
  if (accumulated.empty() || params.max_epochs == 0) return result;

  PreparedData prepared = prepare_training_data(accumulated, spec);
  bool has_validation = accumulated.size() >= 2;
  std::size_t n_val = has_validation ? accumulated.back().observations.size() : 0;
  std::size_t n_train = prepared.n_obs - n_val;

  PayoffModel current = model;
  AdamState adam;
  PayoffModel best = current;
  double best_val = has_validation
                        ? objective_on_prepared(current, prepared, n_train, prepared.n_obs,
                                                params.loss_variant)
                        : 0.0;
  std::size_t bad_epochs = 0;
  PayoffModel last_finite = current;

  for (std::size_t epoch = 1; epoch <= params.max_epochs; ++epoch) {
    GradientBundle grad = gradient_on_prepared(current, prepared, 0, n_train, params.loss_variant,
                                               params.l1_coeff, params.l2_coeff);
    adam_step(current, grad, adam, params.learning_rate);
    result.epochs_run = epoch;
    if (!params_finite(current)) {
      current = last_finite;
      result.divergence_warning = true;
      break;
    }
    last_finite = current;
    if (has_validation) {
      double val = objective_on_prepared(current, prepared, n_train, prepared.n_obs,
                                         params.loss_variant);
      if (epoch_observer) epoch_observer(epoch, val);
      if (val > best_val) {
        best_val = val;
        best = current;
        bad_epochs = 0;
      } else if (++bad_epochs >= params.patience) {
        break;
      }
    }
  }

  result.model = has_validation ? best : current;
  return result;
}

double growth_rate_estimate(const PayoffModel& model, std::span<const Observation> holdout,
                            const Operator& t1, const Operator& t2) {
  if (holdout.empty()) throw std::invalid_argument("growth_rate_estimate: empty holdout");
  double total = 0.0;
  for (const auto& z : holdout) {
    total += std::log1p(payoff_difference(model, z, t1, t2));
  }
  return total / static_cast<double>(holdout.size());
}

double growth_threshold(double q_bound, std::size_t n_samples) {
  if (!(q_bound > 0.0 && q_bound < 0.5)) {
    throw std::invalid_argument("growth_threshold: q_bound must lie in (0, 0.5)");
  }
  if (n_samples == 0) throw std::invalid_argument("growth_threshold: need at least one sample");
  double c = 2.0 * std::log(1.0 / (1.0 - 2.0 * q_bound));
  double n = static_cast<double>(n_samples);
  return 2.0 * c * std::sqrt(std::log(n) / n);
}

}  // namespace davt
