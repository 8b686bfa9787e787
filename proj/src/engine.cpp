#include "davt/engine.hpp"

#include <cmath>
#include <stdexcept>

namespace davt {

void validate_null_spec(const NullSpec& spec) {
  if (const auto* sets = std::get_if<SetsNull>(&spec)) {
    check_disjoint(sets->set1, sets->set2);
  }
}

TrainSpec to_train_spec(const NullSpec& spec) {
  if (const auto* pair = std::get_if<PairNull>(&spec)) return *pair;
  if (const auto* sets = std::get_if<SetsNull>(&spec)) return *sets;
  return UnpairedTraining{};
}

void validate_spec(const SequentialTestSpec& spec) {
  validate_config(spec.config);
  validate_training(spec.training);
  validate_null_spec(spec.null_spec);
  spec.model_init.validate();
  if (spec.model_init.q_bound != spec.config.q_bound) {
    throw std::invalid_argument("SequentialTestSpec: model q_bound differs from config q_bound");
  }
}

EngineState make_engine_state(const SequentialTestSpec& spec) {
  validate_spec(spec);
  EngineState state;
  state.model = spec.model_init;
  return state;
}

MiniBatch pair_consecutive(const MiniBatch& batch) {
  if (batch.observations.empty() || batch.observations.front().tag != Tag::kPair) {
    throw std::invalid_argument("pair_consecutive: expects a batch of pair observations");
  }
  MiniBatch out;
  out.index = batch.index;
  std::size_t n = batch.observations.size() / 2;  // trailing odd element dropped
  out.observations.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Observation& a = batch.observations[2 * i];
    const Observation& b = batch.observations[2 * i + 1];
    Observation z;
    z.tag = Tag::kPairOfPairs;
    z.shape.reserve(a.shape.size() + 1);
    z.shape.push_back(2);
    z.shape.insert(z.shape.end(), a.shape.begin(), a.shape.end());
    z.data.reserve(a.data.size() * 2);
    z.data.insert(z.data.end(), a.data.begin(), a.data.end());
    z.data.insert(z.data.end(), b.data.begin(), b.data.end());
    out.observations.push_back(std::move(z));
  }
  if (out.observations.empty()) {
    throw std::invalid_argument("pair_consecutive: batch too small to form a pair");
  }
  return out;
}

bool null_accepts(const NullSpec& spec, Tag tag, const std::vector<std::size_t>& shape) {
  if (const auto* pair = std::get_if<PairNull>(&spec)) {
    return pair->t1.accepts(tag, shape) && pair->t2.accepts(tag, shape);
  }
  if (const auto* sets = std::get_if<SetsNull>(&spec)) {
    for (const auto& t : sets->set1.members) {
      if (!t.accepts(tag, shape)) return false;
    }
    for (const auto& t : sets->set2.members) {
      if (!t.accepts(tag, shape)) return false;
    }
    return true;
  }
  return true;  // unpaired nulls feed observations to the model directly
}

MiniBatch adapt_batch(const MiniBatch& batch, const NullSpec& spec) {
  batch.validate();
  const Observation& first = batch.observations.front();
  if (null_accepts(spec, first.tag, first.shape)) return batch;
  if (first.tag == Tag::kPair) {
    MiniBatch paired = pair_consecutive(batch);
    const Observation& p = paired.observations.front();
    if (null_accepts(spec, p.tag, p.shape)) return paired;
  }
  throw std::invalid_argument("adapt_batch: null operators do not accept the stream observations");
}

std::vector<double> batch_payoffs(const MiniBatch& batch, const PayoffModel& model,
                                  const NullSpec& spec) {
  std::vector<double> payoffs;
  payoffs.reserve(batch.observations.size());
  if (const auto* pair = std::get_if<PairNull>(&spec)) {
    for (const auto& z : batch.observations) {
      payoffs.push_back(payoff_difference(model, z, pair->t1, pair->t2));
    }
  } else if (const auto* sets = std::get_if<SetsNull>(&spec)) {
    for (const auto& z : batch.observations) {
      payoffs.push_back(averaged_payoff(model, z, sets->set1, sets->set2));
    }
  } else {
    throw std::invalid_argument("batch_payoffs: unpaired nulls have no per-observation payoff");
  }
  return payoffs;
}

double unpaired_score(std::span<const Observation> xs, std::span<const Observation> ys,
                      const PayoffModel& model, UnpairedMode mode) {
  if (xs.empty() || ys.empty()) throw std::invalid_argument("unpaired_score: empty group");
  double sx = 0.0, sy = 0.0;
  for (const auto& z : xs) sx += forward(model, z.data);
  for (const auto& z : ys) sy += forward(model, z.data);
  double score;
  if (mode == UnpairedMode::kMeanDifference) {
    score = 1.0 + sx / static_cast<double>(xs.size()) - sy / static_cast<double>(ys.size());
  } else {
    // sigma-difference with sigma = tanh (odd, increasing, range (-1, 1))
    score = 1.0 + std::tanh(sx - sy);
  }
  if (!(score > 0.0)) throw std::runtime_error("unpaired_score: non-positive score");
  return score;
}

double compute_score(const MiniBatch& batch, const PayoffModel& model, const NullSpec& spec,
                     ScoreMode mode) {
  if (const auto* unpaired = std::get_if<UnpairedNull>(&spec)) {
    if (batch.groups.size() != batch.observations.size()) {
      throw std::invalid_argument("compute_score: unpaired null needs group labels");
    }
    std::vector<Observation> xs, ys;
    for (std::size_t i = 0; i < batch.observations.size(); ++i) {
      (batch.groups[i] == 0 ? xs : ys).push_back(batch.observations[i]);
    }
    return unpaired_score(xs, ys, model, unpaired->mode);
  }
  std::vector<double> payoffs = batch_payoffs(batch, model, spec);
  double score;
  if (mode == ScoreMode::kProduct) {
    score = 1.0;
    for (double p : payoffs) score *= 1.0 + p;
  } else {
    double mean = 0.0;
    for (double p : payoffs) mean += p;
    score = 1.0 + mean / static_cast<double>(payoffs.size());
  }
  if (!(score > 0.0)) throw std::runtime_error("compute_score: non-positive score");
  return score;
}

namespace {

double diag_growth_estimate(const MiniBatch& batch, const PayoffModel& model, const NullSpec& spec,
                            double score) {
  if (std::holds_alternative<UnpairedNull>(spec)) {
    return std::log(score) / static_cast<double>(batch.observations.size());
  }
  std::vector<double> payoffs = batch_payoffs(batch, model, spec);
  double acc = 0.0;
  for (double p : payoffs) acc += std::log1p(p);
  return acc / static_cast<double>(payoffs.size());
}

}  // namespace

void step(EngineState& state, const MiniBatch& batch, const SequentialTestSpec& spec) {
  if (state.wealth.stopped) throw std::logic_error("step: engine already stopped");
  MiniBatch eff = adapt_batch(batch, spec.null_spec);
  if (eff.index != state.wealth.t + 1) {
    throw std::invalid_argument("step: out-of-order batch index");
  }
  double score = compute_score(eff, state.model, spec.null_spec, spec.config.score_mode);
  double estimate = diag_growth_estimate(eff, state.model, spec.null_spec, score);
  state.raw_samples_seen += batch.observations.size();
  state.wealth.apply_score(score, std::log(threshold(spec.config)));
  state.accumulated.push_back(std::move(eff));
  state.diagnostics.push_back({state.wealth.t, score, estimate,
                               growth_threshold(spec.config.q_bound, state.raw_samples_seen)});
  if (!state.wealth.stopped) {
    UpdateResult res = update_model(state.model, state.accumulated, to_train_spec(spec.null_spec),
                                    spec.training);
    state.model = std::move(res.model);
    state.divergence_warning = state.divergence_warning || res.divergence_warning;
  }
}

namespace {

TrialRecord run_loop(std::span<const MiniBatch> stream, const SequentialTestSpec& spec,
                     bool retrain) {
  if (stream.empty()) throw std::invalid_argument("run: empty stream");
  EngineState state = make_engine_state(spec);
  TrialRecord record;
  std::size_t limit = std::min(stream.size(), spec.config.t_max);
  for (std::size_t i = 0; i < limit; ++i) {
    if (retrain) {
      step(state, stream[i], spec);
    } else {
      // oracle path: identical bookkeeping, the model is never retrained
      MiniBatch eff = adapt_batch(stream[i], spec.null_spec);
      if (eff.index != state.wealth.t + 1) {
        throw std::invalid_argument("run_oracle: out-of-order batch index");
      }
      double score = compute_score(eff, state.model, spec.null_spec, spec.config.score_mode);
      double estimate = diag_growth_estimate(eff, state.model, spec.null_spec, score);
      state.raw_samples_seen += stream[i].observations.size();
      state.wealth.apply_score(score, std::log(threshold(spec.config)));
      state.diagnostics.push_back({state.wealth.t, score, estimate,
                                   growth_threshold(spec.config.q_bound, state.raw_samples_seen)});
    }
    record.trajectory.emplace_back(state.wealth.t, state.wealth.log_wealth);
    if (state.wealth.stopped) break;
  }
  if (state.wealth.stopped) {
    record.stopping_time = state.wealth.t;
    record.decision = Decision::kReject;
  }
  record.samples_consumed = state.raw_samples_seen;
  record.diagnostics = std::move(state.diagnostics);
  record.divergence_warning = state.divergence_warning;
  record.validate();
  return record;
}

}  // namespace

TrialRecord run_sequential(std::span<const MiniBatch> stream, const SequentialTestSpec& spec) {
  return run_loop(stream, spec, true);
}

TrialRecord run_oracle(std::span<const MiniBatch> stream, const PayoffModel& model_star,
                       const TestConfig& config, const NullSpec& null_spec) {
  SequentialTestSpec spec;
  spec.config = config;
  spec.null_spec = null_spec;
  spec.model_init = model_star;
  return run_loop(stream, spec, false);
}

std::pair<EValue, Decision> batch_evalue_test(std::span<const Observation> data,
                                              const SequentialTestSpec& spec, double alpha) {
  if (data.size() < 2) throw std::invalid_argument("batch_evalue_test: need at least 2 observations");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("batch_evalue_test: bad alpha");
  validate_null_spec(spec.null_spec);
  if (std::holds_alternative<UnpairedNull>(spec.null_spec)) {
    throw std::invalid_argument("batch_evalue_test: unpaired nulls are not supported");
  }

  std::size_t n = data.size();
  std::size_t n_train = (n + 1) / 2;  // odd n: training half gets the extra observation

  // The training half is one batch: a pure empirical maximization over D1,
  // with the epoch budget as the only stopping rule.
  MiniBatch b1;
  b1.index = 1;
  b1.observations.assign(data.begin(), data.begin() + n_train);
  std::vector<MiniBatch> batches{std::move(b1)};
  UpdateResult trained = update_model(spec.model_init, batches, to_train_spec(spec.null_spec),
                                      spec.training);

  MiniBatch eval;
  eval.index = 1;
  eval.observations.assign(data.begin() + n_train, data.end());
  std::vector<double> payoffs = batch_payoffs(eval, trained.model, spec.null_spec);
  double e = 1.0;
  for (double p : payoffs) e *= 1.0 + p;
  Decision d = e >= 1.0 / alpha ? Decision::kReject : Decision::kContinue;
  return {EValue{e}, d};
}

EValue combine_evalues(EValue e1, EValue e2) {
  if (e1.value < 0.0 || e2.value < 0.0) {
    throw std::invalid_argument("combine_evalues: e-values must be nonnegative");
  }
  return EValue{e1.value * e2.value};
}

}  // namespace davt
