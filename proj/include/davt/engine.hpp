#pragma once

#include <span>
#include <variant>
#include <vector>

#include "davt/core.hpp"
#include "davt/model.hpp"
#include "davt/operators.hpp"
#include "davt/training.hpp"

namespace davt {

enum class UnpairedMode { kMeanDifference, kSigmaDifference };

struct UnpairedNull {
  UnpairedMode mode = UnpairedMode::kMeanDifference;
};

using NullSpec = std::variant<PairNull, SetsNull, UnpairedNull>;

void validate_null_spec(const NullSpec& spec);
TrainSpec to_train_spec(const NullSpec& spec);

// Whether every operator in the null accepts observations of this tag/shape.
bool null_accepts(const NullSpec& spec, Tag tag, const std::vector<std::size_t>& shape);

struct SequentialTestSpec {
  TestConfig config;
  NullSpec null_spec;
  TrainingParams training;
  PayoffModel model_init;
};

void validate_spec(const SequentialTestSpec& spec);

struct EngineState {
  WealthState wealth;
  PayoffModel model;
  std::vector<MiniBatch> accumulated;  // D_t, one entry per step
  std::vector<DiagnosticPoint> diagnostics;
  bool divergence_warning = false;
  std::size_t raw_samples_seen = 0;
};

EngineState make_engine_state(const SequentialTestSpec& spec);

// Non-overlapping pairing of consecutive pair observations into
// pair-of-pairs; a trailing odd element is dropped.
MiniBatch pair_consecutive(const MiniBatch& batch);

// Re-shapes a stream batch to what the null's operators accept (currently:
// consecutive pairing for cross-pair nulls); identity when already accepted.
MiniBatch adapt_batch(const MiniBatch& batch, const NullSpec& spec);

// Per-observation payoffs under a pair or sets null (not defined for
// unpaired nulls, which score a batch as a whole).
std::vector<double> batch_payoffs(const MiniBatch& batch, const PayoffModel& model,
                                  const NullSpec& spec);

// Betting score S_t. Product mode multiplies (1 + payoff_j); average mode is
// 1 + mean_j payoff_j. The model must not have been trained on this batch.
double compute_score(const MiniBatch& batch, const PayoffModel& model, const NullSpec& spec,
                     ScoreMode mode);

// Appendix-style unpaired betting scores over two groups.
double unpaired_score(std::span<const Observation> xs, std::span<const Observation> ys,
                      const PayoffModel& model, UnpairedMode mode);

// One round: score with the pre-update model, update wealth, check the stop,
// then retrain on all accumulated data (skipped once stopped).
void step(EngineState& state, const MiniBatch& batch, const SequentialTestSpec& spec);

TrialRecord run_sequential(std::span<const MiniBatch> stream, const SequentialTestSpec& spec);

// Same loop with a fixed model that is never retrained.
TrialRecord run_oracle(std::span<const MiniBatch> stream, const PayoffModel& model_star,
                       const TestConfig& config, const NullSpec& null_spec);

// Sample-splitting batch test: trains on the first ceil(n/2) observations,
// returns E_n = prod over the rest of (1 + payoff) and rejects iff
// E_n >= 1/alpha.
std::pair<EValue, Decision> batch_evalue_test(std::span<const Observation> data,
                                              const SequentialTestSpec& spec, double alpha);

// Product e-value for optional continuation across independent segments.
EValue combine_evalues(EValue e1, EValue e2);

}  // namespace davt
