#include "davt/core.hpp"

#include <cmath>
#include <stdexcept>

namespace davt {

std::string tag_name(Tag tag) {
  switch (tag) {
    case Tag::kPlain: return "plain";
    case Tag::kPair: return "pair";
    case Tag::kPairOfPairs: return "pair-of-pairs";
    case Tag::kCitTriple: return "cit-triple";
    case Tag::kAugmentedCitPair: return "augmented-cit-pair";
  }
  return "?";
}

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t p = 1;
  for (std::size_t e : shape) p *= e;
  return p;
}

void Observation::validate() const {
  if (shape.empty()) throw std::invalid_argument("Observation: empty shape");
  for (std::size_t e : shape) {
    if (e == 0) throw std::invalid_argument("Observation: zero shape extent");
  }
  if (shape_product(shape) != data.size()) {
    throw std::invalid_argument("Observation: shape does not match data length");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw std::invalid_argument("Observation: non-finite entry");
  }
}

void MiniBatch::validate() const {
  if (observations.empty()) throw std::invalid_argument("MiniBatch: empty batch");
  if (index == 0) throw std::invalid_argument("MiniBatch: index must be positive");
  const auto& first = observations.front();
  for (const auto& z : observations) {
    z.validate();
    if (z.tag != first.tag || z.shape != first.shape) {
      throw std::invalid_argument("MiniBatch: mixed shapes or tags");
    }
  }
  if (!groups.empty() && groups.size() != observations.size()) {
    throw std::invalid_argument("MiniBatch: group labels do not match batch size");
  }
  for (int g : groups) {
    if (g != 0 && g != 1) throw std::invalid_argument("MiniBatch: group labels must be 0 or 1");
  }
}

const TestConfig& validate_config(const TestConfig& cfg) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw std::invalid_argument("TestConfig: alpha must lie in (0, 1)");
  }
  if (cfg.batch_size < 1) throw std::invalid_argument("TestConfig: batch_size must be positive");
  if (cfg.t_max < 1) throw std::invalid_argument("TestConfig: t_max must be positive");
  if (!(cfg.q_bound > 0.0 && cfg.q_bound < 0.5)) {
    throw std::invalid_argument("TestConfig: q_bound must lie in (0, 0.5)");
  }
  return cfg;
}

double threshold(const TestConfig& cfg) {
  validate_config(cfg);
  return 1.0 / cfg.alpha;
}

void WealthState::apply_score(double score, double log_threshold) {
  if (!(score > 0.0)) throw std::runtime_error("WealthState: betting score must be positive");
  t += 1;
  last_score = score;
  log_wealth += std::log(score);
  wealth = std::exp(log_wealth);
  if (log_wealth >= log_threshold) stopped = true;
}

std::string decision_name(Decision d) {
  return d == Decision::kReject ? "reject" : "continue";
}

void TrialRecord::validate() const {
  if (stopping_time.has_value() != (decision == Decision::kReject)) {
    throw std::invalid_argument("TrialRecord: stopping_time present iff decision is reject");
  }
}

}  // namespace davt
