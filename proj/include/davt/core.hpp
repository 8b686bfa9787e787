#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace davt {

// Role of an observation's layout. Operators check tags before touching data,
// so a mis-shaped input fails loudly instead of being reinterpreted.
enum class Tag { kPlain, kPair, kPairOfPairs, kCitTriple, kAugmentedCitPair };

std::string tag_name(Tag tag);

std::size_t shape_product(const std::vector<std::size_t>& shape);

// A fixed-shape real vector. `shape` is row-major: a pair of k-vectors is
// [2, k], a glyph is [h, w], a CIT triple (u, v, w_1..w_d) is [d + 2].
struct Observation {
  std::vector<double> data;
  std::vector<std::size_t> shape;
  Tag tag = Tag::kPlain;

  std::size_t size() const { return data.size(); }
  void validate() const;  // throws std::invalid_argument
};

struct MiniBatch {
  std::vector<Observation> observations;
  std::size_t index = 0;    // 1-based position t in the stream
  std::vector<int> groups;  // unpaired group labels (0/1); empty for paired streams

  std::size_t size() const { return observations.size(); }
  void validate() const;
};

enum class ScoreMode { kProduct, kAverage };

struct TestConfig {
  double alpha = 0.05;
  std::size_t batch_size = 90;
  std::size_t t_max = 30;
  ScoreMode score_mode = ScoreMode::kProduct;
  double q_bound = 0.45;
  std::uint64_t seed = 0;
};

// Returns cfg unchanged if every invariant holds; otherwise throws
// std::invalid_argument naming the first violated field.
const TestConfig& validate_config(const TestConfig& cfg);

// Wealth level at which the test stops and rejects: 1 / alpha.
double threshold(const TestConfig& cfg);

// The e-process. Wealth is tracked in log space; the raw value is derived so
// long streams cannot overflow the running product.
struct WealthState {
  std::size_t t = 0;
  double wealth = 1.0;
  double log_wealth = 0.0;
  double last_score = 1.0;
  bool stopped = false;

  void apply_score(double score, double log_threshold);
};

enum class Decision { kReject, kContinue };

std::string decision_name(Decision d);

struct DiagnosticPoint {
  std::size_t t = 0;
  double score = 1.0;
  double growth_estimate = 0.0;
  double growth_threshold = 0.0;
};

struct TrialRecord {
  std::vector<std::pair<std::size_t, double>> trajectory;  // (t, log_wealth)
  std::optional<std::size_t> stopping_time;
  Decision decision = Decision::kContinue;
  std::size_t samples_consumed = 0;
  std::vector<DiagnosticPoint> diagnostics;  // one point per step
  bool divergence_warning = false;           // in-memory diagnostic, not serialized

  void validate() const;
};

// Nonnegative statistic with expectation <= 1 under the null.
struct EValue {
  double value = 0.0;
};

}  // namespace davt
