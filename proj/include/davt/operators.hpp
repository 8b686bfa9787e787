#pragma once

#include <string>
#include <utility>
#include <vector>

#include "davt/core.hpp"
#include "davt/model.hpp"
#include "json.hpp"

namespace davt {

enum class OperatorKind { kIdentity, kSwap, kProjectFirst, kRotate, kCrossSwap, kFlip, kCompose };

// A pure transformation of observations. The null hypothesis is defined by
// two of these (or by two finite sets). Closed under composition via an
// explicit compose kind so configurations stay serializable.
class Operator {
 public:
  Operator() : kind_(OperatorKind::kIdentity) {}

  static Operator identity();
  static Operator swap_halves();
  static Operator project_first();
  static Operator rotate(int degrees);  // 90 is one counterclockwise quarter turn
  static Operator cross_swap();
  static Operator flip();  // x -> -x, for symmetry nulls
  // Mathematical order: compose({f, g}) applies g first, then f.
  static Operator compose(std::vector<Operator> ops);

  OperatorKind kind() const { return kind_; }
  int angle() const { return angle_; }
  const std::vector<Operator>& children() const { return children_; }

  bool accepts(Tag tag, const std::vector<std::size_t>& shape) const;

  // Tag/shape propagation without touching data; throws on mismatch.
  std::pair<Tag, std::vector<std::size_t>> output_shape(Tag tag,
                                                        const std::vector<std::size_t>& shape) const;

  Observation apply(const Observation& z) const;

  nlohmann::ordered_json to_json() const;
  static Operator from_json(const nlohmann::json& j);
  std::string descriptor() const;  // canonical serialized form

  bool operator==(const Operator& other) const { return descriptor() == other.descriptor(); }

 private:
  explicit Operator(OperatorKind kind) : kind_(kind) {}
  OperatorKind kind_ = OperatorKind::kIdentity;
  int angle_ = 0;  // rotations only, normalized to {0, 90, 180, 270}
  std::vector<Operator> children_;
};

// Non-empty finite operator set; all members must share input tag and output
// shape on the streams they are used with (checked at application time).
struct OperatorSet {
  std::vector<Operator> members;
};

// Throws if any serialized descriptor appears in both sets.
void check_disjoint(const OperatorSet& set1, const OperatorSet& set2);

// g~_theta(z) = g_theta(T1(z)) - g_theta(T2(z)), in [-2q, 2q].
double payoff_difference(const PayoffModel& model, const Observation& z, const Operator& t1,
                         const Operator& t2);

// Cross-product average of payoff differences over all pairs from the two
// sets, normalized by |set1| * |set2|.
double averaged_payoff(const PayoffModel& model, const Observation& z, const OperatorSet& set1,
                       const OperatorSet& set2);

// Null specification shared by the learner and the engine.
struct PairNull {
  Operator t1, t2;
};
struct SetsNull {
  OperatorSet set1, set2;
};

}  // namespace davt
