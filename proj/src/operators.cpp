#include "davt/operators.hpp"

#include <stdexcept>

namespace davt {

namespace {

int normalize_angle(int degrees) {
  if (degrees % 90 != 0) throw std::invalid_argument("rotate: angle must be a multiple of 90");
  int a = degrees % 360;
  if (a < 0) a += 360;
  return a;
}

bool leading_pair_tag(Tag tag) {
  return tag == Tag::kPair || tag == Tag::kPairOfPairs || tag == Tag::kAugmentedCitPair;
}

Tag project_tag(Tag tag) {
  switch (tag) {
    case Tag::kPair: return Tag::kPlain;
    case Tag::kPairOfPairs: return Tag::kPair;
    case Tag::kAugmentedCitPair: return Tag::kCitTriple;
    default: break;
  }
  throw std::invalid_argument("project_first: tag has no first component");
}

}  // namespace

Operator Operator::identity() { return Operator(OperatorKind::kIdentity); }
Operator Operator::swap_halves() { return Operator(OperatorKind::kSwap); }
Operator Operator::project_first() { return Operator(OperatorKind::kProjectFirst); }
Operator Operator::cross_swap() { return Operator(OperatorKind::kCrossSwap); }
Operator Operator::flip() { return Operator(OperatorKind::kFlip); }

Operator Operator::rotate(int degrees) {
  Operator op(OperatorKind::kRotate);
  op.angle_ = normalize_angle(degrees);
  return op;
}

Operator Operator::compose(std::vector<Operator> ops) {
  if (ops.empty()) throw std::invalid_argument("compose: empty operator list");
  if (ops.size() == 1) return ops.front();
  Operator op(OperatorKind::kCompose);
  op.children_ = std::move(ops);
  return op;
}

std::pair<Tag, std::vector<std::size_t>> Operator::output_shape(
    Tag tag, const std::vector<std::size_t>& shape) const {
  switch (kind_) {
    case OperatorKind::kIdentity:
      return {tag, shape};
    case OperatorKind::kSwap:
      if (!leading_pair_tag(tag) || shape.empty() || shape[0] != 2) {
        throw std::invalid_argument("swap: expects a two-component observation, got " + tag_name(tag));
      }
      return {tag, shape};
    case OperatorKind::kProjectFirst: {
      if (!leading_pair_tag(tag) || shape.empty() || shape[0] != 2) {
        throw std::invalid_argument("project_first: expects a two-component observation, got " +
                                    tag_name(tag));
      }
      std::vector<std::size_t> rest(shape.begin() + 1, shape.end());
      return {project_tag(tag), rest};
    }
    case OperatorKind::kRotate:
      if (tag != Tag::kPlain || shape.size() != 2 || shape[0] != shape[1]) {
        throw std::invalid_argument("rotate: expects a plain square grid");
      }
      return {tag, shape};
    case OperatorKind::kCrossSwap:
      if (tag != Tag::kPairOfPairs || shape.size() < 2 || shape[0] != 2 || shape[1] != 2) {
        throw std::invalid_argument("cross_swap: expects a pair-of-pairs observation, got " +
                                    tag_name(tag));
      }
      return {tag, shape};
    case OperatorKind::kFlip:
      if (tag != Tag::kPlain) throw std::invalid_argument("flip: expects a plain observation");
      return {tag, shape};
    case OperatorKind::kCompose: {
      Tag t = tag;
      std::vector<std::size_t> s = shape;
      for (auto it = children_.rbegin(); it != children_.rend(); ++it) {
        auto out = it->output_shape(t, s);
        t = out.first;
        s = std::move(out.second);
      }
      return {t, s};
    }
  }
  throw std::logic_error("output_shape: unknown operator kind");
}

bool Operator::accepts(Tag tag, const std::vector<std::size_t>& shape) const {
  try {
    output_shape(tag, shape);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

Observation Operator::apply(const Observation& z) const {
  auto out = output_shape(z.tag, z.shape);  // validates tag/shape
  switch (kind_) {
    case OperatorKind::kIdentity:
      return z;
    case OperatorKind::kSwap: {
      Observation r;
      r.tag = out.first;
      r.shape = std::move(out.second);
      std::size_t half = z.data.size() / 2;
      r.data.reserve(z.data.size());
      r.data.insert(r.data.end(), z.data.begin() + half, z.data.end());
      r.data.insert(r.data.end(), z.data.begin(), z.data.begin() + half);
      return r;
    }
    case OperatorKind::kProjectFirst: {
      Observation r;
      r.tag = out.first;
      r.shape = std::move(out.second);
      std::size_t half = z.data.size() / 2;
      r.data.assign(z.data.begin(), z.data.begin() + half);
      return r;
    }
    case OperatorKind::kRotate: {
      Observation r;
      r.tag = out.first;
      r.shape = std::move(out.second);
      std::size_t s = z.shape[0];
      r.data.resize(z.data.size());
      if (angle_ == 0) {
        r.data = z.data;
      } else {
        for (std::size_t row = 0; row < s; ++row) {
          for (std::size_t col = 0; col < s; ++col) {
            double v;
            // counterclockwise quarter turns as exact index permutations
            if (angle_ == 90) v = z.data[col * s + (s - 1 - row)];
            else if (angle_ == 180) v = z.data[(s - 1 - row) * s + (s - 1 - col)];
            else v = z.data[(s - 1 - col) * s + row];
            r.data[row * s + col] = v;
          }
        }
      }
      return r;
    }
    case OperatorKind::kCrossSwap: {
      Observation r;
      r.tag = out.first;
      r.shape = std::move(out.second);
      std::size_t k = z.data.size() / 4;  // ((x1, y1), (x2, y2)) -> ((x1, y2), (x2, y1))
      r.data = z.data;
      for (std::size_t i = 0; i < k; ++i) {
        r.data[k + i] = z.data[3 * k + i];
        r.data[3 * k + i] = z.data[k + i];
      }
      return r;
    }
    case OperatorKind::kFlip: {
      Observation r;
      r.tag = out.first;
      r.shape = std::move(out.second);
      r.data.resize(z.data.size());
      for (std::size_t i = 0; i < z.data.size(); ++i) r.data[i] = -z.data[i];
      return r;
    }
    case OperatorKind::kCompose: {
      Observation cur = z;
      for (auto it = children_.rbegin(); it != children_.rend(); ++it) {
        cur = it->apply(cur);
      }
      return cur;
    }
  }
  throw std::logic_error("apply: unknown operator kind");
}

nlohmann::ordered_json Operator::to_json() const {
  nlohmann::ordered_json j;
  switch (kind_) {
    case OperatorKind::kIdentity: j["kind"] = "identity"; break;
    case OperatorKind::kSwap: j["kind"] = "swap"; break;
    case OperatorKind::kProjectFirst: j["kind"] = "project_first"; break;
    case OperatorKind::kRotate:
      j["kind"] = "rotate";
      j["angle"] = angle_;
      break;
    case OperatorKind::kCrossSwap: j["kind"] = "cross_swap"; break;
    case OperatorKind::kFlip: j["kind"] = "flip"; break;
    case OperatorKind::kCompose: {
      j["kind"] = "compose";
      auto arr = nlohmann::ordered_json::array();
      for (const auto& c : children_) arr.push_back(c.to_json());
      j["ops"] = arr;
      break;
    }
  }
  return j;
}

Operator Operator::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) {
    throw std::invalid_argument("operator descriptor: expected object with \"kind\"");
  }
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "identity") return identity();
  if (kind == "swap") return swap_halves();
  if (kind == "project_first") return project_first();
  if (kind == "cross_swap") return cross_swap();
  if (kind == "flip") return flip();
  if (kind == "rotate") {
    if (!j.contains("angle")) throw std::invalid_argument("rotate descriptor: missing \"angle\"");
    return rotate(j.at("angle").get<int>());
  }
  if (kind == "compose") {
    if (!j.contains("ops")) throw std::invalid_argument("compose descriptor: missing \"ops\"");
    std::vector<Operator> ops;
    for (const auto& cj : j.at("ops")) ops.push_back(from_json(cj));
    return compose(std::move(ops));
  }
  throw std::invalid_argument("operator descriptor: unknown kind \"" + kind + "\"");
}

std::string Operator::descriptor() const { return to_json().dump(); }

void check_disjoint(const OperatorSet& set1, const OperatorSet& set2) {
  if (set1.members.empty() || set2.members.empty()) {
    throw std::invalid_argument("operator sets must be non-empty");
  }
  for (const auto& a : set1.members) {
    for (const auto& b : set2.members) {
      if (a.descriptor() == b.descriptor()) {
        throw std::invalid_argument("operator sets must be disjoint; shared member " +
                                    a.descriptor());
      }
    }
  }
}

double payoff_difference(const PayoffModel& model, const Observation& z, const Operator& t1,
                         const Operator& t2) {
  Observation w1 = t1.apply(z);
  Observation w2 = t2.apply(z);
  if (w1.size() != model.input_dim() || w2.size() != model.input_dim()) {
    throw std::invalid_argument("payoff_difference: operator output does not match model input");
  }
  return forward(model, w1.data) - forward(model, w2.data);
}

double averaged_payoff(const PayoffModel& model, const Observation& z, const OperatorSet& set1,
                       const OperatorSet& set2) {
  if (set1.members.empty() || set2.members.empty()) {
    throw std::invalid_argument("averaged_payoff: empty operator set");
  }
  double acc = 0.0;
  for (const auto& t1 : set1.members) {
    for (const auto& t2 : set2.members) {
      acc += payoff_difference(model, z, t1, t2);
    }
  }
  return acc / (static_cast<double>(set1.members.size()) * static_cast<double>(set2.members.size()));
}

}  // namespace davt
