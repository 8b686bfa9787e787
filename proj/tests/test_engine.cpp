#include <cmath>

#include "davt/datasets.hpp"
#include "davt/engine.hpp"
#include "doctest.h"

using namespace davt;

namespace {

Observation make_pair(std::vector<double> x, std::vector<double> y) {
  Observation z;
  z.tag = Tag::kPair;
  z.shape = {2, x.size()};
  z.data = x;
  z.data.insert(z.data.end(), y.begin(), y.end());
  return z;
}

std::vector<MiniBatch> blob_stream(std::uint64_t seed, Hypothesis hyp, std::size_t b,
                                   std::size_t t_max) {
  BlobParams params;
  params.hypothesis = hyp;
  Rng rng(seed);
  std::vector<MiniBatch> stream;
  for (std::size_t t = 1; t <= t_max; ++t) stream.push_back({gen_blob(b, params, rng), t, {}});
  return stream;
}

SequentialTestSpec blob_spec(std::uint64_t model_seed) {
  SequentialTestSpec spec;
  spec.config.alpha = 0.05;
  spec.config.batch_size = 30;
  spec.config.t_max = 6;
  spec.null_spec = PairNull{
      Operator::compose({Operator::project_first(), Operator::swap_halves()}),
      Operator::project_first()};
  spec.training.learning_rate = 1e-3;
  spec.training.max_epochs = 25;
  spec.training.patience = 10;
  spec.model_init = init_payoff_model({2, 10, 1}, Normalization::kLayerNorm, 0.45, model_seed);
  return spec;
}

}  // namespace

TEST_CASE("compute_score of the zero model is one in both modes") {
  PayoffModel zero = make_payoff_model({4, 5, 1}, Normalization::kNone, 0.45);
  Rng rng(101);
  MiniBatch batch;
  batch.index = 1;
  for (int i = 0; i < 5; ++i) {
    batch.observations.push_back(make_pair({rng.next_gaussian(), rng.next_gaussian()},
                                           {rng.next_gaussian(), rng.next_gaussian()}));
  }
  NullSpec null = PairNull{Operator::swap_halves(), Operator::identity()};
  CHECK(compute_score(batch, zero, null, ScoreMode::kProduct) == 1.0);
  CHECK(compute_score(batch, zero, null, ScoreMode::kAverage) == 1.0);
}

TEST_CASE("product and average scores follow their formulas") {
  // two equal payoffs p: product (1+p)^2, average 1+p
  Rng rng(103);
  PayoffModel m = init_payoff_model({2, 6, 1}, Normalization::kNone, 0.45, 41);
  NullSpec null = PairNull{
      Operator::compose({Operator::project_first(), Operator::swap_halves()}),
      Operator::project_first()};
  Observation z = make_pair({rng.next_gaussian(), rng.next_gaussian()},
                            {rng.next_gaussian(), rng.next_gaussian()});
  MiniBatch batch;
  batch.index = 1;
  batch.observations = {z, z};
  double p = payoff_difference(m, z, std::get<PairNull>(null).t1, std::get<PairNull>(null).t2);
  CHECK(compute_score(batch, m, null, ScoreMode::kProduct) ==
        doctest::Approx((1.0 + p) * (1.0 + p)).epsilon(1e-15));
  CHECK(compute_score(batch, m, null, ScoreMode::kAverage) ==
        doctest::Approx(1.0 + p).epsilon(1e-15));
  // the arithmetic in the contract: payoffs [0.5, 0.5] give 2.25 and 1.5
  CHECK((1.0 + 0.5) * (1.0 + 0.5) == 2.25);
  CHECK(1.0 + (0.5 + 0.5) / 2.0 == 1.5);
}

TEST_CASE("a symmetrized batch has average score exactly one") {
  Rng rng(107);
  NullSpec null = PairNull{Operator::swap_halves(), Operator::identity()};
  for (int rep = 0; rep < 20; ++rep) {
    PayoffModel m = init_payoff_model({4, 8, 1}, Normalization::kLayerNorm, 0.45, rng.next_u64());
    MiniBatch batch;
    batch.index = 1;
    std::vector<double> payoffs;
    for (int i = 0; i < 4; ++i) {
      Observation z = make_pair({rng.next_gaussian(), rng.next_gaussian()},
                                {rng.next_gaussian(), rng.next_gaussian()});
      batch.observations.push_back(z);
      batch.observations.push_back(Operator::swap_halves().apply(z));
    }
    CHECK(compute_score(batch, m, null, ScoreMode::kAverage) == 1.0);
    // product mode matches the term-by-term oracle
    double expected = 1.0;
    for (const auto& z : batch.observations) {
      expected *= 1.0 + payoff_difference(m, z, Operator::swap_halves(), Operator::identity());
    }
    CHECK(compute_score(batch, m, null, ScoreMode::kProduct) ==
          doctest::Approx(expected).epsilon(1e-14));
  }
}

TEST_CASE("scores stay above the positivity floor") {
  Rng rng(109);
  NullSpec null = PairNull{Operator::swap_halves(), Operator::identity()};
  for (int rep = 0; rep < 30; ++rep) {
    PayoffModel m = init_payoff_model({4, 8, 1}, Normalization::kNone, 0.45, rng.next_u64());
    for (auto& p : m.params) p *= 20.0;  // saturated payoffs
    MiniBatch batch;
    batch.index = 1;
    for (int i = 0; i < 8; ++i) {
      batch.observations.push_back(make_pair({rng.next_gaussian(), rng.next_gaussian()},
                                             {rng.next_gaussian(), rng.next_gaussian()}));
    }
    double floor = std::pow(1.0 - 2.0 * 0.45, 8.0);
    CHECK(compute_score(batch, m, null, ScoreMode::kProduct) > floor);
    CHECK(compute_score(batch, m, null, ScoreMode::kAverage) >= 1.0 - 2.0 * 0.45);
  }
}

TEST_CASE("run_sequential with a zero model never rejects and stays at log-wealth zero") {
  auto stream = blob_stream(201, Hypothesis::kNull, 20, 5);
  SequentialTestSpec spec = blob_spec(1);
  spec.model_init = make_payoff_model({2, 10, 1}, Normalization::kLayerNorm, 0.45);
  TrialRecord rec = run_sequential(stream, spec);
  CHECK(rec.decision == Decision::kContinue);
  CHECK_FALSE(rec.stopping_time.has_value());
  CHECK(rec.trajectory.size() == 5);
  for (auto [t, lw] : rec.trajectory) CHECK(lw == 0.0);
  CHECK(rec.samples_consumed == 100);
}

TEST_CASE("step rejects out-of-order batches and stopped engines") {
  auto stream = blob_stream(203, Hypothesis::kNull, 10, 3);
  SequentialTestSpec spec = blob_spec(2);
  EngineState state = make_engine_state(spec);
  CHECK_THROWS_AS(step(state, stream[1], spec), std::invalid_argument);
  step(state, stream[0], spec);
  CHECK(state.accumulated.size() == 1);
  state.wealth.stopped = true;
  CHECK_THROWS_AS(step(state, stream[1], spec), std::logic_error);
}

TEST_CASE("run_sequential replays bit-identically and scores are predictable") {
  auto stream = blob_stream(207, Hypothesis::kAlt, 24, 5);
  SequentialTestSpec spec = blob_spec(3);
  TrialRecord a = run_sequential(stream, spec);
  TrialRecord b = run_sequential(stream, spec);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    CHECK(a.trajectory[i].second == b.trajectory[i].second);  // bit-identical replay
  }

  // each step adds exactly log(score) to the log wealth
  double prev = 0.0;
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    double expected = prev + std::log(a.diagnostics[i].score);
    CHECK(std::abs(a.trajectory[i].second - expected) <=
          1e-12 * std::max(1.0, std::abs(expected)));
    prev = a.trajectory[i].second;
  }

  // predictability: perturbing future batches leaves earlier scores unchanged
  auto perturbed = stream;
  for (auto& z : perturbed[3].observations) {
    for (auto& v : z.data) v += 100.0;
  }
  for (auto& z : perturbed[4].observations) {
    for (auto& v : z.data) v = -v;
  }
  TrialRecord c = run_sequential(perturbed, spec);
  std::size_t common = std::min<std::size_t>(3, std::min(a.diagnostics.size(),
                                                         c.diagnostics.size()));
  for (std::size_t i = 0; i < common; ++i) {
    CHECK(a.diagnostics[i].score == c.diagnostics[i].score);
  }
}

TEST_CASE("singleton operator sets reproduce the two-operator path bit for bit") {
  auto stream = blob_stream(211, Hypothesis::kAlt, 24, 5);
  SequentialTestSpec pair_spec = blob_spec(4);
  SequentialTestSpec sets_spec = pair_spec;
  const auto& pn = std::get<PairNull>(pair_spec.null_spec);
  sets_spec.null_spec = SetsNull{OperatorSet{{pn.t1}}, OperatorSet{{pn.t2}}};
  TrialRecord a = run_sequential(stream, pair_spec);
  TrialRecord b = run_sequential(stream, sets_spec);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    CHECK(a.trajectory[i].second == b.trajectory[i].second);
  }
  CHECK(a.stopping_time == b.stopping_time);
}

TEST_CASE("increasing alpha never increases the stopping time on a fixed trajectory") {
  // replay one wealth trajectory and evaluate the stopping rule for a grid of
  // alphas: gamma(alpha) = first t with log W_t >= log(1/alpha)
  auto stream = blob_stream(229, Hypothesis::kAlt, 24, 6);
  SequentialTestSpec spec = blob_spec(9);
  spec.config.alpha = 1e-9;  // effectively no stopping: capture the full path
  TrialRecord rec = run_sequential(stream, spec);
  auto gamma_at = [&](double alpha) {
    for (auto [t, lw] : rec.trajectory) {
      if (lw >= std::log(1.0 / alpha)) return t;
    }
    return rec.trajectory.back().first + 1;  // censored
  };
  std::size_t prev = gamma_at(0.001);
  for (double alpha : {0.005, 0.01, 0.05, 0.1, 0.2, 0.5}) {
    std::size_t g = gamma_at(alpha);
    CHECK(g <= prev);
    prev = g;
  }
}

TEST_CASE("the engine pairs consecutive observations for cross-pair nulls") {
  MiniBatch batch;
  batch.index = 1;
  for (int i = 0; i < 5; ++i) {  // odd count: one trailing element dropped
    batch.observations.push_back(make_pair({double(i)}, {double(10 + i)}));
  }
  MiniBatch paired = pair_consecutive(batch);
  CHECK(paired.observations.size() == 2);
  CHECK(paired.observations[0].tag == Tag::kPairOfPairs);
  CHECK(paired.observations[0].shape == std::vector<std::size_t>{2, 2, 1});
  CHECK(paired.observations[0].data == std::vector<double>{0, 10, 1, 11});

  NullSpec null = PairNull{Operator::cross_swap(), Operator::identity()};
  MiniBatch adapted = adapt_batch(batch, null);
  CHECK(adapted.observations.size() == 2);
  CHECK(adapted.observations[0].tag == Tag::kPairOfPairs);
}

TEST_CASE("run_oracle multiplies fixed-model payoffs exactly") {
  PayoffModel zero = make_payoff_model({2, 4, 1}, Normalization::kNone, 0.45);
  auto stream = blob_stream(213, Hypothesis::kAlt, 8, 3);
  TestConfig cfg;
  cfg.alpha = 0.05;
  cfg.batch_size = 8;
  cfg.t_max = 3;
  NullSpec null = PairNull{
      Operator::compose({Operator::project_first(), Operator::swap_halves()}),
      Operator::project_first()};
  TrialRecord rec = run_oracle(stream, zero, cfg, null);
  for (auto [t, lw] : rec.trajectory) CHECK(lw == 0.0);

  // hand-set one-unit model over two batches of two: four-term product oracle
  PayoffModel m = make_payoff_model({2, 1, 1}, Normalization::kNone, 0.45);
  m.params = {0.7, -0.4, 0.2, 1.5, 0.1};
  std::vector<MiniBatch> tiny;
  Rng rng(215);
  for (std::size_t t = 1; t <= 2; ++t) {
    MiniBatch b;
    b.index = t;
    for (int i = 0; i < 2; ++i) {
      b.observations.push_back(make_pair({rng.next_gaussian(), rng.next_gaussian()},
                                         {rng.next_gaussian(), rng.next_gaussian()}));
    }
    tiny.push_back(b);
  }
  cfg.batch_size = 2;
  cfg.t_max = 2;
  TrialRecord rec2 = run_oracle(tiny, m, cfg, null);
  double expect = 1.0;
  const auto& pn = std::get<PairNull>(null);
  for (const auto& b : tiny) {
    for (const auto& z : b.observations) {
      expect *= 1.0 + payoff_difference(m, z, pn.t1, pn.t2);
    }
  }
  CHECK(rec2.trajectory.back().second == doctest::Approx(std::log(expect)).epsilon(1e-12));
}

TEST_CASE("batch e-value test with training disabled returns E = 1") {
  auto stream = blob_stream(217, Hypothesis::kNull, 16, 2);
  std::vector<Observation> data;
  for (const auto& b : stream) {
    data.insert(data.end(), b.observations.begin(), b.observations.end());
  }
  SequentialTestSpec spec = blob_spec(5);
  spec.training.max_epochs = 0;
  spec.model_init = make_payoff_model({2, 10, 1}, Normalization::kLayerNorm, 0.45);
  auto [e, d] = batch_evalue_test(data, spec, 0.05);
  CHECK(e.value == 1.0);
  CHECK(d == Decision::kContinue);
}

TEST_CASE("batch e-value on two observations equals the single-term hand value") {
  SequentialTestSpec spec = blob_spec(6);
  spec.training.max_epochs = 0;
  PayoffModel m = make_payoff_model({2, 1, 1}, Normalization::kNone, 0.45);
  m.params = {0.9, -0.3, 0.05, 2.0, -0.2};
  spec.model_init = m;
  std::vector<Observation> data = {make_pair({0.3, -0.1}, {1.2, 0.4}),
                                   make_pair({-0.7, 0.9}, {0.1, -0.5})};
  auto [e, d] = batch_evalue_test(data, spec, 0.05);
  const auto& pn = std::get<PairNull>(spec.null_spec);
  double expect = 1.0 + payoff_difference(m, data[1], pn.t1, pn.t2);
  CHECK(e.value == doctest::Approx(expect).epsilon(1e-15));
  CHECK(d == Decision::kContinue);
}

TEST_CASE("batch e-value is fair on null data") {
  SequentialTestSpec spec = blob_spec(7);
  spec.training.max_epochs = 15;
  spec.training.patience = 15;
  BlobParams params;
  Rng rng(219);
  double sum = 0.0, sumsq = 0.0;
  int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    auto data = gen_blob(60, params, rng);
    spec.model_init = init_payoff_model({2, 10, 1}, Normalization::kLayerNorm, 0.45, 300 + rep);
    auto [e, d] = batch_evalue_test(data, spec, 0.05);
    sum += e.value;
    sumsq += e.value * e.value;
  }
  double mean = sum / reps;
  double se = std::sqrt((sumsq / reps - mean * mean) / (reps - 1));
  CHECK(std::abs(mean - 1.0) <= 3.0 * std::max(se, 1e-3));
}

TEST_CASE("combine_evalues multiplies") {
  CHECK(combine_evalues(EValue{1.0}, EValue{3.5}).value == 3.5);
  CHECK(combine_evalues(EValue{2.0}, EValue{3.0}).value == 6.0);
  CHECK_THROWS_AS(combine_evalues(EValue{-0.1}, EValue{1.0}), std::invalid_argument);
}

TEST_CASE("unpaired scores") {
  Rng rng(223);
  PayoffModel m = init_payoff_model({2, 6, 1}, Normalization::kNone, 0.45, 51);
  std::vector<Observation> xs, ys;
  for (int i = 0; i < 6; ++i) {
    Observation z;
    z.tag = Tag::kPlain;
    z.shape = {2};
    z.data = {rng.next_gaussian(), rng.next_gaussian()};
    xs.push_back(z);
    ys.push_back(z);
  }
  // identical groups score one in both modes
  CHECK(unpaired_score(xs, ys, m, UnpairedMode::kMeanDifference) == 1.0);
  CHECK(unpaired_score(xs, ys, m, UnpairedMode::kSigmaDifference) == 1.0);

  // saturated model: g close to +q on the x group and -q on the y group
  PayoffModel sat = make_payoff_model({1, 1}, Normalization::kNone, 0.45);
  sat.params = {1000.0, 0.0};
  std::vector<Observation> xpos, yneg;
  for (int i = 0; i < 4; ++i) {
    Observation a;
    a.tag = Tag::kPlain;
    a.shape = {1};
    a.data = {5.0};
    xpos.push_back(a);
    a.data = {-5.0};
    yneg.push_back(a);
  }
  CHECK(unpaired_score(xpos, yneg, sat, UnpairedMode::kMeanDifference) ==
        doctest::Approx(1.9).epsilon(1e-9));

  // random inputs match an independent recomputation
  std::vector<Observation> ys2;
  for (int i = 0; i < 4; ++i) {
    Observation z;
    z.tag = Tag::kPlain;
    z.shape = {2};
    z.data = {rng.next_gaussian(), rng.next_gaussian()};
    ys2.push_back(z);
  }
  double mx = 0.0, my = 0.0, sx = 0.0, sy = 0.0;
  for (const auto& z : xs) {
    mx += forward(m, z.data) / xs.size();
    sx += forward(m, z.data);
  }
  for (const auto& z : ys2) {
    my += forward(m, z.data) / ys2.size();
    sy += forward(m, z.data);
  }
  CHECK(unpaired_score(xs, ys2, m, UnpairedMode::kMeanDifference) ==
        doctest::Approx(1.0 + mx - my).epsilon(1e-14));
  CHECK(unpaired_score(xs, ys2, m, UnpairedMode::kSigmaDifference) ==
        doctest::Approx(1.0 + std::tanh(sx - sy)).epsilon(1e-14));
  CHECK_THROWS_AS(unpaired_score({}, ys2, m, UnpairedMode::kMeanDifference),
                  std::invalid_argument);
}

TEST_CASE("unpaired nulls run end to end with group labels") {
  Rng rng(227);
  SequentialTestSpec spec;
  spec.config.alpha = 0.05;
  spec.config.batch_size = 20;
  spec.config.t_max = 4;
  spec.null_spec = UnpairedNull{UnpairedMode::kMeanDifference};
  spec.training.max_epochs = 10;
  spec.training.patience = 10;
  spec.model_init = init_payoff_model({1, 6, 1}, Normalization::kNone, 0.45, 61);
  std::vector<MiniBatch> stream;
  for (std::size_t t = 1; t <= 4; ++t) {
    MiniBatch b;
    b.index = t;
    for (int i = 0; i < 20; ++i) {
      Observation z;
      z.tag = Tag::kPlain;
      z.shape = {1};
      z.data = {rng.next_gaussian() + (i % 2 == 0 ? 0.0 : 1.5)};
      b.observations.push_back(z);
      b.groups.push_back(i % 2);
    }
    stream.push_back(b);
  }
  TrialRecord rec = run_sequential(stream, spec);
  CHECK(rec.trajectory.size() >= 1);
  rec.validate();
}

TEST_CASE("empty streams and tiny datasets are rejected") {
  SequentialTestSpec spec = blob_spec(8);
  CHECK_THROWS_AS(run_sequential({}, spec), std::invalid_argument);
  std::vector<Observation> one = {make_pair({1, 2}, {3, 4})};
  CHECK_THROWS_AS(batch_evalue_test(one, spec, 0.05), std::invalid_argument);
}
