#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>

#include "CLI11.hpp"
#include "davt/baselines.hpp"
#include "davt/datasets.hpp"
#include "davt/harness.hpp"
#include "davt/records_io.hpp"

namespace {

using namespace davt;

int cmd_run(const std::string& config_path, const std::string& out_dir, bool emit_diagnostics,
            std::size_t threads, bool calibrate, std::size_t calibrate_trials) {
  ExperimentConfig cfg = parse_config(config_path);
  if (calibrate) {
    cfg = force_null(cfg);
    cfg.trials = calibrate_trials;
  }
  RunOutputs outputs = run_trials(cfg, threads);
  write_outputs(outputs, out_dir, emit_diagnostics);
  std::size_t rejected = outputs.summary.stopping_times.size();
  std::cout << outputs.summary.experiment << "/" << outputs.summary.method << ": " << rejected
            << "/" << outputs.summary.trials << " rejections, mean samples "
            << outputs.summary.mean_samples << "\n"
            << "outputs written to " << out_dir << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& paths) {
  std::vector<RunSummary> summaries;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw std::invalid_argument("report: cannot open " + p);
    summaries.push_back(summary_from_json(nlohmann::json::parse(in)));
  }
  std::cout << report(summaries);
  return 0;
}

bool report_check(bool ok, const std::string& name) {
  std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
  return ok;
}

int cmd_selfcheck() {
  bool all = true;
  Rng rng(2024);

  {  // swap involution and purity
    Observation z;
    z.tag = Tag::kPair;
    z.shape = {2, 3};
    z.data = {1, 2, 3, 4, 5, 6};
    Operator sw = Operator::swap_halves();
    Observation once = sw.apply(z);
    bool ok = sw.apply(once).data == z.data;
    for (int i = 0; i < 100 && ok; ++i) ok = sw.apply(z).data == once.data;
    all &= report_check(ok, "swap involution / operator purity");
  }
  {  // rotation group law on a random glyph
    Observation g;
    g.tag = Tag::kPlain;
    g.shape = {8, 8};
    for (int i = 0; i < 64; ++i) g.data.push_back(std::floor(rng.next_double() * 2.0));
    bool ok = true;
    for (int a : {90, 180, 270, 360}) {
      for (int b : {90, 180, 270, 360}) {
        auto lhs = Operator::rotate(a).apply(Operator::rotate(b).apply(g));
        auto rhs = Operator::rotate((a + b) % 360).apply(g);
        ok = ok && lhs.data == rhs.data;
      }
    }
    all &= report_check(ok, "rotation group law");
  }
  {  // payoff antisymmetry under the swap null
    bool ok = true;
    for (int rep = 0; rep < 1000 && ok; ++rep) {
      PayoffModel m = init_payoff_model({4, 8, 1}, Normalization::kNone, 0.45, rng.next_u64());
      Observation z;
      z.tag = Tag::kPair;
      z.shape = {2, 2};
      for (int i = 0; i < 4; ++i) z.data.push_back(rng.next_gaussian());
      double a = payoff_difference(m, z, Operator::swap_halves(), Operator::identity());
      double b = payoff_difference(m, Operator::swap_halves().apply(z), Operator::swap_halves(),
                                   Operator::identity());
      ok = std::abs(a + b) <= 1e-12;
    }
    all &= report_check(ok, "payoff antisymmetry (swap vs identity)");
  }
  {  // output boundedness
    bool ok = true;
    for (int rep = 0; rep < 100 && ok; ++rep) {
      PayoffModel m = init_payoff_model({3, 10, 1}, Normalization::kLayerNorm, 0.45, rng.next_u64());
      for (int k = 0; k < 100 && ok; ++k) {
        std::vector<double> x = {rng.next_gaussian() * 10, rng.next_gaussian() * 10,
                                 rng.next_gaussian() * 10};
        ok = std::abs(forward(m, x)) < m.q_bound;
      }
    }
    all &= report_check(ok, "forward output strictly inside (-q, q)");
  }
  {  // analytic gradient vs central differences
    PayoffModel m = init_payoff_model({3, 5, 1}, Normalization::kLayerNorm, 0.45, 7);
    std::vector<Observation> data;
    for (int i = 0; i < 4; ++i) {
      Observation z;
      z.tag = Tag::kPair;
      z.shape = {2, 3};
      for (int k = 0; k < 6; ++k) z.data.push_back(rng.next_gaussian());
      data.push_back(z);
    }
    Operator t1 = Operator::compose({Operator::project_first(), Operator::swap_halves()});
    Operator t2 = Operator::project_first();
    GradientBundle g = objective_gradient(m, data, t1, t2, LossVariant::kPlain);
    bool ok = true;
    double h = 1e-5;
    for (std::size_t i = 0; i < m.params.size() && ok; ++i) {
      PayoffModel up = m, dn = m;
      up.params[i] += h;
      dn.params[i] -= h;
      double fd = (batch_objective(up, data, t1, t2, LossVariant::kPlain) -
                   batch_objective(dn, data, t1, t2, LossVariant::kPlain)) /
                  (2 * h);
      double denom = std::max({std::abs(fd), std::abs(g.values[i]), 1e-7});
      ok = std::abs(fd - g.values[i]) / denom <= 1e-4;
    }
    all &= report_check(ok, "analytic gradient matches finite differences");
  }
  {  // ONS bet stays clipped
    OnsState s;
    bool ok = true;
    for (int i = 0; i < 2000 && ok; ++i) {
      ons_update(s, 2.0 * rng.next_double() - 1.0);
      ok = s.lambda >= -0.5 && s.lambda <= 0.5 && s.wealth > 0.0;
    }
    all &= report_check(ok, "ONS bet stays in [-1/2, 1/2] with positive wealth");
  }
  {  // generator determinism
    BlobParams params;
    params.hypothesis = Hypothesis::kAlt;
    Rng r1(99), r2(99);
    auto d1 = gen_blob(200, params, r1);
    auto d2 = gen_blob(200, params, r2);
    bool ok = true;
    for (std::size_t i = 0; i < d1.size(); ++i) ok = ok && d1[i].data == d2[i].data;
    all &= report_check(ok, "generators are deterministic in the seed");
  }
  {  // quick martingale check under the swap null
    PayoffModel m = init_payoff_model({4, 10, 1}, Normalization::kNone, 0.45, 11);
    BlobParams params;  // null
    Rng r(123);
    auto data = gen_blob(20000, params, r);
    double mean = 0.0, m2 = 0.0;
    std::size_t n = 0;
    for (const auto& z : data) {
      double s = 1.0 + payoff_difference(m, z, Operator::swap_halves(), Operator::identity());
      n += 1;
      double delta = s - mean;
      mean += delta / static_cast<double>(n);
      m2 += delta * (s - mean);
    }
    double se = std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n));
    bool ok = std::abs(mean - 1.0) <= 4.0 * se;
    all &= report_check(ok, "single-observation score is fair under the null (4 SE)");
  }

  std::cout << (all ? "selfcheck passed" : "selfcheck FAILED") << "\n";
  return all ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"davt: sequential hypothesis testing by betting with trained payoff models"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  bool emit_diagnostics = false;
  std::size_t threads = 0;
  std::size_t calibrate_trials = 200;
  std::vector<std::string> report_paths;

  CLI::App* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--emit-diagnostics", emit_diagnostics,
                "add score/growth columns to trajectories.csv");
  run->add_option("--threads", threads, "trial workers (0 = hardware)");

  CLI::App* calibrate = app.add_subcommand("calibrate", "run the config under its null generator");
  calibrate->add_option("--config", config_path, "experiment config JSON")->required();
  calibrate->add_option("--trials", calibrate_trials, "number of null trials");
  calibrate->add_option("--out", out_dir, "output directory");
  calibrate->add_option("--threads", threads, "trial workers (0 = hardware)");

  CLI::App* report = app.add_subcommand("report", "tabulate one or more summary.json files");
  report->add_option("summaries", report_paths, "summary.json paths")->required();

  app.add_subcommand("selfcheck", "run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("run")) {
      return cmd_run(config_path, out_dir, emit_diagnostics, threads, false, 0);
    }
    if (app.got_subcommand("calibrate")) {
      return cmd_run(config_path, out_dir, emit_diagnostics, threads, true, calibrate_trials);
    }
    if (app.got_subcommand("report")) {
      return cmd_report(report_paths);
    }
    return cmd_selfcheck();
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
