#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "davt/baselines.hpp"
#include "davt/core.hpp"
#include "davt/datasets.hpp"
#include "davt/engine.hpp"
#include "json.hpp"

namespace davt {

enum class ExperimentKind {
  kBlobTwoSample,
  kBlobIndependence,
  kCit,
  kGlyphRotation,
  kSymmetry,
  kCustom
};

enum class Method { kDavt, kSeqitOns, kMmdPerm, kOracle, kBatchEvalue };

std::string experiment_name(ExperimentKind e);
std::string method_name(Method m);

enum class GeneratorType { kBlob, kCit, kGlyph, kSymmetry };

struct GeneratorConfig {
  GeneratorType type = GeneratorType::kBlob;
  BlobParams blob;
  CitParams cit;
  GlyphParams glyph;
  SymmetryMode symmetry_mode = SymmetryMode::kNull;
};

struct ExperimentConfig {
  std::string schema = "davt-experiment/1";
  ExperimentKind experiment = ExperimentKind::kBlobTwoSample;
  Method method = Method::kDavt;
  std::size_t trials = 100;
  std::uint64_t master_seed = 1;
  TestConfig test;
  TrainingParams training;
  std::vector<std::size_t> hidden_dims;
  Normalization normalization = Normalization::kLayerNorm;
  NullSpec null_spec;
  GeneratorConfig generator;
  std::size_t oracle_pretrain_samples = 1024;
  KernelSpec kernel;
};

// Parses, validates (unknown keys are errors), fills experiment defaults and
// resolves "auto" generator constants deterministically from the master seed.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig config_from_json(const nlohmann::json& j);

// Resolved configuration as JSON (all defaults inlined); this is the digest
// input and the manifest's config block.
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

// Forces the null-hypothesis generator variant (calibration runs).
ExperimentConfig force_null(const ExperimentConfig& cfg);

// Model input width implied by the null operators and the stream shape.
std::size_t resolve_input_dim(const ExperimentConfig& cfg);

// The full per-trial observation stream (t_max batches of batch_size).
std::vector<MiniBatch> make_stream(const ExperimentConfig& cfg, std::uint64_t stream_seed);

struct RunSummary {
  std::string experiment, method;
  double alpha = 0.0;
  std::size_t batch_size = 0, trials = 0;
  std::vector<std::pair<std::size_t, double>> rejection_rate_by_t;
  std::vector<std::size_t> stopping_times;  // stopped trials only, in trial order
  double mean_samples = 0.0;
  std::string config_digest;
};

nlohmann::ordered_json summary_to_json(const RunSummary& s);
RunSummary summary_from_json(const nlohmann::json& j);

struct TrialSeeds {
  std::uint64_t stream, model, aux;
};

struct RunOutputs {
  RunSummary summary;
  std::vector<TrialRecord> records;  // trial-index order
  std::vector<TrialSeeds> seeds;
  nlohmann::ordered_json resolved_config;
};

// Runs `trials` independent trials (workers share nothing but the config) and
// aggregates. threads == 0 picks the hardware concurrency.
RunOutputs run_trials(const ExperimentConfig& cfg, std::size_t threads = 0);

// Writes trajectories.csv, summary.json, trials.jsonl and manifest.json.
void write_outputs(const RunOutputs& outputs, const std::string& out_dir, bool emit_diagnostics);

// Methods-by-time rejection table plus stopping-time quantiles, as two CSV
// blocks. Throws if the summaries' time axes differ.
std::string report(const std::vector<RunSummary>& summaries);

}  // namespace davt
