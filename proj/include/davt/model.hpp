#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace davt {

enum class Normalization { kNone, kLayerNorm };

// Feed-forward payoff network g_theta with output squashed into (-q, q):
//   hidden layer: h = relu(layernorm?(W h_prev + b))
//   output:       g = q * (2 * logistic(raw) - 1) = q * tanh(raw / 2)
// Parameters are stored flat (per layer: W row-major, then b) so the
// optimizer, gradient checks, and serialization all see one array.
struct PayoffModel {
  std::vector<std::size_t> layer_dims;  // input, hidden..., 1
  Normalization normalization = Normalization::kNone;
  double q_bound = 0.45;
  std::vector<double> params;

  std::size_t input_dim() const { return layer_dims.front(); }
  void validate() const;
};

std::size_t param_count(const std::vector<std::size_t>& layer_dims);

// Offsets of layer l's weight block and bias block inside the flat array.
struct LayerView {
  std::size_t w_offset, b_offset, in, out;
};
std::vector<LayerView> layer_views(const std::vector<std::size_t>& layer_dims);

PayoffModel make_payoff_model(std::vector<std::size_t> layer_dims, Normalization norm,
                              double q_bound);

// Glorot-uniform weights, zero biases, deterministic in the seed.
PayoffModel init_payoff_model(std::vector<std::size_t> layer_dims, Normalization norm,
                              double q_bound, std::uint64_t seed);

// Scratch space reused across forward/backward passes.
struct ModelWorkspace {
  std::vector<std::vector<double>> pre;   // per hidden layer: W h + b
  std::vector<std::vector<double>> nrm;   // per hidden layer: after layer norm
  std::vector<std::vector<double>> act;   // per hidden layer: after relu
  std::vector<double> invstd;             // per hidden layer: 1 / sqrt(var + eps)
  std::vector<std::vector<double>> grad;  // backward scratch
};

double forward(const PayoffModel& model, std::span<const double> x);
double forward_raw(const PayoffModel& model, std::span<const double> x);

// Workspace-reusing variant for hot loops; `raw_out` receives the pre-squash
// score so both squashed and raw consumers share one pass.
double forward_ws(const PayoffModel& model, std::span<const double> x, ModelWorkspace& ws,
                  double* raw_out = nullptr);

// Accumulates seed * (d raw / d params) into `grad` (same layout as params).
// Requires `ws` to hold the activations of the matching forward_ws call.
void backward_raw_ws(const PayoffModel& model, std::span<const double> x, double seed,
                     ModelWorkspace& ws, std::span<double> grad);

// Flat little-endian float64 parameter dump behind a one-line JSON header.
void save_model(const PayoffModel& model, const std::string& path);
PayoffModel load_model(const std::string& path);

}  // namespace davt
