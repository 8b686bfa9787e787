#include "davt/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "davt/rng.hpp"
#include "json.hpp"

namespace davt {

namespace {
constexpr double kLayerNormEps = 1e-5;
}

void PayoffModel::validate() const {
  if (layer_dims.size() < 2) throw std::invalid_argument("PayoffModel: need at least two layer dims");
  if (layer_dims.back() != 1) throw std::invalid_argument("PayoffModel: output dim must be 1");
  for (std::size_t d : layer_dims) {
    if (d == 0) throw std::invalid_argument("PayoffModel: zero layer dim");
  }
  if (!(q_bound > 0.0 && q_bound < 0.5)) {
    throw std::invalid_argument("PayoffModel: q_bound must lie in (0, 0.5)");
  }
  if (params.size() != param_count(layer_dims)) {
    throw std::invalid_argument("PayoffModel: parameter array does not match layer dims");
  }
  for (double p : params) {
    if (!std::isfinite(p)) throw std::invalid_argument("PayoffModel: non-finite parameter");
  }
}

std::size_t param_count(const std::vector<std::size_t>& layer_dims) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    n += layer_dims[l] * layer_dims[l + 1] + layer_dims[l + 1];
  }
  return n;
}

std::vector<LayerView> layer_views(const std::vector<std::size_t>& layer_dims) {
  std::vector<LayerView> views;
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    LayerView v;
    v.in = layer_dims[l];
    v.out = layer_dims[l + 1];
    v.w_offset = off;
    v.b_offset = off + v.in * v.out;
    off = v.b_offset + v.out;
    views.push_back(v);
  }
  return views;
}

PayoffModel make_payoff_model(std::vector<std::size_t> layer_dims, Normalization norm,
                              double q_bound) {
  PayoffModel m;
  m.layer_dims = std::move(layer_dims);
  m.normalization = norm;
  m.q_bound = q_bound;
  m.params.assign(param_count(m.layer_dims), 0.0);
  m.validate();
  return m;
}

PayoffModel init_payoff_model(std::vector<std::size_t> layer_dims, Normalization norm,
                              double q_bound, std::uint64_t seed) {
  PayoffModel m = make_payoff_model(std::move(layer_dims), norm, q_bound);
  Rng rng(seed);
  for (const auto& v : layer_views(m.layer_dims)) {
    double sw = std::sqrt(6.0 / static_cast<double>(v.in + v.out));
    for (std::size_t i = 0; i < v.in * v.out; ++i) {
      m.params[v.w_offset + i] = (2.0 * rng.next_double() - 1.0) * sw;
    }
    // nonzero bias init keeps pre-activations off the exact relu kink
    double sb = 1.0 / std::sqrt(static_cast<double>(v.in));
    for (std::size_t i = 0; i < v.out; ++i) {
      m.params[v.b_offset + i] = (2.0 * rng.next_double() - 1.0) * sb;
    }
  }
  return m;
}

namespace {

void ensure_workspace(const PayoffModel& model, ModelWorkspace& ws) {
  std::size_t hidden = model.layer_dims.size() - 2;
  if (ws.pre.size() == hidden && (hidden == 0 || ws.pre[0].size() == model.layer_dims[1])) {
    bool ok = true;
    for (std::size_t l = 0; l < hidden; ++l) {
      if (ws.pre[l].size() != model.layer_dims[l + 1]) { ok = false; break; }
    }
    if (ok) return;
  }
  ws.pre.assign(hidden, {});
  ws.nrm.assign(hidden, {});
  ws.act.assign(hidden, {});
  ws.grad.assign(hidden, {});
  ws.invstd.assign(hidden, 0.0);
  for (std::size_t l = 0; l < hidden; ++l) {
    ws.pre[l].resize(model.layer_dims[l + 1]);
    ws.nrm[l].resize(model.layer_dims[l + 1]);
    ws.act[l].resize(model.layer_dims[l + 1]);
    ws.grad[l].resize(model.layer_dims[l + 1]);
  }
}

void matvec(const double* w, const double* b, const double* x, double* y, std::size_t out,
            std::size_t in) {
  for (std::size_t i = 0; i < out; ++i) {
    double acc = b[i];
    const double* row = w + i * in;
    for (std::size_t j = 0; j < in; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
}

}  // namespace

double forward_ws(const PayoffModel& model, std::span<const double> x, ModelWorkspace& ws,
                  double* raw_out) {
  if (x.size() != model.input_dim()) {
    throw std::invalid_argument("forward: input length does not match model input dim");
  }
  ensure_workspace(model, ws);
  auto views = layer_views(model.layer_dims);
  std::size_t hidden = model.layer_dims.size() - 2;
  const double* p = model.params.data();
  const double* cur = x.data();
  for (std::size_t l = 0; l < hidden; ++l) {
    const auto& v = views[l];
    matvec(p + v.w_offset, p + v.b_offset, cur, ws.pre[l].data(), v.out, v.in);
    if (model.normalization == Normalization::kLayerNorm) {
      double mean = 0.0;
      for (double a : ws.pre[l]) mean += a;
      mean /= static_cast<double>(v.out);
      double var = 0.0;
      for (double a : ws.pre[l]) var += (a - mean) * (a - mean);
      var /= static_cast<double>(v.out);
      double invstd = 1.0 / std::sqrt(var + kLayerNormEps);
      ws.invstd[l] = invstd;
      for (std::size_t i = 0; i < v.out; ++i) ws.nrm[l][i] = (ws.pre[l][i] - mean) * invstd;
    } else {
      ws.nrm[l] = ws.pre[l];
    }
    for (std::size_t i = 0; i < v.out; ++i) ws.act[l][i] = ws.nrm[l][i] > 0.0 ? ws.nrm[l][i] : 0.0;
    cur = ws.act[l].data();
  }
  const auto& last = views.back();
  double raw;
  matvec(p + last.w_offset, p + last.b_offset, cur, &raw, 1, last.in);
  if (raw_out) *raw_out = raw;
  return model.q_bound * std::tanh(0.5 * raw);
}

double forward(const PayoffModel& model, std::span<const double> x) {
  ModelWorkspace ws;
  return forward_ws(model, x, ws);
}

double forward_raw(const PayoffModel& model, std::span<const double> x) {
  ModelWorkspace ws;
  double raw = 0.0;
  forward_ws(model, x, ws, &raw);
  return raw;
}

void backward_raw_ws(const PayoffModel& model, std::span<const double> x, double seed,
                     ModelWorkspace& ws, std::span<double> grad) {
  auto views = layer_views(model.layer_dims);
  std::size_t hidden = model.layer_dims.size() - 2;
  const double* p = model.params.data();
  double* g = grad.data();

  // Output layer: raw = W h + b, gradient seeded with `seed`.
  const auto& last = views.back();
  const double* h_last = hidden > 0 ? ws.act[hidden - 1].data() : x.data();
  for (std::size_t j = 0; j < last.in; ++j) g[last.w_offset + j] += seed * h_last[j];
  g[last.b_offset] += seed;

  if (hidden == 0) return;

  // d objective / d act[hidden-1]
  std::vector<double>& dh = ws.grad[hidden - 1];
  for (std::size_t j = 0; j < last.in; ++j) dh[j] = seed * p[last.w_offset + j];

  for (std::size_t l = hidden; l-- > 0;) {
    const auto& v = views[l];
    std::vector<double>& d = ws.grad[l];  // arrives as d/d act[l]
    // relu
    for (std::size_t i = 0; i < v.out; ++i) {
      if (!(ws.nrm[l][i] > 0.0)) d[i] = 0.0;
    }
    // layer norm: dx = invstd * (d - mean(d) - y * mean(d * y))
    if (model.normalization == Normalization::kLayerNorm) {
      double md = 0.0, mdy = 0.0;
      for (std::size_t i = 0; i < v.out; ++i) {
        md += d[i];
        mdy += d[i] * ws.nrm[l][i];
      }
      md /= static_cast<double>(v.out);
      mdy /= static_cast<double>(v.out);
      for (std::size_t i = 0; i < v.out; ++i) {
        d[i] = ws.invstd[l] * (d[i] - md - ws.nrm[l][i] * mdy);
      }
    }
    const double* input = l == 0 ? x.data() : ws.act[l - 1].data();
    for (std::size_t i = 0; i < v.out; ++i) {
      double di = d[i];
      if (di == 0.0) continue;
      double* wrow = g + v.w_offset + i * v.in;
      for (std::size_t j = 0; j < v.in; ++j) wrow[j] += di * input[j];
      g[v.b_offset + i] += di;
    }
    if (l > 0) {
      std::vector<double>& dprev = ws.grad[l - 1];
      std::fill(dprev.begin(), dprev.end(), 0.0);
      for (std::size_t i = 0; i < v.out; ++i) {
        double di = d[i];
        if (di == 0.0) continue;
        const double* wrow = p + v.w_offset + i * v.in;
        for (std::size_t j = 0; j < v.in; ++j) dprev[j] += di * wrow[j];
      }
    }
  }
}

void save_model(const PayoffModel& model, const std::string& path) {
  model.validate();
  nlohmann::ordered_json header;
  header["layer_dims"] = model.layer_dims;
  header["normalization"] = model.normalization == Normalization::kLayerNorm ? "layer_norm" : "none";
  header["q_bound"] = model.q_bound;
  header["count"] = model.params.size();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out << header.dump() << "\n";
  for (double value : model.params) {
    auto bits = std::bit_cast<std::uint64_t>(value);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

PayoffModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  std::string header_line;
  if (!std::getline(in, header_line)) throw std::runtime_error("load_model: missing header");
  auto header = nlohmann::json::parse(header_line);
  PayoffModel m;
  m.layer_dims = header.at("layer_dims").get<std::vector<std::size_t>>();
  std::string norm = header.at("normalization").get<std::string>();
  m.normalization = norm == "layer_norm" ? Normalization::kLayerNorm : Normalization::kNone;
  m.q_bound = header.at("q_bound").get<double>();
  std::size_t count = header.at("count").get<std::size_t>();
  m.params.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw std::runtime_error("load_model: truncated parameter block");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    m.params[k] = std::bit_cast<double>(bits);
  }
  m.validate();
  return m;
}

}  // namespace davt
