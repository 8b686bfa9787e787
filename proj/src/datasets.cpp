#include "davt/datasets.hpp"

#include <cmath>
#include <stdexcept>

#include "davt/operators.hpp"

namespace davt {

namespace {

struct Chol2 {
  double l00, l10, l11;
};

Chol2 cholesky2(const std::array<double, 4>& cov, const char* name) {
  double s11 = cov[0], s12 = cov[1], s21 = cov[2], s22 = cov[3];
  if (std::abs(s12 - s21) > 1e-12) {
    throw std::invalid_argument(std::string(name) + ": covariance must be symmetric");
  }
  if (!(s11 > 0.0) || !(s11 * s22 - s12 * s21 > 0.0)) {
    throw std::invalid_argument(std::string(name) + ": covariance must be positive definite");
  }
  Chol2 c;
  c.l00 = std::sqrt(s11);
  c.l10 = s12 / c.l00;
  c.l11 = std::sqrt(s22 - c.l10 * c.l10);
  return c;
}

}  // namespace

void BlobParams::validate() const {
  cholesky2(base_cov, "BlobParams.base_cov");
  cholesky2(alt_cov, "BlobParams.alt_cov");
  if (!(spacing > 0.0)) throw std::invalid_argument("BlobParams: spacing must be positive");
  if (!(std::abs(rho) <= 1.0)) throw std::invalid_argument("BlobParams: |rho| must be <= 1");
}

std::vector<Observation> gen_blob(std::size_t n, const BlobParams& params, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_blob: n must be >= 1");
  params.validate();
  Chol2 lx = cholesky2(params.base_cov, "BlobParams.base_cov");
  Chol2 ly = params.hypothesis == Hypothesis::kAlt ? cholesky2(params.alt_cov, "BlobParams.alt_cov")
                                                   : lx;
  bool correlated = params.rho != 0.0;
  double rho_c = std::sqrt(1.0 - params.rho * params.rho);
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t kx = rng.next_index(9);
    std::size_t ky = correlated ? kx : rng.next_index(9);
    double xi1 = rng.next_gaussian();
    double xi2 = rng.next_gaussian();
    double eta1 = rng.next_gaussian();
    double eta2 = rng.next_gaussian();
    if (correlated) eta1 = params.rho * xi1 + rho_c * eta1;
    double cx0 = params.spacing * static_cast<double>(kx % 3);
    double cx1 = params.spacing * static_cast<double>(kx / 3);
    double cy0 = params.spacing * static_cast<double>(ky % 3);
    double cy1 = params.spacing * static_cast<double>(ky / 3);
    Observation z;
    z.tag = Tag::kPair;
    z.shape = {2, 2};
    z.data = {cx0 + lx.l00 * xi1, cx1 + lx.l10 * xi1 + lx.l11 * xi2,
              cy0 + ly.l00 * eta1, cy1 + ly.l10 * eta1 + ly.l11 * eta2};
    out.push_back(std::move(z));
  }
  return out;
}

void CitParams::validate() const {
  if (d < 1) throw std::invalid_argument("CitParams: d must be >= 1");
  if (a.size() != d || b.size() != d) {
    throw std::invalid_argument("CitParams: a and b must have length d");
  }
  for (double v : a) {
    if (!std::isfinite(v)) throw std::invalid_argument("CitParams: non-finite entry in a");
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw std::invalid_argument("CitParams: non-finite entry in b");
  }
}

std::vector<Observation> gen_cit(std::size_t n, const CitParams& params, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_cit: n must be >= 1");
  params.validate();
  std::vector<Observation> out;
  out.reserve(n);
  std::vector<double> w(params.d);
  for (std::size_t i = 0; i < n; ++i) {
    double aw = 0.0, bw = 0.0;
    for (std::size_t k = 0; k < params.d; ++k) {
      w[k] = rng.next_gaussian();
      aw += params.a[k] * w[k];
      bw += params.b[k] * w[k];
    }
    double u = aw + rng.next_gaussian();
    double v = bw * bw + rng.next_gaussian();
    if (params.hypothesis == Hypothesis::kAlt) v += 3.0 * u;
    Observation z;
    z.tag = Tag::kCitTriple;
    z.shape = {params.d + 2};
    z.data.reserve(params.d + 2);
    z.data.push_back(u);
    z.data.push_back(v);
    z.data.insert(z.data.end(), w.begin(), w.end());
    out.push_back(std::move(z));
  }
  return out;
}

Observation modelx_resample(const Observation& triple, const CitParams& params, Rng& rng) {
  params.validate();
  if (triple.tag != Tag::kCitTriple || triple.size() != params.d + 2) {
    throw std::invalid_argument("modelx_resample: expects a cit-triple observation");
  }
  double aw = 0.0;
  for (std::size_t k = 0; k < params.d; ++k) aw += params.a[k] * triple.data[2 + k];
  double u_tilde = aw + rng.next_gaussian();
  Observation z;
  z.tag = Tag::kAugmentedCitPair;
  z.shape = {2, params.d + 2};
  z.data.reserve(2 * (params.d + 2));
  z.data.insert(z.data.end(), triple.data.begin(), triple.data.end());
  z.data.push_back(u_tilde);
  z.data.insert(z.data.end(), triple.data.begin() + 1, triple.data.end());
  return z;
}

void GlyphParams::validate() const {
  if (side < 2) throw std::invalid_argument("GlyphParams: side must be >= 2");
  if (glyph_six.size() != side * side || glyph_nine.size() != side * side) {
    throw std::invalid_argument("GlyphParams: patterns must be side x side");
  }
  for (double v : glyph_six) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("GlyphParams: patterns must be binary");
  }
  for (double v : glyph_nine) {
    if (v != 0.0 && v != 1.0) throw std::invalid_argument("GlyphParams: patterns must be binary");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("GlyphParams: p must lie in [0, 1]");
}

GlyphParams default_glyph_params() {
  GlyphParams g;
  g.side = 8;
  g.glyph_six = {
      0, 0, 1, 1, 1, 1, 0, 0,
      0, 1, 1, 0, 0, 0, 0, 0,
      1, 1, 0, 0, 0, 0, 0, 0,
      1, 1, 1, 1, 1, 1, 0, 0,
      1, 1, 0, 0, 0, 1, 1, 0,
      1, 1, 0, 0, 0, 0, 1, 1,
      0, 1, 1, 0, 0, 1, 1, 0,
      0, 0, 1, 1, 1, 1, 0, 0,
  };
  Observation six;
  six.tag = Tag::kPlain;
  six.shape = {8, 8};
  six.data = g.glyph_six;
  Observation nine = Operator::rotate(180).apply(six);
  // toggled corner pixel makes the two classes differ beyond rotation
  nine.data[0] = nine.data[0] == 0.0 ? 1.0 : 0.0;
  g.glyph_nine = nine.data;
  return g;
}

std::vector<Observation> gen_glyph_stream(std::size_t n, const GlyphParams& params, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_glyph_stream: n must be >= 1");
  params.validate();
  // Precompute the rotations once; draws are copies.
  std::array<std::vector<double>, 4> six_rot, nine_rot;
  Observation base;
  base.tag = Tag::kPlain;
  base.shape = {params.side, params.side};
  for (std::size_t r = 0; r < 4; ++r) {
    int angle = 90 * static_cast<int>(r + 1);  // {90, 180, 270, 360}
    base.data = params.glyph_six;
    six_rot[r] = Operator::rotate(angle).apply(base).data;
    base.data = params.glyph_nine;
    nine_rot[r] = Operator::rotate(angle).apply(base).data;
  }
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    bool x_is_six = rng.next_double() < params.p;
    std::size_t x_rot = rng.next_index(4);
    bool y_is_nine = rng.next_double() < params.p;
    std::size_t y_rot = rng.next_index(4);
    const auto& x = x_is_six ? six_rot[x_rot] : nine_rot[x_rot];
    const auto& y = y_is_nine ? nine_rot[y_rot] : six_rot[y_rot];
    Observation z;
    z.tag = Tag::kPair;
    z.shape = {2, params.side, params.side};
    z.data.reserve(2 * params.side * params.side);
    z.data.insert(z.data.end(), x.begin(), x.end());
    z.data.insert(z.data.end(), y.begin(), y.end());
    out.push_back(std::move(z));
  }
  return out;
}

std::vector<Observation> gen_symmetric(std::size_t n, SymmetryMode mode, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_symmetric: n must be >= 1");
  double shift = mode == SymmetryMode::kShifted ? 0.5 : 0.0;
  std::vector<Observation> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Observation z;
    z.tag = Tag::kPlain;
    z.shape = {1};
    z.data = {shift + rng.next_gaussian()};
    out.push_back(std::move(z));
  }
  return out;
}

}  // namespace davt
