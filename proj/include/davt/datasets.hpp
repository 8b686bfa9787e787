#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "davt/core.hpp"
#include "davt/rng.hpp"

namespace davt {

enum class Hypothesis { kNull, kAlt };

// Nine Gaussians on a 3x3 grid. The X component always uses base_cov; the Y
// component uses base_cov under the null and alt_cov under the alternative.
// With rho != 0 the pair shares its mixture component and the first
// coordinates' residuals are jointly Gaussian with correlation rho; with
// rho == 0 the two components are fully independent.
struct BlobParams {
  double spacing = 5.0;
  std::array<double, 4> base_cov = {1.0, 0.0, 0.0, 1.0};  // row-major 2x2
  // eigenvalues (4, 1/4) rotated 45 degrees
  std::array<double, 4> alt_cov = {2.125, 1.875, 1.875, 2.125};
  double rho = 0.0;
  Hypothesis hypothesis = Hypothesis::kNull;

  void validate() const;
};

std::vector<Observation> gen_blob(std::size_t n, const BlobParams& params, Rng& rng);

// Model-X CIT triples: W ~ N(0, I_d), U | W=w ~ N(a'w, 1),
// null V | W=w ~ N((b'w)^2, 1), alternative V | W=w, U=u ~ N((b'w)^2 + 3u, 1).
struct CitParams {
  std::size_t d = 20;
  std::vector<double> a, b;  // length d
  Hypothesis hypothesis = Hypothesis::kNull;

  void validate() const;
};

// Layout per observation: (u, v, w_1..w_d), tag cit-triple.
std::vector<Observation> gen_cit(std::size_t n, const CitParams& params, Rng& rng);

// Draws a single U~ ~ N(a'w, 1) independent of u and returns
// ((u, v, w), (u~, v, w)) with (v, w) shared bit-exactly.
Observation modelx_resample(const Observation& triple, const CitParams& params, Rng& rng);

// Binary glyph pair stream: P_X = p P_6 + (1-p) P_9, P_Y = p P_9 + (1-p) P_6,
// each draw uniformly rotated by one of {90, 180, 270, 360} degrees.
struct GlyphParams {
  std::size_t side = 8;
  std::vector<double> glyph_six;   // side x side, row-major, values in {0, 1}
  std::vector<double> glyph_nine;  // rotate180(six) with one corner pixel toggled
  double p = 0.5;

  void validate() const;
};

GlyphParams default_glyph_params();

std::vector<Observation> gen_glyph_stream(std::size_t n, const GlyphParams& params, Rng& rng);

enum class SymmetryMode { kNull, kShifted };

// Scalars: N(0, 1) under the null, N(0.5, 1) in shifted mode.
std::vector<Observation> gen_symmetric(std::size_t n, SymmetryMode mode, Rng& rng);

}  // namespace davt
