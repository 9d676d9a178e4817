#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>

namespace rdpg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr const char* kVersion = "0.1.0";

// Tolerance ladder: one decade of slack per floating-point operation layer.
namespace tol {

// Exact algebraic identities (symmetry, skewness, gauge invariance of P).
inline constexpr double kAlgebraic = 1e-12;
// Orthonormality of computed frames.
inline constexpr double kOrthonormal = 1e-10;
// Round trips through an eigendecomposition.
inline constexpr double kRoundTrip = 1e-8;
// Numerical rank: singular values below kRankRel * sigma_max count as zero.
inline constexpr double kRankRel = 1e-8;
// Lyapunov solves lose accuracy guarantees past condition 1e4 on the Gram
// spectrum; ops raise RankDeficient beyond this.
inline constexpr double kGramCondRel = 1e-4;
// Realizability: ||Vperp' Pdot Vperp|| <= kRealizable * ||Pdot||.
inline constexpr double kRealizable = 1e-8;
// Simple-spectrum guard: min |l_i - l_j| must exceed kSimpleSpectrumRel * l_1.
inline constexpr double kSimpleSpectrumRel = 1e-6;
// Procrustes cross-covariance degeneracy.
inline constexpr double kProcrustesDegenerate = 1e-12;
// Anchor block conditioning: sigma_d < kAnchorCond * sigma_1 is degenerate.
inline constexpr double kAnchorCond = 1e-6;
// Pseudoinverse cutoff for singular Fisher matrices.
inline constexpr double kPinvCutoff = 1e-10;
// Fisher weight probability floor default.
inline constexpr double kProbFloor = 1e-6;
// Ridge penalty default for the field regression.
inline constexpr double kRidge = 1e-6;
// Design matrices with condition number above this are flagged.
inline constexpr double kIllConditioned = 1e12;

}  // namespace tol

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline Matrix skew_part(const Matrix& m) { return 0.5 * (m - m.transpose()); }

inline bool is_symmetric(const Matrix& m, double rel_tol = tol::kAlgebraic) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.norm());
  return (m - m.transpose()).norm() <= rel_tol * scale;
}

inline bool is_skew(const Matrix& m, double rel_tol = tol::kAlgebraic) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.norm());
  return (m + m.transpose()).norm() <= rel_tol * scale;
}

}  // namespace rdpg
