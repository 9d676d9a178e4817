#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "rdpg/errors.hpp"
#include "rdpg/types.hpp"

namespace rdpg {

// Latent positions, one node per row.
struct LatentConfig {
  Matrix entries;

  LatentConfig() = default;
  explicit LatentConfig(Matrix m) : entries(std::move(m)) {
    if (entries.rows() < 1 || entries.cols() < 1 || entries.rows() < entries.cols())
      throw DimensionMismatch("LatentConfig requires n >= d >= 1");
  }

  Index n() const { return entries.rows(); }
  Index d() const { return entries.cols(); }
};

// Symmetric edge-probability matrix with a rank bound it inherited from the
// latent dimension that produced it.
struct ProbMatrix {
  Matrix entries;
  Index rank_bound = 0;

  ProbMatrix() = default;
  ProbMatrix(Matrix m, Index bound) : entries(std::move(m)), rank_bound(bound) {
    if (entries.rows() != entries.cols())
      throw DimensionMismatch("ProbMatrix must be square");
    if (!is_symmetric(entries))
      throw DimensionMismatch("ProbMatrix must be symmetric to 1e-12");
  }

  Index n() const { return entries.rows(); }
};

inline ProbMatrix probability_matrix(const LatentConfig& x) {
  Matrix p = x.entries * x.entries.transpose();
  return ProbMatrix(symmetrize(std::move(p)), x.d());
}

struct ValidityReport {
  bool valid = false;
  bool rank_ok = false;
  bool entries_ok = false;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double min_diag = 0.0;
  double max_diag = 0.0;
  double min_offdiag = 0.0;
  double max_offdiag = 0.0;
  std::vector<std::string> reasons;
};

// Checks membership in the interior of the model domain: full column rank
// (relative singular-value test) and all probabilities inside
// (tol, 1 - tol). Never throws; failures land in the report.
inline ValidityReport validate_interior(const LatentConfig& x, double tol) {
  ValidityReport rep;
  Eigen::JacobiSVD<Matrix> svd(x.entries);
  rep.sigma_min = svd.singularValues()(x.d() - 1);
  rep.sigma_max = svd.singularValues()(0);
  rep.rank_ok = rep.sigma_min > tol::kRankRel * rep.sigma_max;
  if (!rep.rank_ok) rep.reasons.push_back("rank deficient: sigma_min/sigma_max <= 1e-8");

  const Matrix p = symmetrize(x.entries * x.entries.transpose());
  rep.min_diag = p.diagonal().minCoeff();
  rep.max_diag = p.diagonal().maxCoeff();
  rep.min_offdiag = std::numeric_limits<double>::infinity();
  rep.max_offdiag = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < p.rows(); ++i)
    for (Index j = 0; j < p.cols(); ++j) {
      if (i == j) continue;
      rep.min_offdiag = std::min(rep.min_offdiag, p(i, j));
      rep.max_offdiag = std::max(rep.max_offdiag, p(i, j));
    }
  if (p.rows() == 1) rep.min_offdiag = rep.max_offdiag = rep.min_diag;

  const double lo = std::min({rep.min_diag, rep.min_offdiag});
  const double hi = std::max({rep.max_diag, rep.max_offdiag});
  rep.entries_ok = lo > tol && hi < 1.0 - tol;
  if (lo <= tol) rep.reasons.push_back("probability at or below lower margin: " + std::to_string(lo));
  if (hi >= 1.0 - tol) rep.reasons.push_back("probability at or above upper margin: " + std::to_string(hi));

  rep.valid = rep.rank_ok && rep.entries_ok;
  return rep;
}

// Top-d eigenpairs of a symmetric matrix, ordered by eigenvalue magnitude,
// with the deterministic per-column sign convention.
struct SpectralDecomp {
  Vector eigenvalues;   // length d, descending by magnitude
  Matrix eigenvectors;  // n x d, orthonormal columns
  double gap = 0.0;     // trailing retained eigenvalue
  std::vector<int> sign_flips;  // sign applied to each solver column
};

namespace detail {

// Largest-magnitude entry made positive; ties broken by lowest row index
// (the ascending scan keeps the first strict maximum).
inline int column_sign(const Eigen::Ref<const Vector>& u) {
  Index best = 0;
  double best_abs = std::abs(u(0));
  for (Index i = 1; i < u.size(); ++i) {
    const double a = std::abs(u(i));
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  return u(best) < 0.0 ? -1 : 1;
}

}  // namespace detail

inline SpectralDecomp spectral_decompose(const Matrix& sym, Index d, double gap_tol) {
  if (sym.rows() != sym.cols()) throw DimensionMismatch("spectral_decompose: matrix not square");
  if (d < 1 || d > sym.rows()) throw DimensionMismatch("spectral_decompose: need 1 <= d <= n");
  if (!is_symmetric(sym)) throw DimensionMismatch("spectral_decompose: matrix not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(sym));
  if (eig.info() != Eigen::Success) throw Error("spectral_decompose: eigensolver failed");

  const Index n = sym.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const Vector& ev = eig.eigenvalues();
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double ma = std::abs(ev(a)), mb = std::abs(ev(b));
    if (ma != mb) return ma > mb;
    if (ev(a) != ev(b)) return ev(a) > ev(b);
    return a < b;
  });

  SpectralDecomp out;
  out.eigenvalues.resize(d);
  out.eigenvectors.resize(n, d);
  out.sign_flips.resize(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k) {
    const Index src = order[static_cast<std::size_t>(k)];
    out.eigenvalues(k) = ev(src);
    Vector col = eig.eigenvectors().col(src);
    const int s = detail::column_sign(col);
    out.sign_flips[static_cast<std::size_t>(k)] = s;
    out.eigenvectors.col(k) = s * col;
  }
  out.gap = out.eigenvalues(d - 1);
  if (std::abs(out.gap) < gap_tol)
    throw DegenerateGap("spectral_decompose: |lambda_d| = " + std::to_string(std::abs(out.gap)) +
                        " below gap tolerance " + std::to_string(gap_tol));
  return out;
}

inline SpectralDecomp spectral_decompose(const ProbMatrix& p, Index d, double gap_tol) {
  return spectral_decompose(p.entries, d, gap_tol);
}

inline Matrix reconstruct(const SpectralDecomp& dec) {
  return dec.eigenvectors * dec.eigenvalues.asDiagonal() * dec.eigenvectors.transpose();
}

// Guard used by operations that track individual eigendirections.
inline void require_simple_spectrum(const Vector& eigenvalues,
                                    double rel_tol = tol::kSimpleSpectrumRel) {
  const double scale = eigenvalues.cwiseAbs().maxCoeff();
  for (Index i = 0; i < eigenvalues.size(); ++i)
    for (Index j = i + 1; j < eigenvalues.size(); ++j)
      if (std::abs(eigenvalues(i) - eigenvalues(j)) <= rel_tol * scale)
        throw DegenerateSpectrum("eigenvalues " + std::to_string(i) + " and " + std::to_string(j) +
                                 " are numerically repeated");
}

}  // namespace rdpg
