#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rdpg/dynamics.hpp"
#include "rdpg/errors.hpp"
#include "rdpg/model.hpp"
#include "rdpg/types.hpp"

namespace rdpg {

inline Matrix graph_laplacian(const Matrix& p) {
  const Vector deg = p.rowwise().sum();
  Matrix l = -p;
  l.diagonal() += deg;
  return l;
}

// Orthonormal basis of the complement of col(V), from the trailing columns
// of a full Householder QR. V must have full column rank.
inline Matrix orthogonal_complement(const Matrix& v) {
  const Index n = v.rows();
  const Index d = v.cols();
  Eigen::HouseholderQR<Matrix> qr(v);
  const Matrix full = qr.householderQ() * Matrix::Identity(n, n);
  return full.rightCols(n - d);
}

namespace detail {

struct GramEigen {
  Vector lambda;  // ascending (Eigen convention)
  Matrix q;
};

inline GramEigen gram_eigen_checked(const Matrix& gram, const char* who) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(gram));
  if (eig.info() != Eigen::Success) throw Error(std::string(who) + ": eigensolver failed");
  const Vector& lam = eig.eigenvalues();
  const double lmax = lam(lam.size() - 1);
  if (!(lmax > 0.0) || lam(0) < tol::kGramCondRel * lmax)
    throw RankDeficient(std::string(who) + ": Gram spectrum condition exceeds 1e4");
  return {lam, eig.eigenvectors()};
}

// Unique skew solution of G*Omega + Omega*G = rhs (rhs skew), solved in the
// eigenbasis of G where the operator is diagonal with entries l_i + l_j.
inline Matrix solve_skew_lyapunov(const GramEigen& ge, const Matrix& rhs) {
  const Matrix rt = ge.q.transpose() * rhs * ge.q;
  Matrix om = Matrix::Zero(rhs.rows(), rhs.cols());
  for (Index i = 0; i < rhs.rows(); ++i)
    for (Index j = 0; j < rhs.cols(); ++j)
      if (i != j) om(i, j) = rt(i, j) / (ge.lambda(i) + ge.lambda(j));
  Matrix out = ge.q * om * ge.q.transpose();
  return skew_part(out);  // kill rounding asymmetry
}

}  // namespace detail

// Connection 1-form: the gauge rate of a velocity Z at X, i.e. the unique
// skew Omega with (X'X) Omega + Omega (X'X) = X'Z - Z'X.
inline Matrix connection_form(const LatentConfig& x, const Matrix& z) {
  if (z.rows() != x.n() || z.cols() != x.d())
    throw DimensionMismatch("connection_form: Z shape must match X");
  const Matrix gram = x.entries.transpose() * x.entries;
  const auto ge = detail::gram_eigen_checked(gram, "connection_form");
  const Matrix rhs = x.entries.transpose() * z - z.transpose() * x.entries;
  return detail::solve_skew_lyapunov(ge, rhs);
}

struct VerticalHorizontalSplit {
  Matrix omega;       // skew gauge rate
  Matrix vertical;    // X * omega
  Matrix horizontal;  // Z - vertical
};

// Orthogonal split of Z into fiber direction and its complement; the
// vertical part X*Omega* solves G Omega* + Omega* G = 2 skew(X'Z).
inline VerticalHorizontalSplit vertical_project(const LatentConfig& x, const Matrix& z) {
  if (z.rows() != x.n() || z.cols() != x.d())
    throw DimensionMismatch("vertical_project: Z shape must match X");
  const Matrix gram = x.entries.transpose() * x.entries;
  const auto ge = detail::gram_eigen_checked(gram, "vertical_project");
  const Matrix rhs = x.entries.transpose() * z - z.transpose() * x.entries;  // 2 skew(X'Z)
  VerticalHorizontalSplit split;
  split.omega = detail::solve_skew_lyapunov(ge, rhs);
  split.vertical = x.entries * split.omega;
  split.horizontal = z - split.vertical;
  return split;
}

// Horizontal lift of a realizable P-velocity at the canonical representative
// X = V Lambda^{1/2}: Xdot = V SigmaT Lambda^{1/2} + Vperp B' Lambda^{-1/2}
// with SigmaT_ij = A_ij / (l_i + l_j), A = V' Pdot V, B = V' Pdot Vperp.
inline Matrix horizontal_lift(const SpectralDecomp& dec, const Matrix& pdot,
                              double realizability_tol = tol::kRealizable) {
  const Index n = dec.eigenvectors.rows();
  const Index d = dec.eigenvectors.cols();
  if (pdot.rows() != n || pdot.cols() != n)
    throw DimensionMismatch("horizontal_lift: Pdot shape must match decomposition");
  if (!is_symmetric(pdot)) throw DimensionMismatch("horizontal_lift: Pdot must be symmetric");
  const double lmax = dec.eigenvalues(0);
  if (!(dec.eigenvalues(d - 1) > 0.0) || dec.eigenvalues(d - 1) < tol::kGramCondRel * lmax)
    throw RankDeficient("horizontal_lift: trailing eigenvalue too small");

  const Matrix& v = dec.eigenvectors;
  const Matrix vperp = orthogonal_complement(v);
  if (vperp.cols() > 0) {
    const double nullnull = (vperp.transpose() * pdot * vperp).norm();
    if (nullnull > realizability_tol * std::max(1e-300, pdot.norm()))
      throw NotRealizable("horizontal_lift: null-null block norm " + std::to_string(nullnull) +
                          " exceeds tolerance");
  }

  const Matrix a = v.transpose() * pdot * v;
  Matrix sigma_t(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) sigma_t(i, j) = a(i, j) / (dec.eigenvalues(i) + dec.eigenvalues(j));

  const Vector sqrt_l = dec.eigenvalues.cwiseSqrt();
  Matrix xdot = v * sigma_t * sqrt_l.asDiagonal();
  if (vperp.cols() > 0) {
    const Matrix b = v.transpose() * pdot * vperp;
    xdot += vperp * b.transpose() * sqrt_l.cwiseInverse().asDiagonal();
  }
  return xdot;
}

// X' [M1, M2] X. Skew-symmetric whenever M1, M2 are symmetric; its
// nonvanishing certifies positive sectional curvature for that two-time
// span.
inline Matrix projected_commutator(const LatentConfig& x, const Matrix& m1, const Matrix& m2) {
  if (m1.rows() != x.n() || m1.cols() != x.n() || m2.rows() != x.n() || m2.cols() != x.n())
    throw DimensionMismatch("projected_commutator: M shapes must be n x n");
  const Matrix comm = m1 * m2 - m2 * m1;
  return x.entries.transpose() * comm * x.entries;
}

struct CurvaturePairContribution {
  Index iota = 0;
  Index gamma = 0;
  double lambda_iota = 0.0;
  double lambda_gamma = 0.0;
  double contribution = 0.0;
};

struct CurvatureReport {
  Matrix projected_comm;           // X' [M1, M2] X
  double vertical_bracket_norm_sq = 0.0;
  std::vector<CurvaturePairContribution> per_pair;
};

// Squared norm of the vertical component of the bracket of the two
// horizontal fields M1 X, M2 X:
//   4 sum_{i<j} [l_i l_j / (l_i + l_j)] (U'[M1,M2]U)_{ij}^2.
// The 1/(l_i+l_j) weights are the connection coefficients; pairs of small
// eigenvalues dominate.
inline CurvatureReport curvature_norm(const LatentConfig& x, const Matrix& m1, const Matrix& m2) {
  CurvatureReport rep;
  rep.projected_comm = projected_commutator(x, m1, m2);

  const Matrix gram = x.entries.transpose() * x.entries;
  const auto ge = detail::gram_eigen_checked(gram, "curvature_norm");
  // Eigenvectors of P restricted to col(X): U = X Q Lambda^{-1/2}.
  const Matrix u = x.entries * ge.q * ge.lambda.cwiseSqrt().cwiseInverse().asDiagonal();

  const Matrix comm = m1 * m2 - m2 * m1;
  const Matrix proj = u.transpose() * comm * u;
  rep.vertical_bracket_norm_sq = 0.0;
  for (Index i = 0; i < proj.rows(); ++i)
    for (Index j = i + 1; j < proj.cols(); ++j) {
      const double li = ge.lambda(i), lj = ge.lambda(j);
      const double c = 4.0 * (li * lj / (li + lj)) * proj(i, j) * proj(i, j);
      rep.per_pair.push_back({i, j, li, lj, c});
      rep.vertical_bracket_norm_sq += c;
    }
  return rep;
}

// Local commutator criterion for Laplacian dynamics, evaluated at a single
// configuration: Psi(X) = X' [L, Ldot] X with Pdot = 2P^2 - DP - PD and
// Ldot = diag(Pdot 1) - Pdot.
inline Matrix laplacian_psi(const LatentConfig& x) {
  if (x.n() < 2) throw DimensionMismatch("laplacian_psi: need n >= 2");
  const Matrix p = symmetrize(x.entries * x.entries.transpose());
  const Vector deg = p.rowwise().sum();
  Matrix l = -p;
  l.diagonal() += deg;
  const Matrix dp = deg.asDiagonal() * p;
  const Matrix pdot = 2.0 * p * p - dp - dp.transpose();
  Matrix ldot = -pdot;
  ldot.diagonal() += pdot.rowwise().sum();
  const Matrix comm = l * ldot - ldot * l;
  return x.entries.transpose() * comm * x.entries;
}

struct FiniteTimeRankReport {
  int rank = 0;
  bool spans_full = false;
  std::vector<Matrix> b_matrices;
};

// Evaluates B_a = X(t0)' [L(t0), L(s_a)] X(t0) for each sample time and
// reports the rank of their span inside so(d). Rank d(d-1)/2 certifies full
// restricted holonomy at the base point.
inline FiniteTimeRankReport finite_time_rank(const Trajectory& traj, Index t0_index,
                                             const std::vector<Index>& sample_indices) {
  if (traj.kind != TrajectoryKind::latent)
    throw DimensionMismatch("finite_time_rank: need a latent trajectory");
  if (t0_index < 0 || t0_index >= traj.length())
    throw Error("finite_time_rank: t0 index out of range");
  const Index d = traj.states.front().cols();
  const Index so_dim = d * (d - 1) / 2;
  if (so_dim == 0) return {0, true, {}};  // so(1) is trivial
  if (static_cast<Index>(sample_indices.size()) < so_dim)
    throw Error("finite_time_rank: need at least d(d-1)/2 sample times");

  const auto check_rank = [&](const Matrix& x) {
    Eigen::JacobiSVD<Matrix> svd(x);
    if (svd.singularValues()(x.cols() - 1) <= tol::kRankRel * svd.singularValues()(0))
      throw RankDeficient("finite_time_rank: rank-deficient state");
  };

  const Matrix& x0 = traj.states[static_cast<std::size_t>(t0_index)];
  check_rank(x0);
  const Matrix l0 = graph_laplacian(symmetrize(x0 * x0.transpose()));

  FiniteTimeRankReport rep;
  Matrix stacked(static_cast<Index>(sample_indices.size()), so_dim);
  for (std::size_t a = 0; a < sample_indices.size(); ++a) {
    const Index s = sample_indices[a];
    if (s < 0 || s >= traj.length()) throw Error("finite_time_rank: sample index out of range");
    const Matrix& xs = traj.states[static_cast<std::size_t>(s)];
    check_rank(xs);
    const Matrix ls = graph_laplacian(symmetrize(xs * xs.transpose()));
    const Matrix b = x0.transpose() * (l0 * ls - ls * l0) * x0;
    rep.b_matrices.push_back(b);
    Index col = 0;
    for (Index i = 0; i < d; ++i)
      for (Index j = i + 1; j < d; ++j) stacked(static_cast<Index>(a), col++) = b(i, j);
  }

  Eigen::JacobiSVD<Matrix> svd(stacked);
  const double smax = svd.singularValues()(0);
  int rank = 0;
  if (smax > 0.0)
    for (Index k = 0; k < svd.singularValues().size(); ++k)
      if (svd.singularValues()(k) > tol::kRankRel * smax) ++rank;
  rep.rank = rank;
  rep.spans_full = rank == static_cast<int>(so_dim);
  return rep;
}

}  // namespace rdpg
