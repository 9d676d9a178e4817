#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rdpg/dynamics.hpp"
#include "rdpg/errors.hpp"
#include "rdpg/geometry.hpp"
#include "rdpg/model.hpp"
#include "rdpg/types.hpp"

namespace rdpg {

// The blocks of the symmetric generator that the Lyapunov equation
// dP/dt = N P + P N determines, expressed in the basis [V, Vperp]. The
// null-null block is dynamically irrelevant (N X does not depend on it) and
// stays free.
struct LyapunovInversion {
  Matrix range_range;        // d x d symmetric
  Matrix cross;              // d x (n-d)
  bool null_null_free = true;
  Index null_dim = 0;
  SpectralDecomp basis;
  Matrix null_basis;         // Vperp used for the cross block
  double residual = 0.0;

  Index determined_count() const {
    const Index d = range_range.rows();
    return d * (d + 1) / 2 + d * null_dim;
  }

  // Any symmetric completion with these blocks; the null-null block is 0.
  Matrix assemble(const Matrix& null_null = Matrix()) const {
    const Matrix& v = basis.eigenvectors;
    Matrix n = v * range_range * v.transpose();
    if (null_dim > 0) {
      const Matrix c = v * cross * null_basis.transpose();
      n += c + c.transpose();
      if (null_null.size() > 0) n += null_basis * null_null * null_basis.transpose();
    }
    return symmetrize(n);
  }
};

inline LyapunovInversion lyapunov_invert(const SpectralDecomp& dec, const Matrix& pdot,
                                         double realizability_tol = tol::kRealizable) {
  const Index n = dec.eigenvectors.rows();
  const Index d = dec.eigenvectors.cols();
  if (pdot.rows() != n || pdot.cols() != n)
    throw DimensionMismatch("lyapunov_invert: Pdot shape must match decomposition");
  if (!is_symmetric(pdot)) throw DimensionMismatch("lyapunov_invert: Pdot must be symmetric");
  const double lmax = dec.eigenvalues(0);
  if (!(dec.eigenvalues(d - 1) > 0.0) || dec.eigenvalues(d - 1) < tol::kGramCondRel * lmax)
    throw RankDeficient("lyapunov_invert: trailing eigenvalue too small");

  const Matrix& v = dec.eigenvectors;
  const Matrix vperp = orthogonal_complement(v);
  if (vperp.cols() > 0) {
    const double nullnull = (vperp.transpose() * pdot * vperp).norm();
    if (nullnull > realizability_tol * std::max(1e-300, pdot.norm()))
      throw NotRealizable("lyapunov_invert: null-null block norm " + std::to_string(nullnull) +
                          " exceeds tolerance");
  }

  LyapunovInversion inv;
  inv.basis = dec;
  inv.null_basis = vperp;
  inv.null_dim = vperp.cols();

  const Matrix a = symmetrize(v.transpose() * pdot * v);
  inv.range_range.resize(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      inv.range_range(i, j) = a(i, j) / (dec.eigenvalues(i) + dec.eigenvalues(j));

  double num = 0.0;
  if (inv.null_dim > 0) {
    const Matrix b = v.transpose() * pdot * vperp;
    inv.cross.resize(d, inv.null_dim);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < inv.null_dim; ++j) inv.cross(i, j) = b(i, j) / dec.eigenvalues(i);
    Matrix cross_recon = inv.cross;
    for (Index i = 0; i < d; ++i) cross_recon.row(i) *= dec.eigenvalues(i);
    num += (cross_recon - b).squaredNorm();
  } else {
    inv.cross.resize(d, 0);
  }
  Matrix range_recon(d, d);
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j)
      range_recon(i, j) = inv.range_range(i, j) * (dec.eigenvalues(i) + dec.eigenvalues(j));
  num += (range_recon - a).squaredNorm();
  inv.residual = std::sqrt(num) / std::max(1e-300, pdot.norm());
  return inv;
}

struct PolynomialFit {
  Vector coeffs;
  double relative_residual = 0.0;
  double condition_number = 0.0;
  bool ill_conditioned = false;  // condition_number > 1e12; reported, not thrown
};

namespace detail {

// Inner product over the upper triangle (diagonal included) of two
// symmetric matrices.
inline double upper_dot(const Matrix& a, const Matrix& b) {
  return 0.5 * (a.cwiseProduct(b).sum() + a.diagonal().dot(b.diagonal()));
}

}  // namespace detail

// Least squares for the coefficients of dP/dt = sum_k alpha_k 2 P^{k+1}
// from a probability trajectory: central-difference velocities at interior
// grid points regressed on the power basis. The design can become
// Vandermonde-like in the eigenvalues, so the condition number is part of
// the result.
inline PolynomialFit fit_polynomial_coeffs(const Trajectory& p_traj, Index degree) {
  if (p_traj.kind != TrajectoryKind::probability)
    throw DimensionMismatch("fit_polynomial_coeffs: need a probability trajectory");
  if (degree < 0) throw Error("fit_polynomial_coeffs: degree must be >= 0");
  const Index frames = p_traj.length();
  if (frames < std::max<Index>(3, degree + 2))
    throw InsufficientSamples("fit_polynomial_coeffs: need at least K+2 (and >= 3) time points");
  const double dt = p_traj.step;
  if (!(dt > 0.0)) throw Error("fit_polynomial_coeffs: invalid step");

  const Index k = degree + 1;
  Matrix gram = Matrix::Zero(k, k);
  Vector rhs = Vector::Zero(k);
  double ynorm_sq = 0.0;

  std::vector<Matrix> basis(static_cast<std::size_t>(k));
  for (Index t = 1; t + 1 < frames; ++t) {
    const Matrix& p = p_traj.states[static_cast<std::size_t>(t)];
    const Matrix pdot = (p_traj.states[static_cast<std::size_t>(t + 1)] -
                         p_traj.states[static_cast<std::size_t>(t - 1)]) /
                        (2.0 * dt);
    Matrix power = p;  // P^{k+1} for k = 0
    for (Index a = 0; a < k; ++a) {
      if (a > 0) power = (power * p).eval();
      basis[static_cast<std::size_t>(a)] = 2.0 * power;
    }
    for (Index a = 0; a < k; ++a) {
      rhs(a) += detail::upper_dot(basis[static_cast<std::size_t>(a)], pdot);
      for (Index b = a; b < k; ++b)
        gram(a, b) += detail::upper_dot(basis[static_cast<std::size_t>(a)],
                                        basis[static_cast<std::size_t>(b)]);
    }
    ynorm_sq += detail::upper_dot(pdot, pdot);
  }
  gram = symmetrize(gram);

  PolynomialFit fit;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  const double emax = eig.eigenvalues()(k - 1);
  const double emin = eig.eigenvalues()(0);
  fit.condition_number = (emin > 0.0 && emax > 0.0)
                             ? std::sqrt(emax / emin)
                             : std::numeric_limits<double>::infinity();
  fit.ill_conditioned = !(fit.condition_number <= tol::kIllConditioned);
  fit.coeffs = gram.ldlt().solve(rhs);
  const double res_sq =
      std::max(0.0, ynorm_sq - 2.0 * fit.coeffs.dot(rhs) + fit.coeffs.dot(gram * fit.coeffs));
  fit.relative_residual = ynorm_sq > 0.0 ? std::sqrt(res_sq / ynorm_sq) : 0.0;
  return fit;
}

// --- Vector-field regression on polynomial features --------------------------

struct FieldSample {
  Vector offset;
  Vector velocity;
};

// Ridge regression of velocity components on monomials of the offset up to
// a total degree. Degree 3 exactly contains the damped-spiral field, so on
// noiseless samples the fit is exact and alignment quality is the only
// bottleneck in the pipeline built on top.
struct FieldRegression {
  std::vector<std::vector<int>> powers;  // exponent tuple per feature
  Matrix coeffs;                         // features x d
  Index dim = 0;

  double feature(const Vector& delta, std::size_t idx) const {
    double v = 1.0;
    const auto& pw = powers[idx];
    for (Index c = 0; c < dim; ++c)
      for (int e = 0; e < pw[static_cast<std::size_t>(c)]; ++e) v *= delta(c);
    return v;
  }

  Vector evaluate(const Vector& delta) const {
    if (delta.size() != dim) throw DimensionMismatch("FieldRegression: offset dimension mismatch");
    Vector out = Vector::Zero(coeffs.cols());
    for (std::size_t f = 0; f < powers.size(); ++f)
      out += feature(delta, f) * coeffs.row(static_cast<Index>(f)).transpose();
    return out;
  }

  // Mean squared error of the fitted field against a reference field over a
  // test cloud.
  double mse_against(const std::function<Vector(const Vector&)>& reference,
                     std::span<const Vector> test_points) const {
    if (test_points.empty()) throw EmptyInput("mse_against: empty test cloud");
    double acc = 0.0;
    for (const Vector& p : test_points) acc += (evaluate(p) - reference(p)).squaredNorm();
    return acc / static_cast<double>(test_points.size());
  }
};

namespace detail {

inline void enumerate_monomials(Index dim, int max_degree, std::vector<int>& current,
                                std::vector<std::vector<int>>& out) {
  if (static_cast<Index>(current.size()) == dim) {
    out.push_back(current);
    return;
  }
  int used = 0;
  for (int e : current) used += e;
  for (int e = 0; e + used <= max_degree; ++e) {
    current.push_back(e);
    enumerate_monomials(dim, max_degree, current, out);
    current.pop_back();
  }
}

}  // namespace detail

inline FieldRegression fit_field_regression(std::span<const FieldSample> samples, int degree,
                                            double ridge = tol::kRidge) {
  if (samples.empty()) throw InsufficientSamples("fit_field_regression: no samples");
  const Index dim = samples.front().offset.size();
  FieldRegression reg;
  reg.dim = dim;
  std::vector<int> scratch;
  detail::enumerate_monomials(dim, degree, scratch, reg.powers);
  std::sort(reg.powers.begin(), reg.powers.end(), [](const auto& a, const auto& b) {
    int da = 0, db = 0;
    for (int e : a) da += e;
    for (int e : b) db += e;
    if (da != db) return da < db;
    return a > b;
  });
  const Index nf = static_cast<Index>(reg.powers.size());
  const Index ns = static_cast<Index>(samples.size());
  if (ns < nf)
    throw InsufficientSamples("fit_field_regression: " + std::to_string(ns) + " samples for " +
                              std::to_string(nf) + " features");

  Matrix f(ns, nf);
  Matrix y(ns, dim);
  reg.coeffs = Matrix::Zero(nf, dim);
  for (Index s = 0; s < ns; ++s) {
    const auto& sample = samples[static_cast<std::size_t>(s)];
    if (sample.offset.size() != dim || sample.velocity.size() != dim)
      throw DimensionMismatch("fit_field_regression: sample dimension mismatch");
    for (Index c = 0; c < nf; ++c)
      f(s, c) = reg.feature(sample.offset, static_cast<std::size_t>(c));
    y.row(s) = sample.velocity.transpose();
  }

  // Column scaling keeps the ridge penalty meaningful across monomial
  // magnitudes; folded back into the returned coefficients.
  Vector scale(nf);
  for (Index c = 0; c < nf; ++c) {
    const double rms = std::sqrt(f.col(c).squaredNorm() / static_cast<double>(ns));
    scale(c) = rms > 1e-12 ? rms : 1.0;
    f.col(c) /= scale(c);
  }
  Matrix gram = f.transpose() * f;
  gram.diagonal().array() += ridge;
  const Matrix sol = gram.ldlt().solve(f.transpose() * y);
  for (Index c = 0; c < nf; ++c) reg.coeffs.row(c) = sol.row(c) / scale(c);
  return reg;
}

// --- Fisher information -------------------------------------------------------

// Fisher information for polynomial dynamics parameters, computed through
// the stationary-eigenvector structure: eigenvalues and their parameter
// sensitivities evolve by scalar ODEs, and each snapshot contributes
// S' C(t) S with C the eigenpair weight matrix.
struct FisherReport {
  Matrix info_matrix;                      // k x k
  std::vector<Matrix> per_time;            // k x k per snapshot
  std::vector<std::vector<Matrix>> per_direction;  // [iota][gamma] -> k x k
  std::vector<Matrix> eig_sensitivities;   // d x k per snapshot
  Matrix lambda_trajectory;                // (T+1) x d
  std::vector<double> times;
  double crb_trace = 0.0;
  int rank = 0;
  bool weights_clipped = false;
};

namespace detail {

inline double poly_rhs(const Vector& theta, double l) {
  double acc = 0.0;
  for (Index k = theta.size() - 1; k >= 0; --k) acc = acc * l + theta(k);
  return 2.0 * acc * l;
}

inline double poly_rhs_dl(const Vector& theta, double l) {
  double acc = 0.0;  // sum theta_k (k+1) l^k, Horner from the top
  for (Index k = theta.size() - 1; k >= 0; --k)
    acc = acc * l + theta(k) * static_cast<double>(k + 1);
  return 2.0 * acc;
}

// C_{ig}(t) = sum_{i<j} U_ii U_ji U_ig U_jg / [P_ij (1 - P_ij)], with the
// probability clipped into [floor, 1-floor] inside the weight only.
inline Matrix fisher_weight_matrix(const Matrix& u, const Vector& lambda, double prob_floor,
                                   bool* clipped) {
  const Index n = u.rows();
  const Index d = u.cols();
  Matrix p = u * lambda.asDiagonal() * u.transpose();
  Matrix w(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      double pij = p(i, j);
      if (pij < prob_floor || pij > 1.0 - prob_floor) {
        if (clipped) *clipped = true;
        pij = std::clamp(pij, prob_floor, 1.0 - prob_floor);
      }
      w(i, j) = 1.0 / (pij * (1.0 - pij));
    }
  Matrix c(d, d);
  for (Index a = 0; a < d; ++a)
    for (Index b = a; b < d; ++b) {
      const Vector h = u.col(a).cwiseProduct(u.col(b));
      const double full = h.dot(w * h);
      double diag = 0.0;
      for (Index i = 0; i < n; ++i) diag += h(i) * h(i) * w(i, i);
      c(a, b) = c(b, a) = 0.5 * (full - diag);
    }
  return c;
}

}  // namespace detail

inline FisherReport fisher_polynomial(const SpectralDecomp& p0, const Vector& theta, Index t_count,
                                      double dt, double prob_floor = tol::kProbFloor,
                                      Index substeps = 8) {
  if (theta.size() < 1) throw Error("fisher_polynomial: need at least one parameter");
  if (t_count < 0) throw Error("fisher_polynomial: T must be >= 0");
  if (!(dt > 0.0)) throw Error("fisher_polynomial: dt must be positive");
  if (!(prob_floor > 0.0 && prob_floor < 0.5))
    throw Error("fisher_polynomial: prob_floor must be in (0, 0.5)");
  if ((p0.eigenvalues.array() <= 0.0).any())
    throw DegenerateSpectrum("fisher_polynomial: initial spectrum must be positive");
  require_simple_spectrum(p0.eigenvalues);

  const Index d = p0.eigenvalues.size();
  const Index k = theta.size();
  const Matrix& u = p0.eigenvectors;

  FisherReport rep;
  rep.info_matrix = Matrix::Zero(k, k);
  rep.lambda_trajectory.resize(t_count + 1, d);
  rep.per_direction.assign(static_cast<std::size_t>(d),
                           std::vector<Matrix>(static_cast<std::size_t>(d), Matrix::Zero(k, k)));

  Vector lambda = p0.eigenvalues;
  Matrix sens = Matrix::Zero(d, k);  // d lambda_i / d theta_a

  // Joint RHS for (lambda_i, s_i.): feedback through the linearized flow.
  const auto rhs = [&](double l, const Eigen::RowVectorXd& s, double& dl,
                       Eigen::RowVectorXd& ds) {
    dl = detail::poly_rhs(theta, l);
    const double fb = detail::poly_rhs_dl(theta, l);
    ds.resize(k);
    double power = l;  // l^{a+1}
    for (Index a = 0; a < k; ++a) {
      power = (a == 0) ? l : power * l;
      ds(a) = 2.0 * power + fb * s(a);
    }
  };

  const auto record_snapshot = [&](Index j) {
    rep.lambda_trajectory.row(j) = lambda.transpose();
    rep.eig_sensitivities.push_back(sens);
    rep.times.push_back(static_cast<double>(j) * dt);
    const Matrix c = detail::fisher_weight_matrix(u, lambda, prob_floor, &rep.weights_clipped);
    const Matrix contrib = sens.transpose() * c * sens;
    rep.per_time.push_back(contrib);
    rep.info_matrix += contrib;
    for (Index i = 0; i < d; ++i)
      for (Index g = 0; g < d; ++g)
        rep.per_direction[static_cast<std::size_t>(i)][static_cast<std::size_t>(g)] +=
            c(i, g) * sens.row(i).transpose() * sens.row(g);
  };

  record_snapshot(0);
  const double h = dt / static_cast<double>(substeps);
  for (Index j = 1; j <= t_count; ++j) {
    for (Index sub = 0; sub < substeps; ++sub) {
      for (Index i = 0; i < d; ++i) {
        const double l0 = lambda(i);
        const Eigen::RowVectorXd s0 = sens.row(i);
        double dl1, dl2, dl3, dl4;
        Eigen::RowVectorXd ds1, ds2, ds3, ds4;
        rhs(l0, s0, dl1, ds1);
        rhs(l0 + 0.5 * h * dl1, s0 + 0.5 * h * ds1, dl2, ds2);
        rhs(l0 + 0.5 * h * dl2, s0 + 0.5 * h * ds2, dl3, ds3);
        rhs(l0 + h * dl3, s0 + h * ds3, dl4, ds4);
        lambda(i) = l0 + h / 6.0 * (dl1 + 2.0 * dl2 + 2.0 * dl3 + dl4);
        sens.row(i) = s0 + h / 6.0 * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4);
        if (!std::isfinite(lambda(i)) || !sens.row(i).allFinite())
          throw NonFiniteState("fisher_polynomial: non-finite flow at snapshot " +
                               std::to_string(j));
      }
    }
    record_snapshot(j);
  }

  // CRB trace via pseudoinverse; rank recorded when directions are dead.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(rep.info_matrix));
  const double emax = eig.eigenvalues().cwiseAbs().maxCoeff();
  rep.rank = 0;
  rep.crb_trace = 0.0;
  for (Index a = 0; a < k; ++a) {
    const double e = eig.eigenvalues()(a);
    if (emax > 0.0 && e > tol::kPinvCutoff * emax) {
      ++rep.rank;
      rep.crb_trace += 1.0 / e;
    }
  }
  return rep;
}

// Independent closed form for linear dynamics (K = 0): the eigenvalue flow
// is a plain exponential and I(alpha0) = 4 sum_t t^2 sum_{i<j}
// P_ij(t) / (1 - P_ij(t)). Kept as a separate algebraic route for
// cross-checking the ODE machinery.
inline double linear_dynamics_fisher_closed_form(const Matrix& p0, double alpha0, Index t_count,
                                                 double dt, double prob_floor = tol::kProbFloor) {
  if (p0.rows() != p0.cols()) throw DimensionMismatch("closed form: P0 must be square");
  double total = 0.0;
  for (Index j = 0; j <= t_count; ++j) {
    const double t = static_cast<double>(j) * dt;
    const double scale = std::exp(2.0 * alpha0 * t);
    double inner = 0.0;
    for (Index i = 0; i < p0.rows(); ++i)
      for (Index l = i + 1; l < p0.cols(); ++l) {
        const double pij = std::clamp(scale * p0(i, l), prob_floor, 1.0 - prob_floor);
        inner += pij / (1.0 - pij);
      }
    total += 4.0 * t * t * inner;
  }
  return total;
}

struct CrbBound {
  double inv_diag = 0.0;    // (I^{-1})_aa
  double recip_diag = 0.0;  // 1 / I_aa
  double slack = 0.0;
};

struct CrbTable {
  std::vector<CrbBound> bounds;
  bool satisfied = false;
  int rank = 0;
};

// Per-parameter baseline (I^{-1})_aa >= 1/I_aa. Equality iff the parameter
// is uncorrelated with the rest.
inline CrbTable crb_baseline_check(const FisherReport& rep) {
  const Index k = rep.info_matrix.rows();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(rep.info_matrix));
  const double emax = eig.eigenvalues().cwiseAbs().maxCoeff();
  Vector inv_eigs = Vector::Zero(k);
  CrbTable table;
  table.rank = 0;
  for (Index a = 0; a < k; ++a) {
    const double e = eig.eigenvalues()(a);
    if (emax > 0.0 && e > tol::kPinvCutoff * emax) {
      inv_eigs(a) = 1.0 / e;
      ++table.rank;
    }
  }
  const Matrix pinv =
      eig.eigenvectors() * inv_eigs.asDiagonal() * eig.eigenvectors().transpose();
  table.satisfied = true;
  for (Index a = 0; a < k; ++a) {
    CrbBound row;
    row.inv_diag = pinv(a, a);
    row.recip_diag = rep.info_matrix(a, a) > 0.0 ? 1.0 / rep.info_matrix(a, a) : 0.0;
    row.slack = row.inv_diag - row.recip_diag;
    if (row.slack < -1e-9 * std::max(1.0, row.recip_diag)) table.satisfied = false;
    table.bounds.push_back(row);
  }
  return table;
}

}  // namespace rdpg
