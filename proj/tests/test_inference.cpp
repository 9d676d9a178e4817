#include <catch2/catch_amalgamated.hpp>

#include "rdpg/dynamics.hpp"
#include "rdpg/geometry.hpp"
#include "rdpg/inference.hpp"
#include "rdpg/model.hpp"
#include "test_support.hpp"

using namespace rdpg;

namespace {

Trajectory exact_p_trajectory(const DynamicsSpec& spec, const Matrix& x0, Index steps, double dt) {
  return probability_trajectory(integrate(spec, LatentConfig(x0), steps, dt));
}

}  // namespace

TEST_CASE("lyapunov_invert on linear dynamics", "[inference]") {
  Rng rng(314);
  const Matrix xm = test_support::random_interior_config(rng, 6, 2);
  const ProbMatrix p = probability_matrix(LatentConfig(xm));
  const auto dec = spectral_decompose(p, 2, 1e-14);
  const double a = 0.37;
  const Matrix pdot = 2.0 * a * p.entries;  // N = a I
  const auto inv = lyapunov_invert(dec, pdot);
  REQUIRE((inv.range_range - a * Matrix::Identity(2, 2)).norm() < 1e-10);
  REQUIRE(inv.cross.norm() < 1e-10);
  REQUIRE(inv.null_null_free);
  REQUIRE(inv.null_dim == 4);
  REQUIRE(inv.determined_count() == 2 * 6 - 1);  // nd - d(d-1)/2
}

TEST_CASE("lyapunov_invert round trip against the block oracle", "[inference]") {
  Rng rng(159);
  for (int trial = 0; trial < 200; ++trial) {
    const Index d = 1 + static_cast<Index>(rng.uniform_index(4));
    const Index n = d + 1 + static_cast<Index>(rng.uniform_index(12 - d));
    const Matrix xm = test_support::random_interior_config(rng, n, d);
    const LatentConfig x(xm);
    const Matrix nsym = test_support::random_symmetric(rng, n);
    const Matrix pdot = induced_p_velocity(nsym * xm, x);
    const auto dec = spectral_decompose(probability_matrix(x), d, 1e-14);
    const auto inv = lyapunov_invert(dec, pdot);

    const Matrix& v = dec.eigenvectors;
    const Matrix range_oracle = v.transpose() * nsym * v;
    REQUIRE((inv.range_range - range_oracle).norm() <=
            1e-8 * std::max(1.0, range_oracle.norm()));
    if (inv.null_dim > 0) {
      const Matrix cross_oracle = v.transpose() * nsym * inv.null_basis;
      REQUIRE((inv.cross - cross_oracle).norm() <= 1e-8 * std::max(1.0, cross_oracle.norm()));
    }
    REQUIRE(inv.residual <= 1e-10);

    // rebuilt generator reproduces Pdot through the Lyapunov equation
    const Matrix rebuilt = inv.assemble();
    const Matrix p = reconstruct(dec);
    REQUIRE((rebuilt * p + p * rebuilt - pdot).norm() <= 1e-8 * std::max(1.0, pdot.norm()));
  }
}

TEST_CASE("lyapunov_invert zero velocity and realizability", "[inference]") {
  Rng rng(661);
  const Matrix xm = test_support::random_interior_config(rng, 7, 2);
  const auto dec = spectral_decompose(probability_matrix(LatentConfig(xm)), 2, 1e-14);
  SECTION("zero maps to zero") {
    const auto inv = lyapunov_invert(dec, Matrix::Zero(7, 7));
    REQUIRE(inv.range_range.norm() == 0.0);
    REQUIRE(inv.cross.norm() == 0.0);
  }
  SECTION("null-null energy raises NotRealizable") {
    const Matrix vperp = orthogonal_complement(dec.eigenvectors);
    const Matrix c = test_support::random_symmetric(rng, vperp.cols());
    REQUIRE_THROWS_AS(lyapunov_invert(dec, Matrix(vperp * c * vperp.transpose())), NotRealizable);
  }
}

TEST_CASE("null-null modifications never touch the dynamics", "[inference]") {
  Rng rng(662);
  for (int trial = 0; trial < 50; ++trial) {
    const Index d = 1 + static_cast<Index>(rng.uniform_index(3));
    const Index n = d + 2 + static_cast<Index>(rng.uniform_index(8));
    const Matrix xm = test_support::random_interior_config(rng, n, d);
    const LatentConfig x(xm);
    const Matrix nsym = test_support::random_symmetric(rng, n);
    const Matrix pdot = induced_p_velocity(nsym * xm, x);
    const auto dec = spectral_decompose(probability_matrix(x), d, 1e-14);
    const auto inv = lyapunov_invert(dec, pdot);
    const Matrix base = inv.assemble();
    const Matrix c = test_support::random_symmetric(rng, inv.null_dim);
    const Matrix modified = inv.assemble(c);
    const Matrix xc = dec.eigenvectors * dec.eigenvalues.cwiseSqrt().asDiagonal();
    REQUIRE(((modified - base) * xc).norm() <= tol::kAlgebraic * (1.0 + c.norm() * xc.norm()));
  }
}

TEST_CASE("fit_polynomial_coeffs on noiseless trajectories", "[inference]") {
  Rng rng(84);
  const Matrix x0 = test_support::random_interior_config(rng, 20, 2);
  DynamicsSpec spec;
  spec.family = DynamicsFamily::polynomial;
  spec.coeffs = Eigen::Vector2d(-0.3, 0.003);
  SECTION("experiment coefficients within the finite-difference bias bound") {
    const Trajectory ptraj = exact_p_trajectory(spec, x0, 50, 0.05);
    const auto fit = fit_polynomial_coeffs(ptraj, 1);
    REQUIRE(fit.coeffs(0) == Catch::Approx(-0.3).margin(1e-3));
    REQUIRE(fit.coeffs(1) == Catch::Approx(0.003).margin(1e-3));
    REQUIRE(fit.relative_residual < 1e-3);
    REQUIRE_FALSE(fit.ill_conditioned);
    REQUIRE(fit.condition_number > 1.0);
  }
  SECTION("zero dynamics fit to zero") {
    DynamicsSpec zero;
    zero.family = DynamicsFamily::polynomial;
    zero.coeffs = Vector::Zero(1);
    const Trajectory ptraj = exact_p_trajectory(zero, x0, 10, 0.05);
    const auto fit = fit_polynomial_coeffs(ptraj, 1);
    REQUIRE(fit.coeffs.cwiseAbs().maxCoeff() < 1e-12);
  }
  SECTION("too few time points") {
    Trajectory short_traj = exact_p_trajectory(spec, x0, 2, 0.05);
    short_traj.states.resize(2);
    short_traj.times.resize(2);
    REQUIRE_THROWS_AS(fit_polynomial_coeffs(short_traj, 1), InsufficientSamples);
  }
}

TEST_CASE("fit_field_regression", "[inference]") {
  Rng rng(2026);
  DynamicsSpec spec;
  spec.family = DynamicsFamily::damped_spiral;
  spec.gamma = 0.3;
  spec.beta = -0.5;
  spec.omega = 1.0;
  const Matrix j = spiral_rotation_generator();
  const auto truth = [&](const Vector& delta) {
    return Vector((-spec.gamma + spec.beta * delta.squaredNorm()) * delta +
                  spec.omega * (j * delta));
  };

  SECTION("the spiral field is exactly representable at degree 3") {
    std::vector<FieldSample> samples;
    for (int s = 0; s < 400; ++s) {
      FieldSample fs;
      fs.offset.resize(3);
      for (Index c = 0; c < 3; ++c) fs.offset(c) = rng.uniform(-0.3, 0.3);
      fs.velocity = truth(fs.offset);
      samples.push_back(std::move(fs));
    }
    const auto reg = fit_field_regression(samples, 3);
    std::vector<Vector> cloud(500);
    for (auto& p : cloud) {
      p.resize(3);
      for (Index c = 0; c < 3; ++c) p(c) = rng.uniform(-0.3, 0.3);
    }
    REQUIRE(reg.mse_against(truth, cloud) < 1e-10);
  }
  SECTION("zero velocities give zero coefficients and the null-model MSE") {
    std::vector<FieldSample> samples;
    for (int s = 0; s < 100; ++s) {
      FieldSample fs;
      fs.offset.resize(3);
      for (Index c = 0; c < 3; ++c) fs.offset(c) = rng.uniform(-0.3, 0.3);
      fs.velocity = Vector::Zero(3);
      samples.push_back(std::move(fs));
    }
    const auto reg = fit_field_regression(samples, 3);
    REQUIRE(reg.coeffs.cwiseAbs().maxCoeff() < 1e-12);
    std::vector<Vector> cloud(200);
    double mean_field_sq = 0.0;
    for (auto& p : cloud) {
      p.resize(3);
      for (Index c = 0; c < 3; ++c) p(c) = rng.uniform(-0.3, 0.3);
      mean_field_sq += truth(p).squaredNorm();
    }
    mean_field_sq /= 200.0;
    REQUIRE(reg.mse_against(truth, cloud) == Catch::Approx(mean_field_sq).epsilon(1e-12));
  }
  SECTION("sample count below the feature count throws") {
    std::vector<FieldSample> samples(5);
    for (auto& fs : samples) {
      fs.offset = Vector::Zero(3);
      fs.velocity = Vector::Zero(3);
    }
    REQUIRE_THROWS_AS(fit_field_regression(samples, 3), InsufficientSamples);
  }
}

TEST_CASE("fisher_polynomial linear case matches the closed form", "[inference]") {
  Rng rng(404);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 10 + static_cast<Index>(rng.uniform_index(15));
    const Matrix xm = test_support::random_interior_config(rng, n, 2);
    const ProbMatrix p = probability_matrix(LatentConfig(xm));
    const auto dec = spectral_decompose(p, 2, 1e-14);
    const double alpha0 = -rng.uniform(0.05, 0.4);
    const auto rep = fisher_polynomial(dec, Vector::Constant(1, alpha0), 30, 0.05);
    const double closed = linear_dynamics_fisher_closed_form(p.entries, alpha0, 30, 0.05);
    REQUIRE(rep.info_matrix(0, 0) == Catch::Approx(closed).epsilon(1e-6));
  }
}

TEST_CASE("fisher_polynomial structure", "[inference]") {
  Rng rng(505);
  const Matrix xm = test_support::random_interior_config(rng, 15, 2);
  const auto dec = spectral_decompose(probability_matrix(LatentConfig(xm)), 2, 1e-14);
  Vector theta(2);
  theta << -0.3, 0.003;

  SECTION("T = 0 gives a zero matrix") {
    const auto rep = fisher_polynomial(dec, theta, 0, 0.05);
    REQUIRE(rep.info_matrix.norm() == 0.0);
    REQUIRE(rep.crb_trace == 0.0);
    REQUIRE(rep.rank == 0);
  }
  SECTION("the matrix is symmetric PSD and per-direction parts add up") {
    const auto rep = fisher_polynomial(dec, theta, 20, 0.05);
    REQUIRE(is_symmetric(rep.info_matrix, 1e-10));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(rep.info_matrix);
    REQUIRE(eig.eigenvalues().minCoeff() >= -1e-10 * rep.info_matrix.trace());
    Matrix sum = Matrix::Zero(2, 2);
    for (Index i = 0; i < 2; ++i)
      for (Index g = 0; g < 2; ++g) sum += rep.per_direction[i][g];
    REQUIRE((sum - rep.info_matrix).norm() < 1e-8 * rep.info_matrix.norm());
    Matrix time_sum = Matrix::Zero(2, 2);
    for (const auto& c : rep.per_time) time_sum += c;
    REQUIRE((time_sum - rep.info_matrix).norm() < 1e-10 * rep.info_matrix.norm());
  }
  SECTION("doubling T scales the linear-case information by about 8") {
    const Vector a0 = Vector::Constant(1, -0.01);
    const double i1 = fisher_polynomial(dec, a0, 40, 0.05).info_matrix(0, 0);
    const double i2 = fisher_polynomial(dec, a0, 80, 0.05).info_matrix(0, 0);
    REQUIRE(i2 / i1 == Catch::Approx(8.0).epsilon(0.2));
  }
  SECTION("CRB trace decreases as T grows") {
    double prev = std::numeric_limits<double>::infinity();
    for (Index t : {10, 20, 40, 80}) {
      const double crb = fisher_polynomial(dec, theta, t, 0.05).crb_trace;
      REQUIRE(crb < prev);
      prev = crb;
    }
  }
  SECTION("degenerate spectra are rejected") {
    SpectralDecomp fake = dec;
    fake.eigenvalues(1) = fake.eigenvalues(0) * (1.0 - 1e-9);
    REQUIRE_THROWS_AS(fisher_polynomial(fake, theta, 5, 0.05), DegenerateSpectrum);
  }
}

TEST_CASE("sensitivity ODE matches finite differences of the eigenvalue flow", "[inference]") {
  Rng rng(909);
  const Matrix xm = test_support::random_interior_config(rng, 12, 2);
  const auto dec = spectral_decompose(probability_matrix(LatentConfig(xm)), 2, 1e-14);
  Vector theta(2);
  theta << -0.3, 0.003;
  const Index T = 20;
  const double dt = 0.05;
  const auto rep = fisher_polynomial(dec, theta, T, dt);

  const double h = 1e-6;
  for (Index a = 0; a < 2; ++a) {
    Vector tp = theta, tm = theta;
    tp(a) += h;
    tm(a) -= h;
    // finer steps in the scalar flow keep its own error out of the comparison
    const auto fp = eigenvalue_flow(tp, dec.eigenvalues, T * 4, dt / 4.0);
    const auto fm = eigenvalue_flow(tm, dec.eigenvalues, T * 4, dt / 4.0);
    for (Index snap : {T / 2, T}) {
      for (Index i = 0; i < 2; ++i) {
        const double fd = (fp.values(snap * 4, i) - fm.values(snap * 4, i)) / (2.0 * h);
        const double ode = rep.eig_sensitivities[static_cast<std::size_t>(snap)](i, a);
        REQUIRE(ode == Catch::Approx(fd).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("spectral gap controls the trailing-direction information", "[inference]") {
  // two-point slope sanity of the delta^{a+b+2} law for (a,b) = (1,1)
  Rng rng(606);
  Vector theta(2);
  theta << -0.1, 0.01;
  const auto dd_contrib = [&](double spread) {
    Matrix x(40, 2);
    for (Index i = 0; i < 40; ++i) {
      const double angle = std::numbers::pi / 4.0 + spread * (rng.uniform01() - 0.5);
      const double r = 0.5 + 0.4 * rng.uniform01();
      x(i, 0) = r * std::cos(angle);
      x(i, 1) = r * std::sin(angle);
    }
    const auto dec = spectral_decompose(probability_matrix(LatentConfig(x)), 2, 1e-15);
    const auto rep = fisher_polynomial(dec, theta, 10, 0.05);
    return std::pair<double, double>(dec.eigenvalues(1), rep.per_direction[1][1](1, 1));
  };
  const auto [d1, c1] = dd_contrib(0.6);
  const auto [d2, c2] = dd_contrib(0.06);
  const double slope = std::log(c1 / c2) / std::log(d1 / d2);
  REQUIRE(slope == Catch::Approx(4.0).margin(0.5));
}

TEST_CASE("crb_baseline_check", "[inference]") {
  SECTION("diagonal information gives zero slack") {
    FisherReport rep;
    rep.info_matrix = Matrix::Zero(2, 2);
    rep.info_matrix.diagonal() << 4.0, 9.0;
    const auto table = crb_baseline_check(rep);
    REQUIRE(table.satisfied);
    REQUIRE(table.rank == 2);
    REQUIRE(table.bounds[0].slack == Catch::Approx(0.0).margin(1e-14));
    REQUIRE(table.bounds[0].inv_diag == Catch::Approx(0.25));
    REQUIRE(table.bounds[1].recip_diag == Catch::Approx(1.0 / 9.0));
  }
  SECTION("correlated parameters give strictly positive slack") {
    FisherReport rep;
    rep.info_matrix.resize(2, 2);
    rep.info_matrix << 2.0, 1.2, 1.2, 1.5;
    const auto table = crb_baseline_check(rep);
    REQUIRE(table.satisfied);
    const Matrix inv = rep.info_matrix.inverse();
    for (int a = 0; a < 2; ++a) {
      REQUIRE(table.bounds[a].inv_diag == Catch::Approx(inv(a, a)).epsilon(1e-12));
      REQUIRE(table.bounds[a].slack > 1e-3);
    }
  }
  SECTION("pipeline information satisfies the baseline") {
    Rng rng(707);
    const Matrix xm = test_support::random_interior_config(rng, 15, 2);
    const auto dec = spectral_decompose(probability_matrix(LatentConfig(xm)), 2, 1e-14);
    Vector theta(2);
    theta << -0.3, 0.003;
    const auto rep = fisher_polynomial(dec, theta, 25, 0.05);
    const auto table = crb_baseline_check(rep);
    REQUIRE(table.satisfied);
    REQUIRE(table.rank == 2);
  }
}
