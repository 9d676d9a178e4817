#include <catch2/catch_amalgamated.hpp>

#include "rdpg/alignment.hpp"
#include "rdpg/dynamics.hpp"
#include "rdpg/model.hpp"
#include "rdpg/observation.hpp"
#include "rdpg/stats.hpp"
#include "test_support.hpp"

using namespace rdpg;

namespace {

EmbeddingSeries series_from_trajectory(const Trajectory& traj) {
  std::vector<Matrix> frames(traj.states.begin(), traj.states.end());
  return make_series(std::move(frames), traj.times);
}

DynamicsSpec experiment_poly() {
  DynamicsSpec spec;
  spec.family = DynamicsFamily::polynomial;
  spec.coeffs = Eigen::Vector2d(-0.3, 0.003);
  return spec;
}

Matrix rotation2(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

}  // namespace

TEST_CASE("procrustes basics", "[alignment]") {
  Rng rng(606);
  const Matrix a = rng.gaussian_matrix(8, 3);
  SECTION("identical inputs give the identity") {
    REQUIRE((procrustes(a, a) - Matrix::Identity(3, 3)).norm() < tol::kOrthonormal);
  }
  SECTION("exact rotations are recovered") {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix q0 = rng.haar_orthogonal(3);
      const Matrix q = procrustes(a, a * q0);
      REQUIRE((q - q0).norm() < tol::kOrthonormal);
    }
  }
  SECTION("single-row cross-covariance is degenerate") {
    Matrix u(1, 2), v(1, 2);
    u << 1, 0;
    v << 0, 1;
    REQUIRE_THROWS_AS(procrustes(u, v), DegenerateCross);
  }
}

TEST_CASE("procrustes optimality against sampled perturbations", "[alignment]") {
  Rng rng(1001);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index d = 2 + static_cast<Index>(rng.uniform_index(2));
    const Matrix a = rng.gaussian_matrix(6, d);
    const Matrix b = rng.gaussian_matrix(6, d);
    const Matrix q = procrustes(a, b);
    const double best = (a * q - b).squaredNorm();
    for (int p = 0; p < 100; ++p) {
      Matrix alt;
      if (p % 2 == 0) {
        alt = rng.haar_orthogonal(d);
      } else {
        const Matrix k = 0.02 * test_support::random_skew(rng, d);
        // first-order rotation, re-orthonormalized
        Eigen::HouseholderQR<Matrix> qr(Matrix(q + q * k));
        alt = qr.householderQ() * Matrix::Identity(d, d);
        const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (Index c = 0; c < d; ++c)
          if (r(c, c) < 0) alt.col(c) = -alt.col(c);
      }
      REQUIRE(best <= (a * alt - b).squaredNorm() + 1e-9);
    }
  }
}

TEST_CASE("align_sequential recovers a rigid jittered series", "[alignment]") {
  Rng rng(42);
  const Matrix x = test_support::random_interior_config(rng, 9, 2);
  std::vector<Matrix> frames;
  std::vector<double> times;
  for (int t = 0; t < 12; ++t) {
    frames.push_back(x * rng.haar_orthogonal(2));
    times.push_back(0.1 * t);
  }
  const auto res = align_sequential(make_series(frames, times));
  for (const Matrix& f : res.aligned.embeddings)
    REQUIRE((f - res.aligned.embeddings.front()).norm() < tol::kOrthonormal * x.norm());
  REQUIRE(res.report.method == "sequential");
  REQUIRE(res.report.gauges.size() == 12);
}

TEST_CASE("align_sequential single frame and degenerate frame", "[alignment]") {
  Rng rng(43);
  const Matrix x = test_support::random_interior_config(rng, 5, 2);
  SECTION("single frame returns an identity report") {
    const auto res = align_sequential(make_series({x}, {0.0}));
    REQUIRE(res.report.gauges.size() == 1);
    REQUIRE((res.report.gauges[0] - Matrix::Identity(2, 2)).norm() == 0.0);
  }
  SECTION("degenerate cross covariance reports the frame index") {
    std::vector<Matrix> frames{x, Matrix::Zero(5, 2), x};
    try {
      align_sequential(make_series(frames, {0.0, 0.1, 0.2}));
      FAIL("expected DegenerateCross");
    } catch (const DegenerateCross& e) {
      REQUIRE(std::string(e.what()).find("frame 1") != std::string::npos);
    }
  }
}

TEST_CASE("align_anchor recovers gauges exactly on noiseless jittered data", "[alignment]") {
  Rng rng(71);
  const Matrix x = test_support::random_interior_config(rng, 10, 2);
  DynamicsSpec spec = experiment_poly();
  const std::vector<int> anchors{0, 3, 7};
  spec.anchor_mask = anchors;
  const Trajectory traj = integrate(spec, LatentConfig(x), 15, 0.05);
  EmbeddingSeries series = series_from_trajectory(traj);
  series = inject_gauge_jitter(series, 31007);
  const auto res = align_anchor(series, anchors, 0);
  const auto errs = trajectory_error(res.aligned, traj);
  for (double e : errs) REQUIRE(e < tol::kOrthonormal);
}

TEST_CASE("align_anchor raises on rank-deficient anchor sets", "[alignment]") {
  Rng rng(72);
  const Matrix x = test_support::random_interior_config(rng, 6, 2);
  std::vector<Matrix> frames{x, x};
  const auto series = make_series(frames, {0.0, 0.1});
  SECTION("one anchor in d = 2") {
    REQUIRE_THROWS_AS(align_anchor(series, {2}, 0), AnchorRankDeficient);
  }
  SECTION("collinear anchors") {
    Matrix xc = x;
    xc.row(1) = 2.0 * xc.row(0);
    xc.row(4) = 0.5 * xc.row(0);
    std::vector<Matrix> fr{xc, xc};
    REQUIRE_THROWS_AS(align_anchor(make_series(fr, {0.0, 0.1}), {0, 1, 4}, 0),
                      AnchorRankDeficient);
  }
  SECTION("empty anchor set") {
    REQUIRE_THROWS_AS(align_anchor(series, {}, 0), AnchorRankDeficient);
  }
}

TEST_CASE("align_anchor is reference-consistent", "[alignment]") {
  Rng rng(73);
  const Matrix x0 = test_support::random_interior_config(rng, 12, 2);
  DynamicsSpec spec = experiment_poly();
  const std::vector<int> anchors{1, 5, 9, 11};
  spec.anchor_mask = anchors;
  const Trajectory traj = integrate(spec, LatentConfig(x0), 10, 0.05);
  EmbeddingSeries series = inject_gauge_jitter(series_from_trajectory(traj), 2222);
  const auto err0 = trajectory_error(align_anchor(series, anchors, 0).aligned, traj);
  const auto err5 = trajectory_error(align_anchor(series, anchors, 5).aligned, traj);
  for (std::size_t t = 0; t < err0.size(); ++t)
    REQUIRE(err0[t] == Catch::Approx(err5[t]).margin(tol::kOrthonormal));
}

TEST_CASE("trajectory_error", "[alignment]") {
  Rng rng(81);
  const Matrix x0 = test_support::random_interior_config(rng, 10, 2);
  const Trajectory traj = integrate(experiment_poly(), LatentConfig(x0), 20, 0.05);
  SECTION("exact trajectory has zero error") {
    const auto errs = trajectory_error(series_from_trajectory(traj), traj);
    for (double e : errs) REQUIRE(e < 1e-12);
  }
  SECTION("a constant gauge is absorbed by the global alignment") {
    EmbeddingSeries series = series_from_trajectory(traj);
    const Matrix q = rng.haar_orthogonal(2);
    for (Matrix& f : series.embeddings) f = f * q;
    const auto errs = trajectory_error(series, traj);
    for (double e : errs) REQUIRE(e < 1e-12);
  }
  SECTION("a single rotated frame shows the analytic displacement") {
    EmbeddingSeries series = series_from_trajectory(traj);
    const double theta = 0.05;
    const std::size_t hit = 10;
    series.embeddings[hit] = series.embeddings[hit] * rotation2(theta);
    const auto errs = trajectory_error(series, traj);
    const double expected =
        2.0 * std::sin(theta / 2.0) * traj.states[hit].norm() / static_cast<double>(10);
    REQUIRE(errs[hit] == Catch::Approx(expected).epsilon(0.05));
    REQUIRE(errs[hit] > 10.0 * errs[hit - 1]);
  }
}

TEST_CASE("asymmetry_diagnostic detects time-varying gauges", "[alignment]") {
  Rng rng(91);
  const Matrix x0 = test_support::random_interior_config(rng, 10, 2);

  const auto diag_mean = [](const std::vector<double>& v) { return stats::mean(v); };

  SECTION("clean trajectories sit at the finite-difference floor") {
    const Trajectory coarse = integrate(experiment_poly(), LatentConfig(x0), 20, 0.05);
    const Trajectory fine = integrate(experiment_poly(), LatentConfig(x0), 40, 0.025);
    const double floor_coarse = diag_mean(asymmetry_diagnostic(series_from_trajectory(coarse), 0.05));
    const double floor_fine = diag_mean(asymmetry_diagnostic(series_from_trajectory(fine), 0.025));
    // second-order differences: halving dt divides the residual by about 4
    REQUIRE(floor_coarse / floor_fine > 2.5);
    REQUIRE(floor_coarse / floor_fine < 6.5);
  }

  SECTION("a rotating gauge produces the analytic contamination") {
    const Trajectory traj = integrate(experiment_poly(), LatentConfig(x0), 40, 0.05);
    for (double omega : {0.25, 0.5, 1.0}) {
      EmbeddingSeries series = series_from_trajectory(traj);
      for (std::size_t t = 0; t < series.embeddings.size(); ++t)
        series.embeddings[t] = series.embeddings[t] * rotation2(omega * series.times[t]);
      const auto diag = asymmetry_diagnostic(series, 0.05);
      // skew(G Omega) with Omega = omega J: norm = omega * tr(G) / sqrt(2)
      for (std::size_t t = 1; t + 1 < series.embeddings.size(); ++t) {
        const Matrix& frame = series.embeddings[t];
        const double expected = omega * (frame.transpose() * frame).trace() / std::sqrt(2.0);
        REQUIRE(diag[t - 1] == Catch::Approx(expected).epsilon(0.02));
      }
    }
  }

  SECTION("a frozen gauge is indistinguishable from none") {
    const Trajectory traj = integrate(experiment_poly(), LatentConfig(x0), 20, 0.05);
    const auto base = asymmetry_diagnostic(series_from_trajectory(traj), 0.05);
    EmbeddingSeries series = series_from_trajectory(traj);
    const Matrix s = rng.haar_orthogonal(2);
    for (Matrix& f : series.embeddings) f = f * s;
    const auto frozen = asymmetry_diagnostic(series, 0.05);
    for (std::size_t t = 0; t < base.size(); ++t)
      REQUIRE(frozen[t] == Catch::Approx(base[t]).margin(1e-12));
  }
}

TEST_CASE("anchor alignment does not accumulate error while sequential drifts upward",
          "[alignment][slow]") {
  // 20 seeds of a noisy experiment-1-like pipeline at reduced scale; the
  // sequential per-time error correlates positively with time.
  const int seeds = 20;
  int positive_trend = 0;
  std::vector<double> pooled_t, pooled_err;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng(derive_seed(907, {static_cast<std::uint64_t>(seed)}));
    const Matrix x0 = test_support::random_interior_config(rng, 60, 2);
    DynamicsSpec spec = experiment_poly();
    std::vector<int> anchors{0, 1, 2, 3, 4, 5, 6, 7};
    spec.anchor_mask = anchors;
    const Trajectory traj = integrate(spec, LatentConfig(x0), 80, 0.05);
    std::vector<Matrix> frames;
    for (Index t = 0; t < traj.length(); ++t) {
      const ProbMatrix p =
          probability_matrix(LatentConfig(traj.states[static_cast<std::size_t>(t)]));
      std::vector<GraphSample> samples;
      for (int s = 0; s < 2; ++s)
        samples.push_back(sample_adjacency(
            p, derive_seed(1213, {static_cast<std::uint64_t>(seed), static_cast<std::uint64_t>(t),
                                  static_cast<std::uint64_t>(s)})));
      frames.push_back(ase(average_adjacency(samples), 2));
    }
    const auto series = make_series(frames, traj.times);
    const auto seq_err = trajectory_error(align_sequential(series).aligned, traj);
    const auto anc_err = trajectory_error(align_anchor(series, anchors, 0).aligned, traj);

    std::vector<double> tgrid(seq_err.size());
    for (std::size_t t = 0; t < tgrid.size(); ++t) tgrid[t] = static_cast<double>(t);
    if (stats::spearman(tgrid, seq_err).rho > 0.0) ++positive_trend;
    for (std::size_t t = 0; t < tgrid.size(); ++t) {
      pooled_t.push_back(tgrid[t]);
      pooled_err.push_back(seq_err[t]);
    }
    // anchor error stays flat: no per-seed assert (noisy), checked pooled below
    const double amax = *std::max_element(anc_err.begin(), anc_err.end());
    const double amin = *std::min_element(anc_err.begin(), anc_err.end());
    REQUIRE(amax / amin < 4.0);
  }
  REQUIRE(positive_trend >= 17);  // sign check across seeds
  const auto pooled = stats::spearman(pooled_t, pooled_err);
  REQUIRE(pooled.rho > 0.0);
  REQUIRE(pooled.p_one_sided < 0.01);
}

TEST_CASE("noiseless anchor alignment is exact for any horizon", "[alignment]") {
  Rng rng(515);
  const Matrix x0 = test_support::random_interior_config(rng, 10, 2);
  DynamicsSpec spec = experiment_poly();
  const std::vector<int> anchors{0, 2, 4};
  spec.anchor_mask = anchors;
  for (Index horizon : {5, 40}) {
    const Trajectory traj = integrate(spec, LatentConfig(x0), horizon, 0.05);
    const EmbeddingSeries jittered =
        inject_gauge_jitter(series_from_trajectory(traj), 808 + static_cast<std::uint64_t>(horizon));
    const auto errs = trajectory_error(align_anchor(jittered, anchors, 0).aligned, traj);
    for (double e : errs) REQUIRE(e < 1e-10);
  }
}

TEST_CASE("gauge contamination identifiability, both directions", "[alignment]") {
  // asymmetry ~ 0 (finite-difference floor) iff the gauge is constant
  Rng rng(99);
  const Matrix x0 = test_support::random_interior_config(rng, 10, 2);
  const Trajectory traj = integrate(experiment_poly(), LatentConfig(x0), 40, 0.05);
  const double floor_level =
      stats::mean(asymmetry_diagnostic(series_from_trajectory(traj), 0.05));

  // constant gauge: diagnostic equals the floor
  EmbeddingSeries constant_gauge = series_from_trajectory(traj);
  const Matrix s = rng.haar_orthogonal(2);
  for (Matrix& f : constant_gauge.embeddings) f = f * s;
  REQUIRE(stats::mean(asymmetry_diagnostic(constant_gauge, 0.05)) ==
          Catch::Approx(floor_level).margin(1e-12));

  // time-varying gauge: diagnostic rises far above the floor
  EmbeddingSeries varying = series_from_trajectory(traj);
  for (std::size_t t = 0; t < varying.embeddings.size(); ++t)
    varying.embeddings[t] = varying.embeddings[t] * rotation2(0.3 * varying.times[t]);
  REQUIRE(stats::mean(asymmetry_diagnostic(varying, 0.05)) > 50.0 * floor_level);
}
