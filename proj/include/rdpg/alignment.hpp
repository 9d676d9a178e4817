#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rdpg/dynamics.hpp"
#include "rdpg/errors.hpp"
#include "rdpg/observation.hpp"
#include "rdpg/types.hpp"

namespace rdpg {

// argmin over orthogonal Q of ||A Q - B||_F, via the SVD of A'B. The
// minimizer may include a reflection; the gauge group here is all of O(d).
inline Matrix procrustes(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch("procrustes: shapes must agree");
  const Matrix cross = a.transpose() * b;
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double scale = a.norm() * b.norm();
  if (svd.singularValues()(cross.cols() - 1) <= tol::kProcrustesDegenerate * scale)
    throw DegenerateCross("procrustes: cross-covariance is singular, rotation underdetermined");
  return svd.matrixU() * svd.matrixV().transpose();
}

struct AlignmentReport {
  std::vector<Matrix> gauges;          // Q_t applied to frame t
  std::vector<double> per_time_error;  // filled via trajectory_error
  std::string method;
  std::vector<int> anchor_set;
};

struct AlignmentResult {
  EmbeddingSeries aligned;
  AlignmentReport report;
};

inline AlignmentResult align_none(const EmbeddingSeries& series) {
  AlignmentResult res;
  res.aligned = series;
  res.report.method = "none";
  res.report.gauges.assign(series.embeddings.size(), Matrix::Identity(series.d, series.d));
  return res;
}

// Chains pairwise Procrustes: frame t+1 is rotated onto the already-aligned
// frame t, so per-step rotation errors accumulate along the trajectory.
inline AlignmentResult align_sequential(const EmbeddingSeries& series) {
  if (series.frame_count() < 1) throw EmptyInput("align_sequential: empty series");
  AlignmentResult res;
  res.aligned = series;
  res.report.method = "sequential";
  res.report.gauges.assign(series.embeddings.size(), Matrix::Identity(series.d, series.d));
  for (Index t = 1; t < series.frame_count(); ++t) {
    Matrix q;
    try {
      q = procrustes(series.embeddings[static_cast<std::size_t>(t)],
                     res.aligned.embeddings[static_cast<std::size_t>(t - 1)]);
    } catch (const DegenerateCross& e) {
      throw DegenerateCross(std::string(e.what()) + " (frame " + std::to_string(t) + ")");
    }
    res.report.gauges[static_cast<std::size_t>(t)] = q;
    res.aligned.embeddings[static_cast<std::size_t>(t)] =
        series.embeddings[static_cast<std::size_t>(t)] * q;
  }
  return res;
}

// Aligns every frame independently to the reference frame using the anchor
// rows only. No gauge is ever propagated, so there is nothing to
// accumulate; holonomy and trajectory length are irrelevant.
inline AlignmentResult align_anchor(const EmbeddingSeries& series, const std::vector<int>& anchors,
                                    Index ref_index = 0) {
  if (series.frame_count() < 1) throw EmptyInput("align_anchor: empty series");
  if (anchors.empty()) throw AnchorRankDeficient("align_anchor: need at least one anchor");
  if (ref_index < 0 || ref_index >= series.frame_count())
    throw Error("align_anchor: reference index out of range");
  const Index n = series.embeddings.front().rows();
  for (int i : anchors)
    if (i < 0 || i >= n) throw Error("align_anchor: anchor index out of range");

  const auto anchor_rows = [&](const Matrix& frame) {
    Matrix block(static_cast<Index>(anchors.size()), series.d);
    for (std::size_t k = 0; k < anchors.size(); ++k) block.row(static_cast<Index>(k)) = frame.row(anchors[k]);
    return block;
  };

  const Matrix ref_block = anchor_rows(series.embeddings[static_cast<std::size_t>(ref_index)]);
  Eigen::JacobiSVD<Matrix> svd(ref_block);
  const Vector& sv = svd.singularValues();
  if (static_cast<Index>(anchors.size()) < series.d ||
      sv(series.d - 1) < tol::kAnchorCond * sv(0))
    throw AnchorRankDeficient("align_anchor: anchor block at reference frame has numerical rank < d");

  AlignmentResult res;
  res.aligned = series;
  res.report.method = "anchor";
  res.report.anchor_set = anchors;
  res.report.gauges.assign(series.embeddings.size(), Matrix::Identity(series.d, series.d));
  for (Index t = 0; t < series.frame_count(); ++t) {
    if (t == ref_index) continue;
    const Matrix q = procrustes(anchor_rows(series.embeddings[static_cast<std::size_t>(t)]), ref_block);
    res.report.gauges[static_cast<std::size_t>(t)] = q;
    res.aligned.embeddings[static_cast<std::size_t>(t)] =
        series.embeddings[static_cast<std::size_t>(t)] * q;
  }
  return res;
}

// err(t) = (1/n) ||Xhat_t - X_t Q*||_F where Q* is the single best gauge
// for the whole trajectory (Procrustes on the time-concatenated stack).
// A constant gauge offset on all frames therefore costs nothing.
inline std::vector<double> trajectory_error(const EmbeddingSeries& aligned,
                                            const Trajectory& truth) {
  if (truth.kind != TrajectoryKind::latent)
    throw DimensionMismatch("trajectory_error: need a latent-space trajectory");
  if (aligned.frame_count() != truth.length())
    throw DimensionMismatch("trajectory_error: frame counts differ");
  const Index n = truth.states.front().rows();
  const Index d = truth.states.front().cols();
  if (aligned.embeddings.front().rows() != n || aligned.d != d)
    throw DimensionMismatch("trajectory_error: shapes differ");
  for (Index t = 0; t < truth.length(); ++t)
    if (std::abs(aligned.times[static_cast<std::size_t>(t)] -
                 truth.times[static_cast<std::size_t>(t)]) > 1e-9)
      throw DimensionMismatch("trajectory_error: time grids differ");

  const Index frames = truth.length();
  Matrix truth_stack(frames * n, d), est_stack(frames * n, d);
  for (Index t = 0; t < frames; ++t) {
    truth_stack.middleRows(t * n, n) = truth.states[static_cast<std::size_t>(t)];
    est_stack.middleRows(t * n, n) = aligned.embeddings[static_cast<std::size_t>(t)];
  }
  const Matrix qstar = procrustes(truth_stack, est_stack);

  std::vector<double> err(static_cast<std::size_t>(frames));
  for (Index t = 0; t < frames; ++t)
    err[static_cast<std::size_t>(t)] =
        (aligned.embeddings[static_cast<std::size_t>(t)] -
         truth.states[static_cast<std::size_t>(t)] * qstar)
            .norm() /
        static_cast<double>(n);
  return err;
}

// ||skew(X_t' V_t)||_F with V_t the central-difference velocity. Zero (to
// finite-difference order) exactly when the trajectory is explained by a
// symmetric generator; a time-varying gauge S(t) adds the skew term
// G * S'Sdot that no symmetric dynamics can absorb.
inline std::vector<double> asymmetry_diagnostic(const EmbeddingSeries& series, double dt) {
  if (series.frame_count() < 2) throw EmptyInput("asymmetry_diagnostic: need >= 2 frames");
  std::vector<double> out;
  for (Index t = 1; t + 1 < series.frame_count(); ++t) {
    const Matrix v = (series.embeddings[static_cast<std::size_t>(t + 1)] -
                      series.embeddings[static_cast<std::size_t>(t - 1)]) /
                     (2.0 * dt);
    const Matrix m = series.embeddings[static_cast<std::size_t>(t)].transpose() * v;
    out.push_back(skew_part(m).norm());
  }
  return out;
}

}  // namespace rdpg
