#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rdpg/errors.hpp"
#include "rdpg/model.hpp"
#include "rdpg/rng.hpp"
#include "rdpg/types.hpp"

namespace rdpg {

struct GraphSample {
  Matrix adjacency;  // symmetric 0/1, diagonal sampled
  std::uint64_t seed = 0;
  double source_time = 0.0;
};

// A_ij ~ Bernoulli(P_ij) for i <= j, mirrored. The diagonal is sampled, not
// zeroed, so E[A] = P exactly and the expectation stays on the rank-d
// manifold.
inline GraphSample sample_adjacency(const ProbMatrix& p, std::uint64_t seed,
                                    double source_time = 0.0) {
  const Index n = p.n();
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) {
      const double v = p.entries(i, j);
      if (v < -tol::kAlgebraic || v > 1.0 + tol::kAlgebraic)
        throw InvalidProbability("sample_adjacency: entry (" + std::to_string(i) + "," +
                                 std::to_string(j) + ") = " + std::to_string(v));
    }
  Rng rng(seed);
  GraphSample sample;
  sample.seed = seed;
  sample.source_time = source_time;
  sample.adjacency.setZero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) {
      const double a = rng.bernoulli(p.entries(i, j)) ? 1.0 : 0.0;
      sample.adjacency(i, j) = a;
      sample.adjacency(j, i) = a;
    }
  return sample;
}

inline Matrix average_adjacency(std::span<const GraphSample> samples) {
  if (samples.empty()) throw EmptyInput("average_adjacency: no samples");
  Matrix acc = samples.front().adjacency;
  for (std::size_t k = 1; k < samples.size(); ++k) {
    if (samples[k].adjacency.rows() != acc.rows())
      throw DimensionMismatch("average_adjacency: sample shapes differ");
    acc += samples[k].adjacency;
  }
  return acc / static_cast<double>(samples.size());
}

// Adjacency spectral embedding: top-d eigenpairs by magnitude with
// |lambda|^(1/2) column scaling. Sampling noise can push trailing
// eigenvalues negative, hence the absolute value.
inline Matrix ase(const Matrix& a, Index d, double gap_tol = 1e-12) {
  const SpectralDecomp dec = spectral_decompose(a, d, gap_tol);
  return dec.eigenvectors * dec.eigenvalues.cwiseAbs().cwiseSqrt().asDiagonal();
}

struct EmbeddingSeries {
  std::vector<Matrix> embeddings;
  std::vector<double> times;
  Index d = 0;
  // Per-frame orthogonal factors applied since the series was produced;
  // empty when none were.
  std::vector<Matrix> gauges_applied;

  Index frame_count() const { return static_cast<Index>(embeddings.size()); }
};

inline EmbeddingSeries make_series(std::vector<Matrix> frames, std::vector<double> times) {
  if (frames.empty()) throw EmptyInput("make_series: no frames");
  if (frames.size() != times.size())
    throw DimensionMismatch("make_series: frames/times length mismatch");
  EmbeddingSeries s;
  s.d = frames.front().cols();
  for (const Matrix& f : frames)
    if (f.rows() != frames.front().rows() || f.cols() != s.d)
      throw DimensionMismatch("make_series: frames must share n and d");
  s.embeddings = std::move(frames);
  s.times = std::move(times);
  return s;
}

// Right-multiplies every frame by an independent Haar-uniform orthogonal
// matrix, recording what was applied. Models the per-frame gauge of an
// eigensolver with no continuity convention.
inline EmbeddingSeries inject_gauge_jitter(const EmbeddingSeries& series, std::uint64_t seed) {
  if (series.d < 1) throw DimensionMismatch("inject_gauge_jitter: d must be >= 1");
  EmbeddingSeries out = series;
  if (out.gauges_applied.empty())
    out.gauges_applied.assign(series.embeddings.size(), Matrix::Identity(series.d, series.d));
  for (std::size_t t = 0; t < out.embeddings.size(); ++t) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(t)}));
    const Matrix q = rng.haar_orthogonal(series.d);
    out.embeddings[t] = out.embeddings[t] * q;
    out.gauges_applied[t] = out.gauges_applied[t] * q;
  }
  return out;
}

}  // namespace rdpg
