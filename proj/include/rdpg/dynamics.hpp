#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rdpg/errors.hpp"
#include "rdpg/model.hpp"
#include "rdpg/types.hpp"

namespace rdpg {

enum class DynamicsFamily {
  polynomial,
  laplacian,
  message_passing_attraction,
  centroid_circulation,
  damped_spiral,
  pure_gauge_rotation,
};

inline std::string family_name(DynamicsFamily f) {
  switch (f) {
    case DynamicsFamily::polynomial: return "polynomial";
    case DynamicsFamily::laplacian: return "laplacian";
    case DynamicsFamily::message_passing_attraction: return "message_passing_attraction";
    case DynamicsFamily::centroid_circulation: return "centroid_circulation";
    case DynamicsFamily::damped_spiral: return "damped_spiral";
    case DynamicsFamily::pure_gauge_rotation: return "pure_gauge_rotation";
  }
  throw Error("unknown dynamics family");
}

inline DynamicsFamily family_from_name(const std::string& name) {
  if (name == "polynomial") return DynamicsFamily::polynomial;
  if (name == "laplacian") return DynamicsFamily::laplacian;
  if (name == "message_passing_attraction") return DynamicsFamily::message_passing_attraction;
  if (name == "centroid_circulation") return DynamicsFamily::centroid_circulation;
  if (name == "damped_spiral") return DynamicsFamily::damped_spiral;
  if (name == "pure_gauge_rotation") return DynamicsFamily::pure_gauge_rotation;
  throw Error("unknown dynamics family: " + name);
}

// The rotation generator around (1,1,1)/sqrt(3) used by the damped spiral.
inline Matrix spiral_rotation_generator() {
  Matrix j(3, 3);
  j << 0, -1, 1,
       1, 0, -1,
       -1, 1, 0;
  return j / std::sqrt(3.0);
}

struct DynamicsSpec {
  DynamicsFamily family = DynamicsFamily::polynomial;

  // polynomial: coefficients alpha_0..alpha_K of N(P) = sum alpha_k P^k
  Vector coeffs;

  // damped_spiral
  double gamma = 0.0;
  double beta = 0.0;
  double omega = 0.0;
  Matrix centroids;              // K_c x d
  std::vector<int> assignments;  // per node; empty = nearest centroid on use

  // centroid_circulation / pure_gauge_rotation: skew d x d generator
  Matrix generator;

  // Rows in anchor_mask get their velocity scaled by anchor_drift after the
  // field evaluation (0 freezes them).
  std::vector<int> anchor_mask;
  double anchor_drift = 0.0;

  void validate(Index n, Index d) const {
    switch (family) {
      case DynamicsFamily::polynomial:
        if (coeffs.size() < 1) throw DimensionMismatch("polynomial: need K+1 >= 1 coefficients");
        break;
      case DynamicsFamily::damped_spiral:
        if (centroids.cols() != d) throw DimensionMismatch("damped_spiral: centroid dimension != d");
        if (centroids.rows() < 1) throw DimensionMismatch("damped_spiral: need at least one centroid");
        if (d != 3) throw DimensionMismatch("damped_spiral: rotation generator is defined for d = 3");
        break;
      case DynamicsFamily::centroid_circulation:
      case DynamicsFamily::pure_gauge_rotation:
        if (generator.rows() != d || generator.cols() != d)
          throw DimensionMismatch("generator must be d x d");
        if (!is_skew(generator))
          throw DimensionMismatch("generator must be skew-symmetric to 1e-12");
        break;
      default:
        break;
    }
    for (int i : anchor_mask)
      if (i < 0 || i >= n) throw DimensionMismatch("anchor index out of range");
  }
};

inline std::vector<int> nearest_centroid_assignment(const Matrix& x, const Matrix& centroids) {
  std::vector<int> assign(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    Index best = 0;
    double best_d = (x.row(i) - centroids.row(0)).squaredNorm();
    for (Index k = 1; k < centroids.rows(); ++k) {
      const double dk = (x.row(i) - centroids.row(k)).squaredNorm();
      if (dk < best_d) {
        best_d = dk;
        best = k;
      }
    }
    assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return assign;
}

inline Matrix eval_field(const DynamicsSpec& spec, const LatentConfig& x) {
  spec.validate(x.n(), x.d());
  const Matrix& xm = x.entries;
  Matrix f;
  switch (spec.family) {
    case DynamicsFamily::polynomial: {
      // Horner on the matrix product: (sum_k alpha_k P^k) X.
      const Matrix p = xm * xm.transpose();
      const Index kmax = spec.coeffs.size() - 1;
      f = spec.coeffs(kmax) * xm;
      for (Index k = kmax - 1; k >= 0; --k) f = p * f + spec.coeffs(k) * xm;
      break;
    }
    case DynamicsFamily::laplacian: {
      const Matrix p = xm * xm.transpose();
      const Vector deg = p.rowwise().sum();
      f = p * xm - deg.asDiagonal() * xm;  // -(D - P) X
      break;
    }
    case DynamicsFamily::message_passing_attraction: {
      const Matrix p = xm * xm.transpose();
      f = p * xm;
      break;
    }
    case DynamicsFamily::centroid_circulation: {
      const Eigen::RowVectorXd mean = xm.colwise().mean();
      f = (xm.rowwise() - mean) * spec.generator;
      break;
    }
    case DynamicsFamily::damped_spiral: {
      const Matrix j = spiral_rotation_generator();
      const std::vector<int> assign = spec.assignments.empty()
                                          ? nearest_centroid_assignment(xm, spec.centroids)
                                          : spec.assignments;
      if (assign.size() != static_cast<std::size_t>(x.n()))
        throw DimensionMismatch("damped_spiral: assignment length != n");
      f.resize(x.n(), x.d());
      for (Index i = 0; i < x.n(); ++i) {
        const int k = assign[static_cast<std::size_t>(i)];
        if (k < 0 || k >= spec.centroids.rows())
          throw DimensionMismatch("damped_spiral: assignment out of range");
        const Eigen::RowVectorXd delta = xm.row(i) - spec.centroids.row(k);
        f.row(i) = (-spec.gamma + spec.beta * delta.squaredNorm()) * delta +
                   spec.omega * delta * j.transpose();
      }
      break;
    }
    case DynamicsFamily::pure_gauge_rotation: {
      f = xm * spec.generator;
      break;
    }
  }
  if (!spec.anchor_mask.empty()) {
    for (int i : spec.anchor_mask) f.row(i) *= spec.anchor_drift;
  }
  return f;
}

// dP/dt induced by a latent velocity: F X' + X F'. Symmetric by construction.
inline Matrix induced_p_velocity(const Matrix& f, const LatentConfig& x) {
  if (f.rows() != x.n() || f.cols() != x.d())
    throw DimensionMismatch("induced_p_velocity: velocity shape must match X");
  Matrix pdot = f * x.entries.transpose();
  pdot += pdot.transpose().eval();
  return pdot;
}

enum class TrajectoryKind { latent, probability };

struct Trajectory {
  std::vector<Matrix> states;
  std::vector<double> times;
  double step = 0.0;
  TrajectoryKind kind = TrajectoryKind::latent;
  std::optional<DynamicsSpec> spec;

  Index length() const { return static_cast<Index>(states.size()); }
};

// Classical fixed-step RK4. Deterministic and adequate for the smooth
// fields used here; adaptive stepping would desynchronize trajectory and
// observation grids.
inline Trajectory integrate(const DynamicsSpec& spec, const LatentConfig& x0, Index steps,
                            double dt) {
  if (steps < 1) throw Error("integrate: steps must be >= 1");
  if (!(dt > 0.0)) throw Error("integrate: dt must be positive");
  DynamicsSpec local = spec;
  // The spiral's community assignment is fixed from the initial state.
  if (local.family == DynamicsFamily::damped_spiral && local.assignments.empty())
    local.assignments = nearest_centroid_assignment(x0.entries, local.centroids);

  Trajectory traj;
  traj.step = dt;
  traj.kind = TrajectoryKind::latent;
  traj.spec = local;
  traj.states.reserve(static_cast<std::size_t>(steps) + 1);
  traj.times.reserve(static_cast<std::size_t>(steps) + 1);

  Matrix x = x0.entries;
  traj.states.push_back(x);
  traj.times.push_back(0.0);
  for (Index s = 1; s <= steps; ++s) {
    const Matrix k1 = eval_field(local, LatentConfig(x));
    const Matrix k2 = eval_field(local, LatentConfig(x + 0.5 * dt * k1));
    const Matrix k3 = eval_field(local, LatentConfig(x + 0.5 * dt * k2));
    const Matrix k4 = eval_field(local, LatentConfig(x + dt * k3));
    x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite())
      throw NonFiniteState("integrate: non-finite state at step " + std::to_string(s));
    traj.states.push_back(x);
    traj.times.push_back(static_cast<double>(s) * dt);
  }
  return traj;
}

inline Trajectory probability_trajectory(const Trajectory& latent) {
  Trajectory out;
  out.step = latent.step;
  out.times = latent.times;
  out.kind = TrajectoryKind::probability;
  out.spec = latent.spec;
  out.states.reserve(latent.states.size());
  for (const Matrix& x : latent.states) out.states.push_back(symmetrize(x * x.transpose()));
  return out;
}

// Per-eigenvalue scalar flow d(lambda)/dt = 2 sum_k alpha_k lambda^{k+1},
// integrated with the same RK4 scheme.
struct EigenvalueFlow {
  std::vector<double> times;
  Matrix values;  // (steps+1) x d
};

inline EigenvalueFlow eigenvalue_flow(const Vector& coeffs, const Vector& lambda0, Index steps,
                                      double dt) {
  if (coeffs.size() < 1) throw DimensionMismatch("eigenvalue_flow: need coefficients");
  if ((lambda0.array() <= 0.0).any()) throw Error("eigenvalue_flow: eigenvalues must be positive");
  if (steps < 1) throw Error("eigenvalue_flow: steps must be >= 1");
  if (!(dt > 0.0)) throw Error("eigenvalue_flow: dt must be positive");

  const auto rhs = [&](double l) {
    double acc = 0.0;
    for (Index k = coeffs.size() - 1; k >= 0; --k) acc = acc * l + coeffs(k);
    return 2.0 * acc * l;  // 2 * sum alpha_k l^{k+1}
  };

  EigenvalueFlow flow;
  flow.values.resize(steps + 1, lambda0.size());
  flow.values.row(0) = lambda0.transpose();
  flow.times.resize(static_cast<std::size_t>(steps) + 1);
  flow.times[0] = 0.0;
  for (Index s = 1; s <= steps; ++s) {
    for (Index i = 0; i < lambda0.size(); ++i) {
      const double l = flow.values(s - 1, i);
      const double k1 = rhs(l);
      const double k2 = rhs(l + 0.5 * dt * k1);
      const double k3 = rhs(l + 0.5 * dt * k2);
      const double k4 = rhs(l + dt * k3);
      const double next = l + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      if (!std::isfinite(next))
        throw NonFiniteState("eigenvalue_flow: non-finite value at step " + std::to_string(s));
      flow.values(s, i) = next;
    }
    flow.times[static_cast<std::size_t>(s)] = static_cast<double>(s) * dt;
  }
  return flow;
}

// --- JSON round trip for DynamicsSpec ---------------------------------------

inline void to_json(nlohmann::json& j, const DynamicsSpec& s) {
  j["family"] = family_name(s.family);
  if (s.coeffs.size() > 0)
    j["coeffs"] = std::vector<double>(s.coeffs.data(), s.coeffs.data() + s.coeffs.size());
  if (s.family == DynamicsFamily::damped_spiral) {
    j["gamma"] = s.gamma;
    j["beta"] = s.beta;
    j["omega"] = s.omega;
    std::vector<std::vector<double>> cs;
    for (Index k = 0; k < s.centroids.rows(); ++k)
      cs.emplace_back(s.centroids.row(k).begin(), s.centroids.row(k).end());
    j["centroids"] = cs;
    if (!s.assignments.empty()) j["assignments"] = s.assignments;
  }
  if (s.generator.size() > 0) {
    std::vector<std::vector<double>> g;
    for (Index k = 0; k < s.generator.rows(); ++k)
      g.emplace_back(s.generator.row(k).begin(), s.generator.row(k).end());
    j["generator"] = g;
  }
  if (!s.anchor_mask.empty()) {
    j["anchor_mask"] = s.anchor_mask;
    j["anchor_drift"] = s.anchor_drift;
  }
}

inline void from_json(const nlohmann::json& j, DynamicsSpec& s) {
  s = DynamicsSpec{};
  s.family = family_from_name(j.at("family").get<std::string>());
  if (j.contains("coeffs")) {
    const auto v = j["coeffs"].get<std::vector<double>>();
    s.coeffs = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
  }
  s.gamma = j.value("gamma", 0.0);
  s.beta = j.value("beta", 0.0);
  s.omega = j.value("omega", 0.0);
  if (j.contains("centroids")) {
    const auto rows = j["centroids"].get<std::vector<std::vector<double>>>();
    s.centroids.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        s.centroids(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  if (j.contains("assignments")) s.assignments = j["assignments"].get<std::vector<int>>();
  if (j.contains("generator")) {
    const auto rows = j["generator"].get<std::vector<std::vector<double>>>();
    s.generator.resize(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        s.generator(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  if (j.contains("anchor_mask")) s.anchor_mask = j["anchor_mask"].get<std::vector<int>>();
  s.anchor_drift = j.value("anchor_drift", 0.0);
}

}  // namespace rdpg
