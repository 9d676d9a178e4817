#pragma once

#include <stdexcept>
#include <string>

namespace rdpg {

// Base class for every failure this library signals. CLI maps these to
// exit code 2 (numerical failure); anything else is a usage error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// Trailing retained eigenvalue below the requested gap tolerance.
class DegenerateGap : public Error {
 public:
  using Error::Error;
};

// Gram spectrum too ill-conditioned for a reliable Lyapunov solve, or a
// configuration that fails the full-column-rank requirement.
class RankDeficient : public Error {
 public:
  using Error::Error;
};

// A P-velocity with energy in the null-null block cannot come from any
// latent velocity at fixed rank d.
class NotRealizable : public Error {
 public:
  using Error::Error;
};

class NonFiniteState : public Error {
 public:
  using Error::Error;
};

class InvalidProbability : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

// Procrustes cross-covariance is singular: the optimal rotation is not
// unique and the caller must decide what to do.
class DegenerateCross : public Error {
 public:
  using Error::Error;
};

class AnchorRankDeficient : public Error {
 public:
  using Error::Error;
};

class DegenerateSpectrum : public Error {
 public:
  using Error::Error;
};

class InsufficientSamples : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rdpg
