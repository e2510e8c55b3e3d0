#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace itohinf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// The system model violates a structural requirement (e.g. R not positive definite).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// A generalized Lyapunov operator has (numerically) zero in its spectrum.
class SingularOperator : public Error {
 public:
  SingularOperator(const std::string& what, double smallest, double largest)
      : Error(what), smallest_singular_value(smallest), largest_singular_value(largest) {}
  double smallest_singular_value;
  double largest_singular_value;
};

/// Policy evaluation was requested for a pencil that is not mean-square stable.
class StepUnstable : public Error {
 public:
  StepUnstable(const std::string& what, double abscissa)
      : Error(what), spectral_abscissa(abscissa) {}
  double spectral_abscissa;
};

class NonConvergence : public Error {
 public:
  NonConvergence(const std::string& what, double residual)
      : Error(what), last_residual(residual) {}
  double last_residual;
};

class PathDiverged : public Error {
 public:
  PathDiverged(const std::string& what, std::size_t path_index, std::size_t step_index)
      : Error(what), path(path_index), step(step_index) {}
  std::size_t path;
  std::size_t step;
};

/// An interval boundary does not fall on the simulation grid.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

class RankDeficient : public Error {
 public:
  RankDeficient(const std::string& what, std::ptrdiff_t numerical_rank, std::ptrdiff_t expected_rank,
                double sv_ratio)
      : Error(what), rank(numerical_rank), expected(expected_rank), singular_value_ratio(sv_ratio) {}
  std::ptrdiff_t rank;
  std::ptrdiff_t expected;
  double singular_value_ratio;
};

/// A perturbed diagonal block of M could not be inverted during robust policy improvement.
class BlockSingular : public Error {
 public:
  using Error::Error;
};

class NonFinite : public Error {
 public:
  using Error::Error;
};

}  // namespace itohinf
