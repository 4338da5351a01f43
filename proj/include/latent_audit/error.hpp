#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace latent_audit {

enum class ErrorCode {
  Parse,
  Validation,
  DimensionMismatch,
  SingularSystem,
  DegenerateLabels,
  NoConvergence,
  ZeroNormal,
  RankDeficient,
  DegenerateDirection,
  BadRange,
  GeneratorFailure,
  InvalidGram,
  UnachievableCorrelation,
  MissingAttribute,
  AmbiguousAfterPrune,
  MissingScores,
  BadCounts,
  BootstrapFailure,
  Timeout,
  VersionMismatch,
  Transport,
  ServerError,
  UnknownImage,
  UnknownClassifier,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by iterative solvers that hit their iteration cap. Carries the best
/// iterate so callers can decide whether it is good enough.
class NoConvergenceError : public Error {
 public:
  NoConvergenceError(const std::string& message, Eigen::VectorXd best,
                     double residual, int iterations)
      : Error(ErrorCode::NoConvergence, message),
        best_(std::move(best)),
        residual_(residual),
        iterations_(iterations) {}

  const Eigen::VectorXd& best() const noexcept { return best_; }
  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  Eigen::VectorXd best_;
  double residual_;
  int iterations_;
};

}  // namespace latent_audit
