#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace halr {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
  IncompatibleClusters,
  DimensionMismatch,
  AcaFailure,
  SingularShift,
  SpectralOverlap,
  BoxTouchesDiagonal,
  MaxIterations,
  TooLarge,
  InvalidArgument,
  Io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::IncompatibleClusters: return "IncompatibleClusters";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::AcaFailure: return "AcaFailure";
    case ErrorCode::SingularShift: return "SingularShift";
    case ErrorCode::SpectralOverlap: return "SpectralOverlap";
    case ErrorCode::BoxTouchesDiagonal: return "BoxTouchesDiagonal";
    case ErrorCode::MaxIterations: return "MaxIterations";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) raise(ErrorCode::DimensionMismatch, what);
}

}  // namespace halr
