#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mprobe {

// Invalid inputs or malformed problem documents. The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg, std::vector<std::string> issues = {})
      : std::runtime_error(msg), issues_(std::move(issues)) {}

  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

// Breakdown of a numerical procedure (failed refinement, non-convergence,
// singular solve). The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pole (zero denominator) was hit at a specific spectral point.
class PoleError : public NumericalError {
 public:
  PoleError(const std::string& msg, std::complex<double> z)
      : NumericalError(msg + " at z = (" + std::to_string(z.real()) + ", " +
                       std::to_string(z.imag()) + ")"),
        z_(z) {}

  std::complex<double> where() const { return z_; }

 private:
  std::complex<double> z_;
};

}  // namespace mprobe
