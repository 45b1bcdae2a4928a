#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace singalign {

// Feature frames are rows, dimensions are columns.
using Matrix = Eigen::MatrixXf;
using Vector = Eigen::VectorXf;
using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configs/arguments (CLI exit code 1) as opposed to runtime failures (2).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Warnings go to stderr by default; tests may install a collector.
void warn(const std::string& msg);
void set_warning_handler(std::function<void(const std::string&)> handler);

// FNV-1a, used for artifact fingerprints and stage skip logic.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64(const std::string& s, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t fnv1a64_file(const std::string& path);

std::string to_hex(uint64_t v);

}  // namespace singalign
