#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace qpr {

// Failure taxonomy shared by the pipeline stages and the C API / CLI exit
// codes. Cantor-set exits (diophantine, melnikov) are protocol outcomes, not
// bugs; they still unwind the current run.
enum class FailKind {
  config = 1,
  diophantine = 2,
  melnikov = 3,
  divergence = 4,
  numerical = 5,
  io = 6,
};

class QprError : public std::runtime_error {
 public:
  QprError(FailKind kind, std::string msg) : std::runtime_error(std::move(msg)), kind_(kind) {}
  FailKind kind() const { return kind_; }

 private:
  FailKind kind_;
};

struct ResonantTuple {
  std::vector<int> l;   // angle index
  std::vector<int> j;   // output spatial mode (empty for plain Diophantine)
  std::vector<int> jp;  // input spatial mode
  double divisor_abs = 0.0;
  double threshold = 0.0;

  std::string describe() const {
    auto vec = [](const std::vector<int>& v) {
      std::string s = "(";
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s + ")";
    };
    return "l=" + vec(l) + " j=" + vec(j) + " j'=" + vec(jp) +
           " |divisor|=" + std::to_string(divisor_abs) +
           " threshold=" + std::to_string(threshold);
  }
};

class DiophantineExit : public QprError {
 public:
  DiophantineExit(ResonantTuple t)
      : QprError(FailKind::diophantine, "diophantine exit: " + t.describe()),
        tuple(std::move(t)) {}
  ResonantTuple tuple;
};

class MelnikovExit : public QprError {
 public:
  MelnikovExit(ResonantTuple t)
      : QprError(FailKind::melnikov, "melnikov exit: " + t.describe()), tuple(std::move(t)) {}
  ResonantTuple tuple;
};

class DivergenceError : public QprError {
 public:
  explicit DivergenceError(std::string msg) : QprError(FailKind::divergence, std::move(msg)) {}
};

class NumericalError : public QprError {
 public:
  explicit NumericalError(std::string msg) : QprError(FailKind::numerical, std::move(msg)) {}
};

class ConfigError : public QprError {
 public:
  explicit ConfigError(std::string msg) : QprError(FailKind::config, std::move(msg)) {}
};

}  // namespace qpr
