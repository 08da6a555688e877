#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cksc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad inputs or broken contracts: shapes, ranges, malformed files.
struct ValidationError : Error {
  using Error::Error;
};

// NaN/Inf in a computation or a failed numeric routine.
struct NumericError : Error {
  using Error::Error;
};

// Artifacts that do not belong together (e.g. kernel/model hash mismatch).
struct IntegrityError : Error {
  using Error::Error;
};

// Deterministic RNG. mt19937_64 with hand-rolled mappings: the standard
// distributions are implementation-defined, these streams are not.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1) with 53-bit resolution
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // unbiased integer in [0, n)
  std::uint64_t below(std::uint64_t n);

  // standard normal via Box-Muller
  double normal();

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 mix of (master, stream): independent child seeds for folds,
// repeats and worker jobs.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

// Runs fn(i) for i in [0, n). threads <= 1 executes inline; otherwise the
// range is processed by a worker pool. Iterations must write to disjoint
// locations. The first exception thrown by any iteration is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

// FNV-1a over the raw row-major bytes of the matrix; "fnv1a:" + 16 hex digits.
std::string matrix_hash(const Matrix& m);

namespace logging {

enum class Level { error = 0, info = 1, debug = 2 };

// parsed once from CKSC_LOG in {error, info, debug}; default error
Level level();

void info(const std::string& msg);
void debug(const std::string& msg);

}  // namespace logging

}  // namespace cksc
