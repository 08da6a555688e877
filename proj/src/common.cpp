#include "cksc/common.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

namespace cksc {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ValidationError("Rng::below: n must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = next_u64();
  while (v >= limit) v = next_u64();
  return v % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min<std::size_t>({static_cast<std::size_t>(std::max(threads, 1)), hw, n});
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string matrix_hash(const Matrix& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const unsigned char* bytes, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      mix(bytes, sizeof(double));
    }
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace logging {

Level level() {
  static const Level parsed = [] {
    const char* env = std::getenv("CKSC_LOG");
    if (env == nullptr) return Level::error;
    if (std::strcmp(env, "debug") == 0) return Level::debug;
    if (std::strcmp(env, "info") == 0) return Level::info;
    return Level::error;
  }();
  return parsed;
}

void info(const std::string& msg) {
  if (level() >= Level::info) std::fprintf(stderr, "[cksc] %s\n", msg.c_str());
}

void debug(const std::string& msg) {
  if (level() >= Level::debug) std::fprintf(stderr, "[cksc:debug] %s\n", msg.c_str());
}

}  // namespace logging

}  // namespace cksc
