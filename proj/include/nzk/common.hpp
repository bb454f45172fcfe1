#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace nzk {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors. Every failure the library reports derives from nzk::Error so the CLI
// can map it to a nonzero exit status with a single catch.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent configuration (bad spec, bad mode combination).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Dimension mismatch between vectors, matrices or models.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// The operation exists but is not defined for this input class.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A numerical contract on an input (symmetry, PSD) is violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. `position` is a byte offset or a 1-based line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Training produced a non-finite or exploding loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// ---------------------------------------------------------------------------
// Random streams.
//
// Every random draw in the library comes from a stream keyed by
// (seed, purpose, index, sub). Streams for different purposes never share
// state, so a run that skips a draw (shared mode reusing z as zeta) leaves
// every other draw unchanged.

enum class Purpose : std::uint64_t {
  perturbation = 1,
  tangent = 2,
  kernel_z = 3,
  kernel_zeta = 4,
  linearize = 5,
  init = 6,
  data = 7,
  check = 8,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Engine = std::mt19937_64;

inline Engine make_stream(std::uint64_t seed, Purpose purpose, std::uint64_t index = 0,
                          std::uint64_t sub = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ index);
  h = splitmix64(h ^ (sub * 0x2545f4914f6cdd1dULL));
  return Engine(h);
}

// ---------------------------------------------------------------------------
// Parallel helpers. Work is split by index; callers store per-index results
// and reduce them in index order, so output never depends on thread count.

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  const unsigned count = std::min<unsigned>(threads, static_cast<unsigned>(n));
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace nzk
