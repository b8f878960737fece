#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace avgsgd {

/// Malformed input: bad eigenvalues, wrong lengths, out-of-range parameters.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A hyperparameter condition required by a result does not hold. The message
/// quotes the violated condition.
class PreconditionError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) {
    add(x);
    return *this;
  }
  [[nodiscard]] double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

/// SplitMix64 finalizer. Used everywhere a seed is derived from another seed
/// so that streams are reproducible from a single 64-bit master value.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of `master`: splitmix64(splitmix64(master) ^ index).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(splitmix64(master) ^ index);
}

/// Runs body(begin, end) over [0, count) split into contiguous chunks on up to
/// `jobs` threads. Chunk boundaries depend only on `count` and `grain`, never
/// on `jobs`, so callers writing per-index results get identical output for
/// any worker count.
void parallel_for(std::size_t count, unsigned jobs, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

/// 0 means "use hardware concurrency".
unsigned resolve_jobs(unsigned jobs);

/// Shortest decimal text that parses back to exactly `x`.
std::string format_real(double x);
/// Strict parse of a whole string as a double; throws ValidationError naming `what`.
double parse_real(std::string_view text, std::string_view what);
std::uint64_t parse_u64(std::string_view text, std::string_view what);

}  // namespace avgsgd
