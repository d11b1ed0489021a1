#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wscl::core {

using Vec = std::vector<double>;

/// Dense row-major matrix. The one data container that crosses module
/// boundaries (batches, trajectories, abstraction records).
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

  void set_row(std::size_t r, const Vec& x);
  Vec row(std::size_t r) const;
};

/// Concatenate columns of two matrices with equal row counts.
Mat hcat(const Mat& a, const Mat& b);

// Error taxonomy mirrored by the CLI exit codes (2/3/4).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string hash_hex(std::uint64_t h);
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic RNG. Sub-streams are derived from the original seed and a
/// stream name, so modules never share generator state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return eng_(); }
  /// Uniform in [0,1), reproducible across platforms (no distribution objects).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n);
  Vec uniform_vec(std::size_t n, double lo, double hi);
  /// Random unit direction of dimension n (rejection from the cube).
  Vec unit_vec(std::size_t n);

  Rng split(std::string_view stream) const;
  Rng split(std::uint64_t stream_id) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 eng_;
  std::uint64_t seed_;
};

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level();
void log(LogLevel level, const std::string& msg);
inline void log_error(const std::string& m) { log(LogLevel::Error, m); }
inline void log_info(const std::string& m) { log(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log(LogLevel::Debug, m); }

/// Shortest round-trip-exact decimal form of a 64-bit float (17 significant digits).
std::string fmt_g17(double x);
double parse_double(std::string_view s);

}  // namespace wscl::core
