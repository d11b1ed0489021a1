#include "wscl/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>

namespace wscl::core {

void Mat::set_row(std::size_t r, const Vec& x) {
  if (x.size() != cols) throw InputError("Mat::set_row: width mismatch");
  std::memcpy(v.data() + r * cols, x.data(), cols * sizeof(double));
}

Vec Mat::row(std::size_t r) const {
  return Vec(v.begin() + static_cast<std::ptrdiff_t>(r * cols),
             v.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
}

Mat hcat(const Mat& a, const Mat& b) {
  if (a.rows != b.rows) throw InputError("hcat: row count mismatch");
  Mat out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    std::memcpy(out.v.data() + r * out.cols, a.v.data() + r * a.cols, a.cols * sizeof(double));
    std::memcpy(out.v.data() + r * out.cols + a.cols, b.v.data() + r * b.cols,
                b.cols * sizeof(double));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw InputError("Rng::index: empty range");
  return static_cast<std::size_t>(next_u64() % n);
}

Vec Rng::uniform_vec(std::size_t n, double lo, double hi) {
  Vec out(n);
  for (auto& x : out) x = uniform(lo, hi);
  return out;
}

Vec Rng::unit_vec(std::size_t n) {
  while (true) {
    Vec d = uniform_vec(n, -1.0, 1.0);
    double norm2 = 0.0;
    for (double x : d) norm2 += x * x;
    if (norm2 > 1e-4 && norm2 <= 1.0) {
      double inv = 1.0 / std::sqrt(norm2);
      for (auto& x : d) x *= inv;
      return d;
    }
  }
}

Rng Rng::split(std::string_view stream) const {
  return Rng(splitmix64(seed_ ^ fnv1a(stream)));
}

Rng Rng::split(std::uint64_t stream_id) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream_id + 0x51ed2701ULL)));
}

LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("WSCL_LOG");
    if (env == nullptr) return LogLevel::Error;
    std::string_view s(env);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Error;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const char* tag = level == LogLevel::Error ? "error" : (level == LogLevel::Info ? "info" : "debug");
  std::fprintf(stderr, "[wscl:%s] %s\n", tag, msg.c_str());
}

std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return std::string(buf);
}

double parse_double(std::string_view s) {
  std::string tmp(s);
  char* end = nullptr;
  double x = std::strtod(tmp.c_str(), &end);
  if (end == tmp.c_str()) throw InputError("parse_double: not a number: '" + tmp + "'");
  return x;
}

}  // namespace wscl::core
