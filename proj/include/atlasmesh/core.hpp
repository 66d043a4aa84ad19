#pragma once

// Shared primitives: small 3-vector, error hierarchy, compensated summation,
// number formatting and a deterministic parallel loop.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace atlasmesh {

using Label = std::int32_t;
using NodeId = std::int32_t;

struct Vec3 {
  double x{0.0}, y{0.0}, z{0.0};

  constexpr double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x; y += o.y; z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x; y -= o.y; z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    x *= s; y *= s; z *= s;
    return *this;
  }
  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator/(Vec3 a, double s) { return {a.x / s, a.y / s, a.z / s}; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
constexpr double norm2(const Vec3& a) { return dot(a, a); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }
constexpr double det3(const Vec3& a, const Vec3& b, const Vec3& c) { return dot(a, cross(b, c)); }

inline Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return n > 0.0 ? a / n : Vec3{};
}

// ---------------------------------------------------------------------------
// Errors. InputError covers everything caused by bad user input (CLI exit 1);
// the rest are runtime failures (CLI exit 2).

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  FormatError(std::string field, const std::string& what)
      : InputError("format error in field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class TypeError : public InputError {
 public:
  using InputError::InputError;
};

class ScriptError : public InputError {
 public:
  ScriptError(std::size_t step, const std::string& what)
      : InputError("edit script step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

class GeometryError : public InputError {
 public:
  using InputError::InputError;
};

class RuleError : public InputError {
 public:
  using InputError::InputError;
};

class EmptySurfaceError : public InputError {
 public:
  using InputError::InputError;
};

class EmptyMeshError : public InputError {
 public:
  using InputError::InputError;
};

class ValidationError : public InputError {
 public:
  using InputError::InputError;
};

class BindingError : public InputError {
 public:
  BindingError(std::vector<Label> ids, const std::string& what)
      : InputError(what), ids_(std::move(ids)) {}
  const std::vector<Label>& ids() const noexcept { return ids_; }

 private:
  std::vector<Label> ids_;
};

class LocationError : public InputError {
 public:
  using InputError::InputError;
};

class ParseError : public InputError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UnsupportedCellError : public InputError {
 public:
  UnsupportedCellError(std::size_t cell, int type)
      : InputError("cell " + std::to_string(cell) + " has unsupported VTK type " + std::to_string(type) +
                   " (only hexahedra, type 12)"),
        cell_(cell) {}
  std::size_t cell() const noexcept { return cell_; }

 private:
  std::size_t cell_;
};

class IdOverflowError : public InputError {
 public:
  using InputError::InputError;
};

class TopologyError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  GenerationError(std::vector<std::size_t> elements, const std::string& what)
      : Error(what), elements_(std::move(elements)) {}
  const std::vector<std::size_t>& elements() const noexcept { return elements_; }

 private:
  std::vector<std::size_t> elements_;
};

class AssemblyError : public Error {
 public:
  AssemblyError(std::size_t element, const std::string& what)
      : Error("element " + std::to_string(element) + ": " + what), element_(element) {}
  std::size_t element() const noexcept { return element_; }

 private:
  std::size_t element_;
};

class SolverError : public Error {
 public:
  SolverError(double residual, const std::string& what) : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  CompensatedSum& operator+=(double v) {
    add(v);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_{0.0};
  double comp_{0.0};
};

/// Shortest-roundtrip-safe text for a double: 17 significant digits, C locale.
inline std::string format_double(double v, int precision = 17) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, precision);
  if (ec != std::errc{}) throw Error("number formatting failed");
  return std::string(buf.data(), end);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ArgumentError("not a number: '" + std::string(s) + "'");
  return v;
}

template <class Int>
Int parse_int(std::string_view s) {
  Int v{};
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw ArgumentError("not an integer: '" + std::string(s) + "'");
  return v;
}

/// Worker count from ATLASMESH_THREADS (0 or unset = hardware concurrency).
inline unsigned worker_threads() {
  unsigned n = 0;
  if (const char* env = std::getenv("ATLASMESH_THREADS")) {
    try {
      n = parse_int<unsigned>(env);
    } catch (const ArgumentError&) {
      n = 0;
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}

/// Static-partition parallel loop. `fn(i)` must only write state owned by
/// index i, which keeps results independent of the thread count.
template <class Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(worker_threads(), count / 4096 + 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const std::size_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] {
      for (std::size_t i = begin; i < end; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace atlasmesh
