#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctfs {

// Error categories; the CLI maps these onto distinct exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Dense row-major 2-D array. Row index = y (vertical), column index = x.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
    if (rows <= 0 || cols <= 0)
      throw std::invalid_argument("Grid: dimensions must be positive");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  const T& at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  T* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
  const T* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  template <typename U>
  bool same_shape(const Grid<U>& o) const { return rows_ == o.rows() && cols_ == o.cols(); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

using Intensity = Grid<float>;   // values in [0,1]
using MaskImage = Grid<uint8_t>; // class indices
using BoolMask = Grid<uint8_t>;  // 0/1 membership

/// Dense channel-major 3-D array (channels x rows x cols).
template <typename T>
class Tensor3T {
 public:
  Tensor3T() = default;
  Tensor3T(int channels, int rows, int cols, T fill = T{})
      : channels_(channels), rows_(rows), cols_(cols),
        data_(static_cast<size_t>(channels) * rows * cols, fill) {
    if (channels <= 0 || rows <= 0 || cols <= 0)
      throw std::invalid_argument("Tensor3: dimensions must be positive");
  }

  int channels() const { return channels_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t plane() const { return static_cast<size_t>(rows_) * cols_; }
  size_t size() const { return data_.size(); }

  T* channel(int c) { return data_.data() + c * plane(); }
  const T* channel(int c) const { return data_.data() + c * plane(); }

  T& at(int c, int r, int x) { return data_[c * plane() + static_cast<size_t>(r) * cols_ + x]; }
  const T& at(int c, int r, int x) const {
    return data_[c * plane() + static_cast<size_t>(r) * cols_ + x];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Tensor3T& a, const Tensor3T& b) {
    return a.channels_ == b.channels_ && a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
           a.data_ == b.data_;
  }

 private:
  int channels_ = 0, rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

using Tensor3 = Tensor3T<float>;

/// Per-pixel class probabilities, channel c = class c.
using ProbMap = Tensor3;

inline bool is_valid_probmap(const ProbMap& p, double tol = 1e-5) {
  for (int r = 0; r < p.rows(); ++r) {
    for (int x = 0; x < p.cols(); ++x) {
      double s = 0.0;
      for (int c = 0; c < p.channels(); ++c) {
        float v = p.at(c, r, x);
        if (!(v >= 0.0f)) return false;
        s += v;
      }
      if (std::abs(s - 1.0) > tol) return false;
    }
  }
  return true;
}

// splitmix64; used to derive independent RNG streams from (seed, salt...).
inline uint64_t hash_mix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_mix(uint64_t a, uint64_t b) { return hash_mix(hash_mix(a) ^ b); }

template <typename... Rest>
inline uint64_t hash_mix(uint64_t a, uint64_t b, uint64_t c, Rest... rest) {
  return hash_mix(hash_mix(a, b), c, rest...);
}

inline uint64_t hash_str(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seeded random stream. Distribution objects are constructed per call so the
/// stream state is exactly the engine state (required for reproducible resume).
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(hash_mix(seed)) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  // inclusive on both ends
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(eng_);
  }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }
  double gamma(double shape, double scale) {
    return std::gamma_distribution<double>(shape, scale)(eng_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(eng_); }
  uint64_t raw() { return eng_(); }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, eng_);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

}  // namespace ctfs
