#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <new>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccnet {

using Rng = std::mt19937_64;

/// 64-byte aligned storage. Vectorized kernels peel scalar iterations based
/// on pointer alignment, so a fixed alignment keeps results independent of
/// where the allocator happened to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Tensor dimensions are mismatched for an operation.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A configuration value violates its invariants.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller-provided data cannot be processed (bad sizes, empty sets, ...).
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem or codec failure. The message always carries the path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// (batch, channels, height, width). Parameters reuse the same rank-4 layout,
/// e.g. a conv kernel is (out, in/groups, kh, kw) and a bias is (1, C, 1, 1).
using Shape = std::array<std::size_t, 4>;

inline std::size_t shape_size(const Shape& s) { return s[0] * s[1] * s[2] * s[3]; }

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(" << s[0] << "," << s[1] << "," << s[2] << "," << s[3] << ")";
  return os.str();
}

/// Dense rank-4 array in NCHW order with value semantics.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{0, 0, 0, 0} {}
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape_size(shape), fill) {}
  Tensor(Shape shape, std::vector<T> values) : shape_(shape), data_(values.begin(), values.end()) {
    if (data_.size() != shape_size(shape_)) {
      throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_[0]; }
  std::size_t c() const { return shape_[1]; }
  std::size_t h() const { return shape_[2]; }
  std::size_t w() const { return shape_[3]; }
  std::size_t size() const { return data_.size(); }
  std::size_t plane_size() const { return shape_[2] * shape_[3]; }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset(n, c, y, x)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset(n, c, y, x)];
  }

  /// Pointer to the (n, c) spatial plane.
  T* plane(std::size_t n, std::size_t c) { return data_.data() + (n * shape_[1] + c) * plane_size(); }
  const T* plane(std::size_t n, std::size_t c) const {
    return data_.data() + (n * shape_[1] + c) * plane_size();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  void require_same_shape(const Tensor& o, const char* what) const {
    if (shape_ != o.shape_) {
      throw DimensionError(std::string(what) + ": shape " + shape_str(shape_) + " vs " +
                           shape_str(o.shape_));
    }
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

template <typename T>
T max_abs(const Tensor<T>& t) {
  T m{0};
  for (T v : t.values()) m = std::max(m, v < 0 ? -v : v);
  return m;
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  a.require_same_shape(b, "max_abs_diff");
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    T d = a[i] - b[i];
    m = std::max(m, d < 0 ? -d : d);
  }
  return m;
}

}  // namespace ccnet
