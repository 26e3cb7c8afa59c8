#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <numeric>
#include <vector>

#include "cusemo/common.hpp"

namespace cusemo::ad {

// 64-byte-aligned storage for all tensor data. Eigen picks its vectorized
// code path (scalar peel length) from the runtime address; pinning every
// buffer to the same alignment keeps floating-point summation order a pure
// function of shape, so training results cannot depend on heap layout.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using dvec = std::vector<double, AlignedAllocator<double>>;

// Dense row-major tensor of doubles. Gradients live on autograd nodes, not
// on the raw value type.
struct Tensor {
  std::vector<std::size_t> shape;
  dvec data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, dvec d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape)) {
      throw ValidationError("tensor data length does not match shape");
    }
  }
  Tensor(std::vector<std::size_t> s, const std::vector<double>& d)
      : Tensor(std::move(s), dvec(d.begin(), d.end())) {}

  static std::size_t numel_of(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
  }

  static Tensor zeros(std::vector<std::size_t> s) {
    dvec d(numel_of(s), 0.0);
    return Tensor(std::move(s), std::move(d));
  }

  static Tensor scalar(double v) { return Tensor({1}, dvec{v}); }

  static Tensor vec(dvec d) {
    std::vector<std::size_t> s{d.size()};
    return Tensor(std::move(s), std::move(d));
  }

  static Tensor vec(const std::vector<double>& d) {
    return vec(dvec(d.begin(), d.end()));
  }

  std::size_t numel() const { return data.size(); }
  std::size_t ndim() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // 2-d accessors used by the kernels; no bounds checks in hot paths.
  double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace cusemo::ad
