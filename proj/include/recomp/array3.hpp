#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace recomp {

/// Dense row-major rank-3 array.
template <typename T>
struct Array3 {
  std::array<int, 3> shape{0, 0, 0};
  std::vector<T> data;

  Array3() = default;
  Array3(int d0, int d1, int d2, T fill = T{})
      : shape{d0, d1, d2}, data(static_cast<std::size_t>(d0) * d1 * d2, fill) {}

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k;
  }
  T& operator()(int i, int j, int k) { return data[index(i, j, k)]; }
  const T& operator()(int i, int j, int k) const { return data[index(i, j, k)]; }
  std::size_t size() const { return data.size(); }

  std::string shape_str() const {
    return "(" + std::to_string(shape[0]) + ", " + std::to_string(shape[1]) + ", " +
           std::to_string(shape[2]) + ")";
  }
  bool operator==(const Array3&) const = default;
};

}  // namespace recomp
