#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace gtsp::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Row-major dense values. Operations treat a tensor as a matrix whose column
// count is the last dimension and whose row count is the product of the rest.
struct Tensor {
  Shape shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> v);
  static Tensor zeros(Shape s);

  [[nodiscard]] std::size_t size() const { return values.size(); }
  [[nodiscard]] std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  [[nodiscard]] std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }
  [[nodiscard]] double& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  [[nodiscard]] double operator()(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace gtsp::nn
