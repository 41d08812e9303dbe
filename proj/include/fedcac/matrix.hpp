#pragma once

#include <cstddef>
#include <vector>

namespace fedcac {

// Dense row-major matrix of doubles. Deliberately minimal; the models here
// are small enough that plain loops beat pulling in a linear-algebra library.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  bool empty() const { return data.empty(); }
};

}  // namespace fedcac
