#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace erw {

using Scalar = double;
using Index = Eigen::Index;

// Flat row-major storage used by the autodiff tape.
using Array = Eigen::ArrayXd;
using Vector = Eigen::VectorXd;
// Row-major so that flat tape buffers map onto matrices without copies.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Index>;

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s);

}  // namespace erw
