#pragma once

#include "erw/rng.hpp"
#include "erw/types.hpp"

#include <string>
#include <vector>

namespace erw {

// 2-D labelled point cloud; regeneration with the same seed is bit-identical.
struct ToyDataset {
  Matrix x;                 // n x d
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;
  std::string name;
  std::uint64_t seed = 0;

  Index n() const { return x.rows(); }
  Index dim() const { return x.cols(); }
};

// C isotropic Gaussians with means on a circle of radius 4; points are
// assigned to components round-robin so every class holds >= n/(4C) points.
ToyDataset make_gaussian_mixture(Index n, int classes, double spread, std::uint64_t seed);

// Uniform samples over a cells x cells grid on [-2,2]^2; the label is the
// checkerboard parity of the containing cell. Point parities alternate so
// both classes are exactly balanced.
ToyDataset make_checkerboard(Index n, int cells, std::uint64_t seed);

// Rows drawn with replacement; consumes the rng deterministically.
Matrix sample_rows(const ToyDataset& data, Index m, Rng& rng);

}  // namespace erw
