#include "erw/dataset.hpp"

#include <cmath>
#include <stdexcept>

namespace erw {

ToyDataset make_gaussian_mixture(Index n, int classes, double spread, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("make_gaussian_mixture: need at least 2 classes");
  if (n < classes) {
    throw std::invalid_argument("make_gaussian_mixture: n=" + std::to_string(n) +
                                " is smaller than C=" + std::to_string(classes));
  }
  if (!(spread > 0.0)) throw std::invalid_argument("make_gaussian_mixture: spread must be positive");

  const double radius = 4.0;
  Matrix means(classes, 2);
  for (int c = 0; c < classes; ++c) {
    const double angle = 2.0 * M_PI * c / classes;
    means(c, 0) = radius * std::cos(angle);
    means(c, 1) = radius * std::sin(angle);
  }

  ToyDataset data;
  data.x.resize(n, 2);
  data.labels.resize(static_cast<size_t>(n));
  data.num_classes = classes;
  data.seed = seed;
  data.name = "mixture-C" + std::to_string(classes);

  Rng rng(mix_seed(seed, 0x6d69780aULL));
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % classes);
    data.labels[static_cast<size_t>(i)] = c;
    data.x(i, 0) = means(c, 0) + spread * rng.normal();
    data.x(i, 1) = means(c, 1) + spread * rng.normal();
  }
  return data;
}

ToyDataset make_checkerboard(Index n, int cells, std::uint64_t seed) {
  if (cells < 2 || cells % 2 != 0) {
    throw std::invalid_argument("make_checkerboard: cells must be even and >= 2, got " +
                                std::to_string(cells));
  }
  if (n < 2) throw std::invalid_argument("make_checkerboard: need at least 2 points");

  const double lo = -2.0, hi = 2.0;
  const double cell = (hi - lo) / cells;

  // enumerate cells of each parity
  std::vector<std::pair<int, int>> even_cells, odd_cells;
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j) ((i + j) % 2 == 0 ? even_cells : odd_cells).push_back({i, j});

  ToyDataset data;
  data.x.resize(n, 2);
  data.labels.resize(static_cast<size_t>(n));
  data.num_classes = 2;
  data.seed = seed;
  data.name = "checkerboard-" + std::to_string(cells);

  Rng rng(mix_seed(seed, 0x63686b62ULL));
  for (Index i = 0; i < n; ++i) {
    const int parity = static_cast<int>(i % 2);
    const auto& pool = parity == 0 ? even_cells : odd_cells;
    const auto [ci, cj] = pool[static_cast<size_t>(rng.uniform_index(static_cast<Index>(pool.size())))];
    data.labels[static_cast<size_t>(i)] = parity;
    data.x(i, 0) = lo + (ci + rng.uniform01()) * cell;
    data.x(i, 1) = lo + (cj + rng.uniform01()) * cell;
  }
  return data;
}

Matrix sample_rows(const ToyDataset& data, Index m, Rng& rng) {
  Matrix out(m, data.dim());
  for (Index i = 0; i < m; ++i) out.row(i) = data.x.row(rng.uniform_index(data.n()));
  return out;
}

}  // namespace erw
