#include "erw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace erw {

KernelMatrix gram(const Matrix& features, std::string source) {
  KernelMatrix km;
  km.K = features * features.transpose();
  km.source = std::move(source);
  return km;
}

namespace {

void check_kernel(const KernelMatrix& km, const char* name) {
  if (km.K.rows() != km.K.cols()) {
    throw std::invalid_argument(std::string("metrics: kernel ") + name + " is not square");
  }
  if ((km.K - Matrix(km.K.transpose())).cwiseAbs().maxCoeff() > 1e-10) {
    throw std::invalid_argument(std::string("metrics: kernel ") + name + " is not symmetric");
  }
}

Matrix row_centered(const Matrix& K) {
  Vector row_mean = K.rowwise().mean();
  return K.colwise() - row_mean;
}

// kNN index sets by inner-product similarity, self excluded, ties by index
std::vector<std::vector<int>> knn_sets(const Matrix& K, int k) {
  const Index n = K.rows();
  std::vector<std::vector<int>> out(static_cast<size_t>(n));
  std::vector<int> order(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) {
    order.clear();
    for (Index j = 0; j < n; ++j)
      if (j != i) order.push_back(static_cast<int>(j));
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (K(i, a) != K(i, b)) return K(i, a) > K(i, b);
      return a < b;
    });
    out[static_cast<size_t>(i)].assign(order.begin(), order.begin() + k);
    std::sort(out[static_cast<size_t>(i)].begin(), out[static_cast<size_t>(i)].end());
  }
  return out;
}

double masked_align(const Matrix& Kc, const Matrix& Lc,
                    const std::vector<std::vector<int>>& nn_a,
                    const std::vector<std::vector<int>>& nn_b) {
  const Index n = Kc.rows();
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    const auto& a = nn_a[static_cast<size_t>(i)];
    const auto& b = nn_b[static_cast<size_t>(i)];
    // intersect two sorted neighbor lists
    size_t ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
      if (a[ia] < b[ib]) {
        ++ia;
      } else if (a[ia] > b[ib]) {
        ++ib;
      } else {
        acc += Kc(i, a[ia]) * Lc(i, a[ia]);
        ++ia;
        ++ib;
      }
    }
  }
  const double nm1 = static_cast<double>(n - 1);
  return acc / (nm1 * nm1);
}

}  // namespace

double hsic(const KernelMatrix& K, const KernelMatrix& L) {
  check_kernel(K, "K");
  check_kernel(L, "L");
  if (K.K.rows() != L.K.rows()) throw std::invalid_argument("hsic: kernel sizes differ");
  const Index n = K.K.rows();
  if (n < 2) throw std::invalid_argument("hsic: need at least 2 samples");
  const double nm1 = static_cast<double>(n - 1);
  return (row_centered(K.K).cwiseProduct(row_centered(L.K))).sum() / (nm1 * nm1);
}

double cka(const KernelMatrix& K, const KernelMatrix& L) {
  const double kk = hsic(K, K), ll = hsic(L, L);
  if (kk <= 0.0 || ll <= 0.0) {
    throw std::invalid_argument("cka: degenerate features, zero self-HSIC");
  }
  return hsic(K, L) / std::sqrt(kk * ll);
}

double cknna(const Matrix& features_a, const Matrix& features_b, const MetricConfig& cfg) {
  if (features_a.rows() != features_b.rows()) {
    throw std::invalid_argument("cknna: feature sets disagree on n");
  }
  const Index n = features_a.rows();
  if (cfg.k < 2 || cfg.k >= n) {
    throw std::invalid_argument("cknna: need 2 <= k < n, got k=" + std::to_string(cfg.k) +
                                ", n=" + std::to_string(n));
  }
  Matrix K = features_a * features_a.transpose();
  Matrix L = features_b * features_b.transpose();
  Matrix Kc = row_centered(K), Lc = row_centered(L);
  auto nn_a = knn_sets(K, cfg.k);
  auto nn_b = knn_sets(L, cfg.k);

  const double cross = masked_align(Kc, Lc, nn_a, nn_b);
  const double self_a = masked_align(Kc, Kc, nn_a, nn_a);
  const double self_b = masked_align(Lc, Lc, nn_b, nn_b);
  if (self_a <= 0.0 || self_b <= 0.0) {
    throw std::invalid_argument("cknna: degenerate self-alignment");
  }
  return cross / std::sqrt(self_a * self_b);
}

double toy_fid(const Matrix& feats_real, const Matrix& feats_gen) {
  if (feats_real.cols() != feats_gen.cols()) {
    throw std::invalid_argument("toy_fid: feature dimensions differ");
  }
  const Index d = feats_real.cols();
  if (feats_real.rows() < 2 || feats_gen.rows() < 2) {
    throw std::invalid_argument("toy_fid: need at least 2 samples per set");
  }

  auto moments = [d](const Matrix& f) {
    Vector mu = f.colwise().mean();
    Matrix centered = f.rowwise() - mu.transpose();
    Matrix cov = centered.transpose() * centered / static_cast<double>(f.rows() - 1);
    cov += 1e-6 * Matrix::Identity(d, d);
    return std::make_pair(mu, cov);
  };
  const auto [mu1, s1] = moments(feats_real);
  const auto [mu2, s2] = moments(feats_gen);

  // tr((S1 S2)^{1/2}) = tr((sqrt(S1) S2 sqrt(S1))^{1/2}), the inner matrix is SPD
  Eigen::SelfAdjointEigenSolver<Matrix> e1(s1);
  if (e1.info() != Eigen::Success) throw std::runtime_error("toy_fid: eigendecomposition failed");
  Matrix sqrt_s1 = Matrix(e1.eigenvectors()) *
                   Matrix(e1.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal()) *
                   Matrix(e1.eigenvectors().transpose());
  Matrix inner = sqrt_s1 * s2 * sqrt_s1;
  inner = 0.5 * (inner + Matrix(inner.transpose()));
  Eigen::SelfAdjointEigenSolver<Matrix> e2(inner);
  if (e2.info() != Eigen::Success) throw std::runtime_error("toy_fid: eigendecomposition failed");
  const double tr_sqrt = e2.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double val = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(0.0, val);
}

}  // namespace erw
