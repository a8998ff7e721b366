#pragma once

#include "erw/types.hpp"

#include <string>

namespace erw {

// Inner-product kernel matrix K_ij = <phi_i, phi_j>.
struct KernelMatrix {
  Matrix K;
  std::string source;
};

KernelMatrix gram(const Matrix& features, std::string source = {});

struct MetricConfig {
  int k = 10;  // mutual-kNN neighborhood size
};

// Row-centered cross sum over (n-1)^2:
//   HSIC(K, L) = 1/(n-1)^2 sum_ij (K_ij - mean_l K_il)(L_ij - mean_l L_il)
double hsic(const KernelMatrix& K, const KernelMatrix& L);

// HSIC(K,L) / sqrt(HSIC(K,K) HSIC(L,L))
double cka(const KernelMatrix& K, const KernelMatrix& L);

// CKA with the HSIC sums restricted to the mutual-kNN mask
//   alpha(i,j;k) = 1[i != j and phi_j in knn(phi_i;k) and psi_j in knn(psi_i;k)],
// neighborhoods by inner-product similarity, ties broken by lower index.
double cknna(const Matrix& features_a, const Matrix& features_b, const MetricConfig& cfg = {});

// Frechet distance between Gaussians fitted to the two feature sets:
//   |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}),
// matrix square root via eigendecomposition of sqrt(S1) S2 sqrt(S1);
// covariances are regularized by +1e-6 I.
double toy_fid(const Matrix& feats_real, const Matrix& feats_gen);

}  // namespace erw
