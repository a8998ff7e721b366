#include "erw/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace erw {

Matrix LatentCodec::encode(const Matrix& x_rows) const {
  return (x_rows.rowwise() - mean.transpose()) * encode_map.transpose();
}

Matrix LatentCodec::decode(const Matrix& z_rows) const {
  return (z_rows * decode_map.transpose()).rowwise() + mean.transpose();
}

Vector LatentCodec::encode(const Vector& x) const { return encode_map * (x - mean); }

Vector LatentCodec::decode(const Vector& z) const { return decode_map * z + mean; }

LatentCodec codec_fit(const ToyDataset& data, Index d_lat) {
  if (d_lat < 1) throw std::invalid_argument("codec_fit: d_lat must be >= 1");
  const Index n = data.n(), d = data.dim();
  if (n < 2) throw std::invalid_argument("codec_fit: need at least 2 points");

  Vector mean = data.x.colwise().mean();
  Matrix centered = data.x.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("codec_fit: eigendecomposition failed");
  const Vector evals = eig.eigenvalues();
  if (evals.minCoeff() <= 1e-12 * std::max(1.0, evals.maxCoeff())) {
    throw std::runtime_error("codec_fit: degenerate data, zero variance direction (min eigenvalue " +
                             std::to_string(evals.minCoeff()) + ")");
  }

  LatentCodec codec;
  codec.mean = mean;

  if (d_lat <= d) {
    // top-d_lat principal directions, whitened; lossless iff d_lat == d
    // (SelfAdjointEigenSolver orders eigenvalues increasingly)
    Matrix U(d, d_lat);
    Vector lam(d_lat);
    for (Index k = 0; k < d_lat; ++k) {
      U.col(k) = eig.eigenvectors().col(d - 1 - k);
      lam[k] = evals[d - 1 - k];
    }
    codec.encode_map = lam.cwiseSqrt().cwiseInverse().asDiagonal() * Matrix(U.transpose());
    codec.decode_map = U * Matrix(lam.cwiseSqrt().asDiagonal());
    return codec;
  }

  // d_lat > d: whiten all d directions, then duplicate whitened coordinates
  // into the extra rows with a column-orthonormal lift so decode still
  // inverts encode exactly
  Matrix white =
      evals.cwiseSqrt().cwiseInverse().asDiagonal() * Matrix(eig.eigenvectors().transpose());
  Matrix color = Matrix(eig.eigenvectors()) * Matrix(evals.cwiseSqrt().asDiagonal());
  Matrix lift = Matrix::Zero(d_lat, d);
  Vector col_count = Vector::Zero(d);
  for (Index r = 0; r < d_lat; ++r) {
    lift(r, r % d) = 1.0;
    col_count[r % d] += 1.0;
  }
  for (Index j = 0; j < d; ++j) lift.col(j) /= std::sqrt(col_count[j]);

  codec.encode_map = lift * white;              // d_lat x d
  codec.decode_map = color * lift.transpose();  // d x d_lat
  return codec;
}

}  // namespace erw
