#pragma once

#include "erw/dataset.hpp"
#include "erw/types.hpp"

namespace erw {

// Linear whitening codec standing in for the pixel-to-latent stage. With
// d_lat >= d the pair (encode, decode) is near-lossless; encoded coordinates
// have per-dimension variance close to 1 on the fitted data.
struct LatentCodec {
  Matrix encode_map;  // d_lat x d
  Matrix decode_map;  // d x d_lat
  Vector mean;        // d

  Index dim() const { return decode_map.rows(); }
  Index latent_dim() const { return encode_map.rows(); }

  Matrix encode(const Matrix& x_rows) const;
  Matrix decode(const Matrix& z_rows) const;
  Vector encode(const Vector& x) const;
  Vector decode(const Vector& z) const;
};

LatentCodec codec_fit(const ToyDataset& data, Index d_lat);

}  // namespace erw
