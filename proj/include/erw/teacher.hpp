#pragma once

#include "erw/dataset.hpp"
#include "erw/types.hpp"

#include <cstdint>
#include <vector>

namespace erw {

struct TeacherConfig {
  Index width = 64;   // two hidden layers of this width
  Index d_rep = 16;
  Index batch = 128;
  double temperature = 0.1;
  double lr = 1e-3;
  double knn_gate = 0.9;  // 10-NN held-out accuracy required after training
};

// Frozen MLP standing in for the pretrained representation model. Embeddings
// are unit-L2-normalized and deterministic; parameters never change after
// construction.
class TeacherEncoder {
 public:
  // params: W1, b1, W2, b2, W3, b3 (biases as 1 x k rows)
  explicit TeacherEncoder(std::vector<Matrix> params);

  Matrix embed(const Matrix& x_rows) const;
  Vector embed(const Vector& x) const;

  Index input_dim() const { return params_[0].rows(); }
  Index d_rep() const { return params_[4].cols(); }
  const std::vector<Matrix>& params() const { return params_; }
  std::uint64_t params_hash() const { return hash_; }

 private:
  std::vector<Matrix> params_;
  std::uint64_t hash_;
};

// Self-supervised NT-Xent pretraining on jittered pairs (x, x + jitter*noise),
// then freeze. Throws if the 10-NN held-out accuracy gate fails, reporting the
// achieved accuracy.
TeacherEncoder teacher_pretrain(const ToyDataset& data, double jitter, long steps,
                                std::uint64_t seed, const TeacherConfig& cfg = {});

// Majority vote over the k nearest training embeddings (cosine similarity).
double teacher_knn_accuracy(const TeacherEncoder& teacher, const ToyDataset& train,
                            const ToyDataset& heldout, int k = 10);

// Mean distance between distinct class-mean embeddings over the mean
// within-class distance to the own class mean.
double fisher_ratio(const TeacherEncoder& teacher, const ToyDataset& data);

}  // namespace erw
