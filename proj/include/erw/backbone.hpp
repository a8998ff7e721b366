#pragma once

#include "erw/tensor.hpp"
#include "erw/types.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace erw {

struct BackboneConfig {
  Index depth = 6;       // residual blocks
  Index width = 128;     // hidden units
  Index erw_depth = 2;   // W: number of blocks in the warmup-trained span
  Index erw_start = 0;   // first block of the span (0 = forefront)
  Index proj_tap = 4;    // P: the alignment head reads the output of the first P blocks in Phase 2
  Index d_lat = 2;
  Index d_rep = 16;
  Index time_dim = 16;
  Index head_width = 64;

  void validate() const;
  // number of blocks whose output feeds Phase-1 alignment
  Index l2r_tap() const { return erw_start + erw_depth; }
};

// Velocity network: a stem lift, `depth` residual blocks (per-feature affine
// scale, additive time mixing, two affine maps with SiLU), a zero-initialized
// output map, and a three-affine-layer SiLU projection head with L2-normalized
// output. The parameter partition follows the block structure: the L2R set is
// the warmup span plus the head, the R2G set is everything else. The stem
// belongs to block 0's group.
class Backbone {
 public:
  struct ParamInfo {
    enum class Group { Block, Output, Head };
    std::string name;
    Group group;
    Index block = -1;  // valid when group == Group::Block
  };

  explicit Backbone(BackboneConfig cfg, std::uint64_t seed);

  const BackboneConfig& config() const { return cfg_; }
  Index num_params() const { return static_cast<Index>(params_.size()); }
  const Matrix& param(Index i) const { return params_[static_cast<size_t>(i)]; }
  Matrix& param(Index i) { return params_[static_cast<size_t>(i)]; }
  const std::vector<Matrix>& params() const { return params_; }
  std::vector<Matrix>& params() { return params_; }
  const ParamInfo& param_info(Index i) const { return infos_[static_cast<size_t>(i)]; }

  // (l2r indices, r2g indices): disjoint and exhaustive over trainables
  std::pair<std::vector<int>, std::vector<int>> partition_params() const;
  std::uint64_t params_hash(const std::vector<int>& indices) const;

  // --- tape paths (training) ---
  struct Vars {
    std::vector<Tensor> p;
  };
  Vars vars(Tape& tape) const;

  struct TapOutputs {
    Tensor v_pred;  // n x d_lat
    Tensor tap;     // n x width, output of the first proj_tap blocks
    Tensor l2r;     // n x width, output of the first l2r_tap() blocks
  };
  TapOutputs forward_with_tap(Tape& tape, const Vars& vars, const Matrix& z, const Vector& t) const;

  // Prefix pass through the first l2r_tap() blocks only (Phase 1).
  Tensor forward_l2r(Tape& tape, const Vars& vars, const Matrix& z, const Vector& t) const;

  // Projection head; output rows are unit-norm.
  Tensor project(Tape& tape, const Vars& vars, const Tensor& features) const;

  // --- plain evaluation paths (sampling, metrics); same arithmetic ---
  Matrix velocity(const Matrix& z, const Vector& t) const;
  Matrix velocity(const Matrix& z, double t) const;
  // Output of the first `blocks` residual blocks.
  Matrix features_at(const Matrix& z, const Vector& t, Index blocks) const;
  Matrix project_features(const Matrix& features) const;

  static Matrix time_embedding(const Vector& t, Index time_dim);

 private:
  Index add_param(std::string name, ParamInfo::Group group, Index block, Matrix value);

  BackboneConfig cfg_;
  std::vector<Matrix> params_;
  std::vector<ParamInfo> infos_;
  // parameter indices
  Index stem_w_, stem_b_, out_w_, out_b_;
  std::vector<std::array<Index, 7>> block_;  // scale_s, scale_b, time_w, w1, b1, w2, b2
  std::array<Index, 6> head_;                // w1, b1, w2, b2, w3, b3
};

std::uint64_t fnv1a64(const void* data, size_t bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace erw
