#include "erw/backbone.hpp"

#include "erw/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace erw {

std::uint64_t fnv1a64(const void* data, size_t bytes, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void BackboneConfig::validate() const {
  if (depth < 1 || width < 1 || d_lat < 1 || d_rep < 1 || head_width < 1) {
    throw std::invalid_argument("BackboneConfig: dimensions must be positive");
  }
  if (time_dim < 2 || time_dim % 2 != 0) {
    throw std::invalid_argument("BackboneConfig: time_dim must be even and >= 2");
  }
  if (erw_depth < 1 || erw_start < 0 || erw_start + erw_depth > depth) {
    throw std::invalid_argument("BackboneConfig: ERW span [" + std::to_string(erw_start) + ", " +
                                std::to_string(erw_start + erw_depth) + ") outside depth " +
                                std::to_string(depth));
  }
  if (proj_tap < erw_start + erw_depth || proj_tap > depth) {
    throw std::invalid_argument("BackboneConfig: proj_tap " + std::to_string(proj_tap) +
                                " must lie in [erw_start+erw_depth, depth]");
  }
}

Matrix Backbone::time_embedding(const Vector& t, Index time_dim) {
  const Index half = time_dim / 2;
  Matrix emb(t.size(), time_dim);
  for (Index j = 0; j < half; ++j) {
    const double freq = M_PI * std::pow(2.0, static_cast<double>(j));
    for (Index i = 0; i < t.size(); ++i) {
      emb(i, 2 * j) = std::sin(freq * t[i]);
      emb(i, 2 * j + 1) = std::cos(freq * t[i]);
    }
  }
  return emb;
}

Index Backbone::add_param(std::string name, ParamInfo::Group group, Index block, Matrix value) {
  params_.push_back(std::move(value));
  infos_.push_back(ParamInfo{std::move(name), group, block});
  return static_cast<Index>(params_.size()) - 1;
}

Backbone::Backbone(BackboneConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(seed, 0x6262626fULL));
  const Index w = cfg_.width;

  auto randn = [&](Index r, Index c, double scale) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
    return m;
  };

  using G = ParamInfo::Group;
  // the stem lift belongs to block 0's parameter group
  stem_w_ = add_param("stem.w", G::Block, 0, randn(cfg_.d_lat, w, 1.0 / std::sqrt(double(cfg_.d_lat))));
  stem_b_ = add_param("stem.b", G::Block, 0, Matrix::Zero(1, w));

  block_.resize(static_cast<size_t>(cfg_.depth));
  for (Index b = 0; b < cfg_.depth; ++b) {
    const std::string pre = "block" + std::to_string(b) + ".";
    auto& idx = block_[static_cast<size_t>(b)];
    idx[0] = add_param(pre + "scale_s", G::Block, b, Matrix::Ones(1, w));
    idx[1] = add_param(pre + "scale_b", G::Block, b, Matrix::Zero(1, w));
    idx[2] = add_param(pre + "time_w", G::Block, b, randn(cfg_.time_dim, w, 1.0 / std::sqrt(double(cfg_.time_dim))));
    idx[3] = add_param(pre + "w1", G::Block, b, randn(w, w, std::sqrt(2.0 / double(w))));
    idx[4] = add_param(pre + "b1", G::Block, b, Matrix::Zero(1, w));
    idx[5] = add_param(pre + "w2", G::Block, b, randn(w, w, 0.5 / std::sqrt(double(w))));
    idx[6] = add_param(pre + "b2", G::Block, b, Matrix::Zero(1, w));
  }

  // zero-initialized output map: the initial velocity prediction is zero
  out_w_ = add_param("out.w", G::Output, -1, Matrix::Zero(w, cfg_.d_lat));
  out_b_ = add_param("out.b", G::Output, -1, Matrix::Zero(1, cfg_.d_lat));

  const Index hw = cfg_.head_width;
  head_[0] = add_param("head.w1", G::Head, -1, randn(w, hw, std::sqrt(2.0 / double(w))));
  head_[1] = add_param("head.b1", G::Head, -1, Matrix::Zero(1, hw));
  head_[2] = add_param("head.w2", G::Head, -1, randn(hw, hw, std::sqrt(2.0 / double(hw))));
  head_[3] = add_param("head.b2", G::Head, -1, Matrix::Zero(1, hw));
  head_[4] = add_param("head.w3", G::Head, -1, randn(hw, cfg_.d_rep, 1.0 / std::sqrt(double(hw))));
  head_[5] = add_param("head.b3", G::Head, -1, Matrix::Zero(1, cfg_.d_rep));
}

std::pair<std::vector<int>, std::vector<int>> Backbone::partition_params() const {
  std::vector<int> l2r, r2g;
  for (Index i = 0; i < num_params(); ++i) {
    const ParamInfo& info = infos_[static_cast<size_t>(i)];
    const bool in_span = info.group == ParamInfo::Group::Block && info.block >= cfg_.erw_start &&
                         info.block < cfg_.erw_start + cfg_.erw_depth;
    const bool is_head = info.group == ParamInfo::Group::Head;
    (in_span || is_head ? l2r : r2g).push_back(static_cast<int>(i));
  }
  return {l2r, r2g};
}

std::uint64_t Backbone::params_hash(const std::vector<int>& indices) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i : indices) {
    const Matrix& p = params_[static_cast<size_t>(i)];
    h = fnv1a64(p.data(), sizeof(double) * static_cast<size_t>(p.size()), h);
  }
  return h;
}

Backbone::Vars Backbone::vars(Tape& tape) const {
  Vars v;
  v.p.reserve(params_.size());
  for (const Matrix& p : params_) v.p.push_back(tape.input(p, true));
  return v;
}

namespace {

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), broadcast_rows(b, x.shape()[0]));
}

}  // namespace

Tensor Backbone::forward_l2r(Tape& tape, const Vars& vars, const Matrix& z, const Vector& t) const {
  if (z.cols() != cfg_.d_lat) {
    throw std::invalid_argument("Backbone: latent batch has dim " + std::to_string(z.cols()) +
                                ", expected " + std::to_string(cfg_.d_lat));
  }
  if (t.size() != z.rows()) throw std::invalid_argument("Backbone: time batch size mismatch");
  const Index n = z.rows();
  Tensor temb = tape.input(time_embedding(t, cfg_.time_dim), false);
  Tensor h = affine(tape.input(z, false), vars.p[size_t(stem_w_)], vars.p[size_t(stem_b_)]);
  for (Index b = 0; b < cfg_.l2r_tap(); ++b) {
    const auto& idx = block_[static_cast<size_t>(b)];
    Tensor u = add(mul(h, broadcast_rows(vars.p[size_t(idx[0])], n)),
                   broadcast_rows(vars.p[size_t(idx[1])], n));
    u = add(u, matmul(temb, vars.p[size_t(idx[2])]));
    Tensor a = silu(affine(u, vars.p[size_t(idx[3])], vars.p[size_t(idx[4])]));
    a = affine(a, vars.p[size_t(idx[5])], vars.p[size_t(idx[6])]);
    h = add(h, a);
  }
  return h;
}

Backbone::TapOutputs Backbone::forward_with_tap(Tape& tape, const Vars& vars, const Matrix& z,
                                                const Vector& t) const {
  if (z.cols() != cfg_.d_lat) {
    throw std::invalid_argument("Backbone: latent batch has dim " + std::to_string(z.cols()) +
                                ", expected " + std::to_string(cfg_.d_lat));
  }
  if (t.size() != z.rows()) throw std::invalid_argument("Backbone: time batch size mismatch");
  const Index n = z.rows();
  Tensor temb = tape.input(time_embedding(t, cfg_.time_dim), false);
  Tensor h = affine(tape.input(z, false), vars.p[size_t(stem_w_)], vars.p[size_t(stem_b_)]);
  TapOutputs out;
  for (Index b = 0; b < cfg_.depth; ++b) {
    const auto& idx = block_[static_cast<size_t>(b)];
    Tensor u = add(mul(h, broadcast_rows(vars.p[size_t(idx[0])], n)),
                   broadcast_rows(vars.p[size_t(idx[1])], n));
    u = add(u, matmul(temb, vars.p[size_t(idx[2])]));
    Tensor a = silu(affine(u, vars.p[size_t(idx[3])], vars.p[size_t(idx[4])]));
    a = affine(a, vars.p[size_t(idx[5])], vars.p[size_t(idx[6])]);
    h = add(h, a);
    if (b + 1 == cfg_.l2r_tap()) out.l2r = h;
    if (b + 1 == cfg_.proj_tap) out.tap = h;
  }
  out.v_pred = affine(h, vars.p[size_t(out_w_)], vars.p[size_t(out_b_)]);
  return out;
}

Tensor Backbone::project(Tape& tape, const Vars& vars, const Tensor& features) const {
  Tensor h = silu(affine(features, vars.p[size_t(head_[0])], vars.p[size_t(head_[1])]));
  h = silu(affine(h, vars.p[size_t(head_[2])], vars.p[size_t(head_[3])]));
  h = affine(h, vars.p[size_t(head_[4])], vars.p[size_t(head_[5])]);
  return l2_normalize_rows(h);
}

// --- plain evaluation ----------------------------------------------------

namespace {

Matrix silu_plain(const Matrix& x) {
  Array a = Eigen::Map<const Array>(x.data(), x.size());
  Array sig = (a >= 0.0).select(1.0 / (1.0 + (-a).exp()), a.exp() / (1.0 + a.exp()));
  Array out = a * sig;
  return Eigen::Map<const Matrix>(out.data(), x.rows(), x.cols());
}

}  // namespace

Matrix Backbone::features_at(const Matrix& z, const Vector& t, Index blocks) const {
  if (blocks < 0 || blocks > cfg_.depth) {
    throw std::invalid_argument("Backbone::features_at: block count out of range");
  }
  Matrix temb = time_embedding(t, cfg_.time_dim);
  Matrix h = (z * params_[size_t(stem_w_)]).rowwise() + params_[size_t(stem_b_)].row(0);
  for (Index b = 0; b < blocks; ++b) {
    const auto& idx = block_[static_cast<size_t>(b)];
    Matrix u = h.array().rowwise() * params_[size_t(idx[0])].row(0).array();
    u = u.rowwise() + params_[size_t(idx[1])].row(0);
    u += temb * params_[size_t(idx[2])];
    Matrix a = silu_plain((u * params_[size_t(idx[3])]).rowwise() + params_[size_t(idx[4])].row(0));
    a = (a * params_[size_t(idx[5])]).rowwise() + params_[size_t(idx[6])].row(0);
    h += a;
  }
  return h;
}

Matrix Backbone::velocity(const Matrix& z, const Vector& t) const {
  Matrix h = features_at(z, t, cfg_.depth);
  return (h * params_[size_t(out_w_)]).rowwise() + params_[size_t(out_b_)].row(0);
}

Matrix Backbone::velocity(const Matrix& z, double t) const {
  return velocity(z, Vector::Constant(z.rows(), t));
}

Matrix Backbone::project_features(const Matrix& features) const {
  Matrix h = silu_plain((features * params_[size_t(head_[0])]).rowwise() + params_[size_t(head_[1])].row(0));
  h = silu_plain((h * params_[size_t(head_[2])]).rowwise() + params_[size_t(head_[3])].row(0));
  h = (h * params_[size_t(head_[4])]).rowwise() + params_[size_t(head_[5])].row(0);
  for (Index i = 0; i < h.rows(); ++i) {
    const double n = h.row(i).norm();
    if (n < 1e-300) throw std::domain_error("Backbone::project_features: zero row");
    h.row(i) /= n;
  }
  return h;
}

}  // namespace erw
