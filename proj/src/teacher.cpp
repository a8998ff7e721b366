#include "erw/teacher.hpp"

#include "erw/backbone.hpp"  // fnv1a64
#include "erw/objectives.hpp"
#include "erw/optimizer.hpp"
#include "erw/rng.hpp"
#include "erw/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace erw {

namespace {

Matrix silu_plain(const Matrix& x) {
  Array a = Eigen::Map<const Array>(x.data(), x.size());
  Array sig = (a >= 0.0).select(1.0 / (1.0 + (-a).exp()), a.exp() / (1.0 + a.exp()));
  Array out = a * sig;
  return Eigen::Map<const Matrix>(out.data(), x.rows(), x.cols());
}

std::uint64_t hash_params(const std::vector<Matrix>& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Matrix& p : params) {
    h = fnv1a64(p.data(), sizeof(double) * static_cast<size_t>(p.size()), h);
  }
  return h;
}

}  // namespace

TeacherEncoder::TeacherEncoder(std::vector<Matrix> params) : params_(std::move(params)) {
  if (params_.size() != 6) {
    throw std::invalid_argument("TeacherEncoder: expected 6 parameter arrays, got " +
                                std::to_string(params_.size()));
  }
  hash_ = hash_params(params_);
}

Matrix TeacherEncoder::embed(const Matrix& x_rows) const {
  Matrix h = silu_plain((x_rows * params_[0]).rowwise() + params_[1].row(0));
  h = silu_plain((h * params_[2]).rowwise() + params_[3].row(0));
  h = (h * params_[4]).rowwise() + params_[5].row(0);
  for (Index i = 0; i < h.rows(); ++i) {
    const double n = h.row(i).norm();
    if (n < 1e-300) throw std::domain_error("TeacherEncoder::embed: zero embedding row");
    h.row(i) /= n;
  }
  return h;
}

Vector TeacherEncoder::embed(const Vector& x) const {
  Matrix row(1, x.size());
  row.row(0) = x.transpose();
  return embed(row).row(0).transpose();
}

TeacherEncoder teacher_pretrain(const ToyDataset& data, double jitter, long steps,
                                std::uint64_t seed, const TeacherConfig& cfg) {
  if (!(jitter > 0.0)) throw std::invalid_argument("teacher_pretrain: jitter must be positive");
  if (steps < 1) throw std::invalid_argument("teacher_pretrain: steps must be positive");

  const Index d = data.dim(), w = cfg.width, dr = cfg.d_rep;
  Rng init_rng(mix_seed(seed, 0x74656163ULL));
  auto randn = [&](Index r, Index c, double scale) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = scale * init_rng.normal();
    return m;
  };

  std::vector<Matrix> params = {
      randn(d, w, std::sqrt(2.0 / double(d))),   Matrix::Zero(1, w),
      randn(w, w, std::sqrt(2.0 / double(w))),   Matrix::Zero(1, w),
      randn(w, dr, 1.0 / std::sqrt(double(w))),  Matrix::Zero(1, dr),
  };

  // hold out a deterministic 20% slice for the quality gate
  const Index n_hold = std::max<Index>(1, data.n() / 5);
  const Index n_train = data.n() - n_hold;
  ToyDataset train, hold;
  train.x = data.x.topRows(n_train);
  hold.x = data.x.bottomRows(n_hold);
  train.num_classes = hold.num_classes = data.num_classes;
  train.labels.assign(data.labels.begin(), data.labels.begin() + n_train);
  hold.labels.assign(data.labels.begin() + n_train, data.labels.end());

  auto embed_on_tape = [&](Tape& tape, const std::vector<Tensor>& vars, const Matrix& x) {
    const Index n = x.rows();
    Tensor h = add(matmul(tape.input(x, false), vars[0]), broadcast_rows(vars[1], n));
    h = silu(h);
    h = silu(add(matmul(h, vars[2]), broadcast_rows(vars[3], n)));
    h = add(matmul(h, vars[4]), broadcast_rows(vars[5], n));
    return l2_normalize_rows(h);
  };

  OptimizerConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  AdamW opt(params, opt_cfg);
  Rng rng(mix_seed(seed, 0x7472616eULL));
  const Index batch = std::min<Index>(cfg.batch, n_train);

  for (long step = 0; step < steps; ++step) {
    Matrix x(batch, d);
    for (Index i = 0; i < batch; ++i) x.row(i) = train.x.row(rng.uniform_index(n_train));
    Matrix view = x + jitter * rng.normal_matrix(batch, d);

    Tape tape;
    std::vector<Tensor> vars;
    vars.reserve(params.size());
    for (const Matrix& p : params) vars.push_back(tape.input(p, true));

    Tensor anchor = embed_on_tape(tape, vars, x);
    Tensor jittered = embed_on_tape(tape, vars, view);
    Tensor loss = nt_xent(tape, jittered, anchor, cfg.temperature);
    tape.backward(loss);

    std::vector<Matrix> grads;
    grads.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      const Array& g = vars[i].grad();
      grads.push_back(Eigen::Map<const Matrix>(g.data(), params[i].rows(), params[i].cols()));
    }
    opt.step(params, grads);
  }

  TeacherEncoder teacher(std::move(params));
  const double acc = teacher_knn_accuracy(teacher, train, hold, 10);
  if (acc <= cfg.knn_gate) {
    throw std::runtime_error("teacher_pretrain: quality gate failed, 10-NN held-out accuracy " +
                             std::to_string(acc) + " <= " + std::to_string(cfg.knn_gate));
  }
  // collapsed-embedding guard: every output dimension must carry variance
  Matrix emb = teacher.embed(data.x);
  Vector mean = emb.colwise().mean();
  Vector var = ((emb.rowwise() - mean.transpose()).array().square().colwise().sum() /
                double(emb.rows() - 1))
                   .matrix();
  if (var.minCoeff() <= 1e-6) {
    throw std::runtime_error("teacher_pretrain: collapsed embedding dimension, min variance " +
                             std::to_string(var.minCoeff()));
  }
  return teacher;
}

double teacher_knn_accuracy(const TeacherEncoder& teacher, const ToyDataset& train,
                            const ToyDataset& heldout, int k) {
  if (k < 1 || train.n() < k) throw std::invalid_argument("teacher_knn_accuracy: bad k");
  Matrix etrain = teacher.embed(train.x);
  Matrix ehold = teacher.embed(heldout.x);
  Matrix sims = ehold * etrain.transpose();

  Index correct = 0;
  std::vector<int> order(static_cast<size_t>(train.n()));
  for (Index i = 0; i < heldout.n(); ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int b) { return sims(i, a) > sims(i, b); });
    std::map<int, int> votes;
    for (int j = 0; j < k; ++j) ++votes[train.labels[static_cast<size_t>(order[j])]];
    int best = -1, best_count = -1;
    for (const auto& [label, count] : votes) {
      if (count > best_count) {
        best = label;
        best_count = count;
      }
    }
    if (best == heldout.labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(heldout.n());
}

double fisher_ratio(const TeacherEncoder& teacher, const ToyDataset& data) {
  Matrix emb = teacher.embed(data.x);
  const int C = data.num_classes;
  Matrix means = Matrix::Zero(C, emb.cols());
  Vector counts = Vector::Zero(C);
  for (Index i = 0; i < emb.rows(); ++i) {
    means.row(data.labels[static_cast<size_t>(i)]) += emb.row(i);
    counts[data.labels[static_cast<size_t>(i)]] += 1.0;
  }
  for (int c = 0; c < C; ++c) means.row(c) /= counts[c];

  double within = 0.0;
  for (Index i = 0; i < emb.rows(); ++i) {
    within += (emb.row(i) - means.row(data.labels[static_cast<size_t>(i)])).norm();
  }
  within /= static_cast<double>(emb.rows());

  double between = 0.0;
  int pairs = 0;
  for (int a = 0; a < C; ++a)
    for (int b = a + 1; b < C; ++b) {
      between += (means.row(a) - means.row(b)).norm();
      ++pairs;
    }
  between /= static_cast<double>(pairs);
  return between / std::max(within, 1e-300);
}

}  // namespace erw
