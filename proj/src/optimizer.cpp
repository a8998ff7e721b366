#include "erw/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace erw {

AdamW::AdamW(const std::vector<Matrix>& params_like, OptimizerConfig cfg) : cfg_(cfg) {
  m_.reserve(params_like.size());
  v_.reserve(params_like.size());
  for (const Matrix& p : params_like) {
    m_.push_back(Matrix::Zero(p.rows(), p.cols()));
    v_.push_back(Matrix::Zero(p.rows(), p.cols()));
  }
}

void AdamW::reset() {
  for (Matrix& m : m_) m.setZero();
  for (Matrix& v : v_) v.setZero();
  step_count_ = 0;
}

void AdamW::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads) {
  std::vector<int> active(params.size());
  for (size_t i = 0; i < params.size(); ++i) active[i] = static_cast<int>(i);
  step(params, grads, active);
}

void AdamW::step(std::vector<Matrix>& params, const std::vector<Matrix>& grads,
                 const std::vector<int>& active) {
  if (params.size() != grads.size() || params.size() != m_.size()) {
    throw std::invalid_argument("AdamW::step: parameter/gradient structure mismatch");
  }
  ++step_count_;

  double sq_norm = 0.0;
  for (int i : active) {
    const Matrix& g = grads[static_cast<size_t>(i)];
    if (!g.allFinite()) {
      throw std::runtime_error("AdamW::step: non-finite gradient at step " +
                               std::to_string(step_count_) + ", param " + std::to_string(i));
    }
    sq_norm += g.squaredNorm();
  }
  const double norm = std::sqrt(sq_norm);
  const double clip = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));

  for (int idx : active) {
    const size_t i = static_cast<size_t>(idx);
    Matrix g = grads[i] * clip;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    if (cfg_.weight_decay != 0.0) {
      params[i] -= cfg_.lr * cfg_.weight_decay * params[i];
    }
    params[i].array() -=
        cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

}  // namespace erw
