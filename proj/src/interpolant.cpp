#include "erw/interpolant.hpp"

#include "erw/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace erw {

namespace {

void check_t_range(double t, const char* op_name) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw std::domain_error(std::string(op_name) + ": t=" + std::to_string(t) +
                            " outside [0, 1]");
  }
}

void check_same_shape(const auto& a, const auto& b, const char* op_name) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op_name) + ": shape mismatch");
  }
}

}  // namespace

InterpolantPath InterpolantPath::linear() {
  InterpolantPath p;
  p.kind = "linear";
  p.alpha = [](double t) { return 1.0 - t; };
  p.sigma = [](double t) { return t; };
  p.dalpha = [](double) { return -1.0; };
  p.dsigma = [](double) { return 1.0; };
  return p;
}

GaussianOracle::GaussianOracle(Vector mu, Matrix sigma) : mean(std::move(mu)), cov(std::move(sigma)) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    throw std::invalid_argument("GaussianOracle: dimension mismatch");
  }
  if (!cov.isApprox(Matrix(cov.transpose()), 1e-12)) {
    throw std::invalid_argument("GaussianOracle: covariance not symmetric");
  }
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("GaussianOracle: covariance not positive definite");
  }
}

Vector forward_sample(const Vector& z0, const Vector& eps, double t, const InterpolantPath& path) {
  check_t_range(t, "forward_sample");
  if (z0.size() != eps.size()) throw std::invalid_argument("forward_sample: shape mismatch");
  return path.alpha(t) * z0 + path.sigma(t) * eps;
}

Matrix forward_sample(const Matrix& z0, const Matrix& eps, const Vector& t,
                      const InterpolantPath& path) {
  check_same_shape(z0, eps, "forward_sample");
  if (t.size() != z0.rows()) throw std::invalid_argument("forward_sample: t batch mismatch");
  Matrix out(z0.rows(), z0.cols());
  for (Index i = 0; i < z0.rows(); ++i) {
    check_t_range(t[i], "forward_sample");
    out.row(i) = path.alpha(t[i]) * z0.row(i) + path.sigma(t[i]) * eps.row(i);
  }
  return out;
}

Vector velocity_target(const Vector& z0, const Vector& eps, double t, const InterpolantPath& path) {
  check_t_range(t, "velocity_target");
  if (z0.size() != eps.size()) throw std::invalid_argument("velocity_target: shape mismatch");
  return path.dalpha(t) * z0 + path.dsigma(t) * eps;
}

Matrix velocity_target(const Matrix& z0, const Matrix& eps, const Vector& t,
                       const InterpolantPath& path) {
  check_same_shape(z0, eps, "velocity_target");
  if (t.size() != z0.rows()) throw std::invalid_argument("velocity_target: t batch mismatch");
  Matrix out(z0.rows(), z0.cols());
  for (Index i = 0; i < z0.rows(); ++i) {
    out.row(i) = path.dalpha(t[i]) * z0.row(i) + path.dsigma(t[i]) * eps.row(i);
  }
  return out;
}

namespace {

// scalar coefficients of s = ca * z + cv * v
std::pair<double, double> score_coeffs(double t, const InterpolantPath& path) {
  if (!(t > 0.0)) {
    throw std::domain_error("score_from_velocity: score is singular at t=" + std::to_string(t));
  }
  const double a = path.alpha(t), s = path.sigma(t);
  const double da = path.dalpha(t), ds = path.dsigma(t);
  const double denom = s * (da * s - a * ds);
  if (denom == 0.0) {
    throw std::domain_error("score_from_velocity: degenerate path at t=" + std::to_string(t));
  }
  return {-da / denom, a / denom};
}

}  // namespace

Vector score_from_velocity(const Vector& z, const Vector& v, double t, const InterpolantPath& path) {
  const auto [ca, cv] = score_coeffs(t, path);
  return ca * z + cv * v;
}

Matrix score_from_velocity(const Matrix& z, const Matrix& v, double t, const InterpolantPath& path) {
  const auto [ca, cv] = score_coeffs(t, path);
  return ca * z + cv * v;
}

namespace {

struct OracleSolve {
  double a, s, da, ds;
  Eigen::LLT<Matrix> llt;  // of M_t = a^2 S + s^2 I
};

OracleSolve oracle_solve(double t, const GaussianOracle& oracle, const InterpolantPath& path) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw std::domain_error("gaussian_oracle_velocity: t=" + std::to_string(t) +
                            " outside (0, 1]");
  }
  OracleSolve os;
  os.a = path.alpha(t);
  os.s = path.sigma(t);
  os.da = path.dalpha(t);
  os.ds = path.dsigma(t);
  Matrix M = os.a * os.a * oracle.cov + os.s * os.s * Matrix::Identity(oracle.dim(), oracle.dim());
  os.llt.compute(M);
  if (os.llt.info() != Eigen::Success) {
    throw std::runtime_error("gaussian_oracle_velocity: singular marginal covariance");
  }
  return os;
}

}  // namespace

Vector gaussian_oracle_velocity(const Vector& z, double t, const GaussianOracle& oracle,
                                const InterpolantPath& path) {
  const OracleSolve os = oracle_solve(t, oracle, path);
  const Vector resid = z - os.a * oracle.mean;
  const Vector minv = os.llt.solve(resid);
  const Vector ez0 = oracle.mean + os.a * (oracle.cov * minv);
  // E[eps | z_t] = sigma M^{-1} (z - alpha mu); stays finite as s -> 0
  const Vector eeps = os.s * minv;
  return os.da * ez0 + os.ds * eeps;
}

Matrix gaussian_oracle_velocity(const Matrix& z_rows, double t, const GaussianOracle& oracle,
                                const InterpolantPath& path) {
  const OracleSolve os = oracle_solve(t, oracle, path);
  Matrix resid = z_rows.rowwise() - (os.a * oracle.mean).transpose();
  // solve for all rows at once: M X^T = resid^T
  Matrix minv = os.llt.solve(resid.transpose()).transpose();
  Matrix ez0 = (minv * oracle.cov.transpose() * os.a).rowwise() + oracle.mean.transpose();
  Matrix eeps = os.s * minv;
  return os.da * ez0 + os.ds * eeps;
}

Vector gaussian_marginal_score(const Vector& z, double t, const GaussianOracle& oracle,
                               const InterpolantPath& path) {
  const OracleSolve os = oracle_solve(t, oracle, path);
  return -os.llt.solve(z - os.a * oracle.mean);
}

Matrix em_sample(const VelocityFn& velocity, const SamplerConfig& cfg, const InterpolantPath& path,
                 Index n, Index dim) {
  if (cfg.n_steps < 2) throw std::invalid_argument("em_sample: n_steps must be >= 2");
  if (!(cfg.t_min > 0.0 && cfg.t_min < 1.0)) {
    throw std::invalid_argument("em_sample: t_min must lie in (0, 1)");
  }

  std::vector<Rng> chains;
  chains.reserve(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) chains.emplace_back(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));

  Matrix z(n, dim);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < dim; ++j) z(i, j) = chains[static_cast<size_t>(i)].normal();

  const double dt = (1.0 - cfg.t_min) / cfg.n_steps;
  const double score_sign = cfg.flip_score_sign ? 1.0 : -1.0;

  for (int k = 0; k < cfg.n_steps; ++k) {
    const double t = 1.0 - k * dt;
    const Matrix v = velocity(z, t);
    if (v.rows() != n || v.cols() != dim) {
      throw std::invalid_argument("em_sample: velocity_fn returned wrong shape");
    }
    const double w = cfg.zero_diffusion ? 0.0 : path.sigma(t);
    // z(t - dt) = z(t) - dt * [v - (w/2) s]; score_sign carries the "-(w/2)s"
    Matrix drift = v;
    if (w != 0.0) {
      drift += (score_sign * 0.5 * w) * score_from_velocity(z, v, t, path);
    }
    z -= dt * drift;
    if (w != 0.0) {
      const double noise_scale = std::sqrt(w * dt);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < dim; ++j) z(i, j) += noise_scale * chains[static_cast<size_t>(i)].normal();
    }
    if (!z.allFinite()) {
      throw SamplerDivergence("em_sample: non-finite state at step " + std::to_string(k), k);
    }
  }

  // final deterministic step t_min -> 0 using the velocity only
  const Matrix v = velocity(z, cfg.t_min);
  z -= cfg.t_min * v;
  if (!z.allFinite()) {
    throw SamplerDivergence("em_sample: non-finite state in the final step", cfg.n_steps);
  }
  return z;
}

}  // namespace erw
