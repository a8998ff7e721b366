#pragma once

#include "erw/types.hpp"

#include <cstdint>
#include <functional>
#include <string>

namespace erw {

// Interpolant schedule (alpha_t, sigma_t) with derivatives on [0,1]. The
// linear path is alpha = 1-t, sigma = t, which hits the boundary conditions
// (alpha_0, sigma_0) = (1, 0) and (alpha_1, sigma_1) = (0, 1) exactly.
struct InterpolantPath {
  std::string kind = "linear";
  std::function<double(double)> alpha;
  std::function<double(double)> sigma;
  std::function<double(double)> dalpha;
  std::function<double(double)> dsigma;

  static InterpolantPath linear();
};

struct SamplerConfig {
  int n_steps = 250;
  double t_min = 0.04;
  std::uint64_t seed = 0;
  // w_t == 0 turns the SDE into the probability-flow ODE.
  bool zero_diffusion = false;
  // Negative-control hook: flips the sign of the score drift term. The
  // Gaussian-oracle check must fail when this is set.
  bool flip_score_sign = false;
};

// Closed-form verification target: z0 ~ N(mean, cov).
struct GaussianOracle {
  Vector mean;
  Matrix cov;  // SPD; Cholesky is validated at construction

  GaussianOracle(Vector mu, Matrix sigma);
  Index dim() const { return mean.size(); }
};

// z_t = alpha_t z0 + sigma_t eps
Vector forward_sample(const Vector& z0, const Vector& eps, double t, const InterpolantPath& path);
Matrix forward_sample(const Matrix& z0, const Matrix& eps, const Vector& t,
                      const InterpolantPath& path);

// dz_t/dt = dalpha_t z0 + dsigma_t eps; for the linear path this is eps - z0.
Vector velocity_target(const Vector& z0, const Vector& eps, double t, const InterpolantPath& path);
Matrix velocity_target(const Matrix& z0, const Matrix& eps, const Vector& t,
                       const InterpolantPath& path);

// Marginal score recovered from the velocity field. Eliminating E[z0|z_t]
// and E[eps|z_t] from z = alpha z0 + sigma eps and v = dalpha z0 + dsigma eps
// gives E[eps|z_t] = (dalpha z - alpha v) / (dalpha sigma - alpha dsigma),
// and the score of the Gaussian-smoothed marginal is -E[eps|z_t]/sigma:
//   s(z, v, t) = -(dalpha_t z - alpha_t v) / (sigma_t (dalpha_t sigma_t - alpha_t dsigma_t))
// which for the linear path reduces to s = -(z + (1-t) v) / t.
Vector score_from_velocity(const Vector& z, const Vector& v, double t, const InterpolantPath& path);
Matrix score_from_velocity(const Matrix& z, const Matrix& v, double t, const InterpolantPath& path);

// Exact conditional-expectation velocity E[dz_t/dt | z_t = z] when
// z0 ~ N(mu, S). With M_t = alpha^2 S + sigma^2 I:
//   E[z0 | z_t] = mu + alpha S M_t^{-1} (z - alpha mu)
//   E[eps | z_t] = (z - alpha E[z0|z_t]) / sigma        (t > 0)
//   v = dalpha E[z0|z_t] + dsigma E[eps|z_t]
// computed with a Cholesky solve of M_t.
Vector gaussian_oracle_velocity(const Vector& z, double t, const GaussianOracle& oracle,
                                const InterpolantPath& path);
Matrix gaussian_oracle_velocity(const Matrix& z_rows, double t, const GaussianOracle& oracle,
                                const InterpolantPath& path);

// Analytic score of the marginal z_t ~ N(alpha mu, M_t), for tests.
Vector gaussian_marginal_score(const Vector& z, double t, const GaussianOracle& oracle,
                               const InterpolantPath& path);

class SamplerDivergence : public std::runtime_error {
 public:
  SamplerDivergence(const std::string& what, int step) : std::runtime_error(what), step(step) {}
  int step;
};

using VelocityFn = std::function<Matrix(const Matrix& z_rows, double t)>;

// Euler-Maruyama integration of the reverse-time SDE
//   dz = [v(z,t) - (w_t/2) s(z,t)] dt + sqrt(w_t) dWbar,   w_t = sigma_t,
// from t=1 (z ~ N(0,I)) down to t_min on a uniform grid of n_steps, followed
// by one deterministic Euler step to t=0 using the velocity only. Each chain
// draws from its own counter-based stream.
Matrix em_sample(const VelocityFn& velocity, const SamplerConfig& cfg, const InterpolantPath& path,
                 Index n, Index dim);

}  // namespace erw
