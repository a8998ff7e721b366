#pragma once

#include "erw/backbone.hpp"
#include "erw/codec.hpp"
#include "erw/dataset.hpp"
#include "erw/interpolant.hpp"
#include "erw/teacher.hpp"
#include "erw/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace erw {

// Finite world over clean latents z0^(1..M) with prior weights, a many-to-one
// representation map realized as an index per latent, and the Gaussian
// forward kernel p(z_t | z0, t) = N(alpha_t z0, sigma_t^2 I). Every joint,
// marginal, and posterior quantity is computable by enumeration.
struct DiscreteToyWorld {
  Matrix latents;          // M x d
  Vector prior;            // sums to 1
  std::vector<int> r_id;   // representation index per latent (many-to-one)
  InterpolantPath path = InterpolantPath::linear();

  Index m() const { return latents.rows(); }
  Index dim() const { return latents.cols(); }
  int num_r() const;
  void validate() const;
};

// log p(z_t | z0_i, t) and its gradient in z_t
double log_forward_kernel(const DiscreteToyWorld& w, Index i, const Vector& z, double t);
Vector forward_kernel_score(const DiscreteToyWorld& w, Index i, const Vector& z, double t);

// density of z_t given t (representation integrated out) and its score
double marginal_density(const DiscreteToyWorld& w, const Vector& z, double t);
Vector marginal_score(const DiscreteToyWorld& w, const Vector& z, double t);

// density of (z_t, r) given t and its score in z_t
double joint_r_density(const DiscreteToyWorld& w, int r, const Vector& z, double t);
Vector joint_r_score(const DiscreteToyWorld& w, int r, const Vector& z, double t);

// log-posteriors as functions of z_t (for finite-difference cross-checks)
double log_posterior_joint(const DiscreteToyWorld& w, Index i, const Vector& z, double t);
double log_posterior_gen(const DiscreteToyWorld& w, Index i, const Vector& z, double t);
double log_posterior_rep(const DiscreteToyWorld& w, int r, const Vector& z, double t);

struct ScoreDecomposition {
  Vector lhs;        // grad log p(z0, r | z_t, t)
  Vector rhs_sum;    // generation score + representation score
  double max_abs_gap = 0.0;
};

// Evaluates the exact identity
//   grad log p(z0, r | z_t, t) =
//       grad log p(z0 | z_t, r, t) + grad log p(r | z_t, t)
// at latent index i (its own r); requires positive posterior mass there.
ScoreDecomposition joint_score_decomposition_check(const DiscreteToyWorld& w, double t,
                                                   const Vector& z, Index latent_index);

// max over the grid of | sum_r p(z_t, r, t) - p(z_t, t) |
double marginal_consistency_check(const DiscreteToyWorld& w, double t,
                                  const std::vector<Vector>& grid);

struct WarmupBoundaryReport {
  double trainer_loss = 0.0;  // Phase-1 objective through the trainer path
  double direct_loss = 0.0;   // independent clean-latent evaluation
  std::vector<std::pair<double, double>> noisy_curve;  // (t, alignment loss)
  bool equality_pass = false;    // |trainer - direct| <= 1e-12
  bool continuity_pass = false;  // loss at t=0.01 within 10% of the t=0 value
  bool monotone_pass = false;    // loss decreases as t decreases toward 0
};

// Confirms the Phase-1 objective equals a direct evaluation of the alignment
// loss on clean latents and that noisy-input alignment approaches the t=0
// value as t -> 0 on a trained model.
WarmupBoundaryReport warmup_boundary_check(const Backbone& model, const TeacherEncoder& teacher,
                                           const LatentCodec& codec, const ToyDataset& data);

struct RegressionCheckReport {
  double lookup_gap = 0.0;      // tabulated regressors reconstruct exactly
  double mlp_sum_rel_gap = 0.0; // |(A+B) - joint score| / |joint score|
  double mlp_rep_rel_gap = 0.0;
  double mlp_gen_rel_gap = 0.0;
  double swapped_rel_gap = 0.0; // components compared against swapped targets
};

// Fits two small regressors to the exact representation-inference and
// conditional-generation scores on the grid; their sum must reconstruct the
// joint conditional score, and swapping the targets must break the
// per-component fit.
RegressionCheckReport l2r_r2g_idealized_regression_check(const DiscreteToyWorld& w, double t,
                                                         long train_steps = 2000);

struct VerifyCheck {
  std::string name;
  bool pass = false;
  std::map<std::string, double> stats;
};

// All oracle checks; nonzero exit from the CLI when any fails. The flip flag
// is a negative-control hook for the sampler check.
std::vector<VerifyCheck> run_verify_suite(bool flip_sde_sign = false);

DiscreteToyWorld make_m4_world();

}  // namespace erw
