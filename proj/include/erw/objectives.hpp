#pragma once

#include "erw/backbone.hpp"
#include "erw/codec.hpp"
#include "erw/interpolant.hpp"
#include "erw/rng.hpp"
#include "erw/teacher.hpp"
#include "erw/tensor.hpp"
#include "erw/types.hpp"

#include <optional>

namespace erw {

struct AlignmentConfig {
  double temperature = 0.1;  // NT-Xent temperature; student -> teacher with in-batch negatives
};

// lambda_train(k) = c0 * exp(-k / tau); strictly decreasing, positive.
struct LambdaSchedule {
  double c0 = 0.5;
  double tau = 1.0;

  double operator()(long k) const { return c0 * std::exp(-static_cast<double>(k) / tau); }
};

struct PhasePlan {
  long warmup_steps = 0;
  long full_steps = 0;
  Index batch_size = 256;

  long budget() const { return warmup_steps + full_steps; }
  int phase_of(long k) const { return k < warmup_steps ? 1 : 2; }
};

struct LossReport {
  long step = 0;
  int phase = 0;
  double loss_diffusion = 0.0;
  double loss_align = 0.0;
  double loss_total = 0.0;
  double lambda = 0.0;  // effective alignment weight at this step
};

// Mean over batch and dimensions of the squared error against the velocity
// target dalpha_t z0 + dsigma_t eps.
Tensor diffusion_loss(Tape& tape, const Tensor& v_pred, const Matrix& z0, const Matrix& eps,
                      const Vector& t, const InterpolantPath& path);

// -(1/n) sum_i log[ exp(<s_i, r_i>/tau) / sum_j exp(<s_i, r_j>/tau) ].
// Rows of both arguments must be unit-norm within 1e-6; n >= 2.
Tensor nt_xent(Tape& tape, const Tensor& student, const Tensor& teacher, double temperature);
Tensor nt_xent(Tape& tape, const Tensor& student, const Matrix& teacher_rows, double temperature);

// Phase 1 returns 1 (alignment runs on clean latents, t = 0); Phase 2 returns
// lambda_train with the step counted from the start of Phase 2.
double s_weight(long k, double t, const PhasePlan& plan, const LambdaSchedule& schedule);

struct Batch {
  Matrix x;  // n x d data points
};

struct TotalLoss {
  Tensor loss;  // scalar on the tape
  LossReport report;
};

// Phase 1: alignment on clean latents through the warmup span and head only.
// Phase 2: diffusion loss plus decayed alignment at the projection tap, with
// per-sample t ~ U[0,1]. Teacher embeddings always come from clean x.
TotalLoss total_loss(Tape& tape, const Batch& batch, const Backbone& model,
                     const Backbone::Vars& vars, const TeacherEncoder& teacher,
                     const LatentCodec& codec, const InterpolantPath& path, const PhasePlan& plan,
                     const LambdaSchedule& schedule, const AlignmentConfig& align, long k, Rng& rng,
                     std::optional<double> lambda_override = {});

}  // namespace erw
