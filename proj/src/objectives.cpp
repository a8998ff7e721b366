#include "erw/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace erw {

Tensor diffusion_loss(Tape& tape, const Tensor& v_pred, const Matrix& z0, const Matrix& eps,
                      const Vector& t, const InterpolantPath& path) {
  if (v_pred.shape().size() != 2 || v_pred.shape()[0] != z0.rows() ||
      v_pred.shape()[1] != z0.cols()) {
    throw std::invalid_argument("diffusion_loss: prediction shape " + shape_str(v_pred.shape()) +
                                " does not match batch");
  }
  Matrix target = velocity_target(z0, eps, t, path);
  Tensor err = sub(v_pred, tape.input(target, false));
  const double inv = 1.0 / static_cast<double>(z0.rows() * z0.cols());
  return scale(sum(mul(err, err)), inv);
}

namespace {

void check_unit_rows(const Tensor& x, const char* side) {
  const Index m = x.shape()[0], n = x.shape()[1];
  Eigen::Map<const Matrix> X(x.values().data(), m, n);
  for (Index i = 0; i < m; ++i) {
    if (std::abs(X.row(i).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument(std::string("nt_xent: ") + side + " row " + std::to_string(i) +
                                  " is not unit-norm (|r| = " + std::to_string(X.row(i).norm()) +
                                  ")");
    }
  }
}

}  // namespace

Tensor nt_xent(Tape& tape, const Tensor& student, const Tensor& teacher, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("nt_xent: temperature must be positive");
  if (student.shape().size() != 2 || teacher.shape().size() != 2 ||
      student.shape() != teacher.shape()) {
    throw std::invalid_argument("nt_xent: expected matching n x d_rep inputs");
  }
  const Index n = student.shape()[0];
  if (n < 2) {
    throw std::invalid_argument("nt_xent: need at least 2 rows for in-batch negatives, got " +
                                std::to_string(n));
  }
  check_unit_rows(student, "student");
  check_unit_rows(teacher, "teacher");

  Tensor sims = scale(matmul(student, transpose(teacher)), 1.0 / temperature);
  Tensor logp = log_softmax_rows(sims);
  return scale(sum(diag(logp)), -1.0 / static_cast<double>(n));
}

Tensor nt_xent(Tape& tape, const Tensor& student, const Matrix& teacher_rows, double temperature) {
  return nt_xent(tape, student, tape.input(teacher_rows, false), temperature);
}

double s_weight(long k, double t, const PhasePlan& plan, const LambdaSchedule& schedule) {
  if (k < 0) throw std::invalid_argument("s_weight: negative step");
  if (plan.phase_of(k) == 1) return 1.0;
  (void)t;  // s(k, t) = lambda_train(k) independent of t for t > 0
  return schedule(k - plan.warmup_steps);
}

TotalLoss total_loss(Tape& tape, const Batch& batch, const Backbone& model,
                     const Backbone::Vars& vars, const TeacherEncoder& teacher,
                     const LatentCodec& codec, const InterpolantPath& path, const PhasePlan& plan,
                     const LambdaSchedule& schedule, const AlignmentConfig& align, long k, Rng& rng,
                     std::optional<double> lambda_override) {
  const Index n = batch.x.rows();
  if (n < 2) throw std::invalid_argument("total_loss: batch must hold at least 2 points");
  const int phase = plan.phase_of(k);

  Matrix z0 = codec.encode(batch.x);
  Matrix r = teacher.embed(batch.x);

  TotalLoss out;
  out.report.step = k;
  out.report.phase = phase;

  if (phase == 1) {
    // warmup: clean latents, t = 0, alignment through the span + head only
    Vector t0 = Vector::Zero(n);
    Tensor feats = model.forward_l2r(tape, vars, z0, t0);
    Tensor student = model.project(tape, vars, feats);
    Tensor loss = nt_xent(tape, student, r, align.temperature);
    out.loss = loss;
    out.report.loss_diffusion = 0.0;  // not computed in Phase 1
    out.report.loss_align = loss.scalar();
    out.report.lambda = 1.0;
    out.report.loss_total = out.report.loss_align;
    return out;
  }

  Vector t(n);
  for (Index i = 0; i < n; ++i) t[i] = rng.uniform01();
  Matrix eps = rng.normal_matrix(n, z0.cols());
  Matrix zt = forward_sample(z0, eps, t, path);

  Backbone::TapOutputs taps = model.forward_with_tap(tape, vars, zt, t);
  Tensor l_diff = diffusion_loss(tape, taps.v_pred, z0, eps, t, path);
  Tensor student = model.project(tape, vars, taps.tap);
  Tensor l_align = nt_xent(tape, student, r, align.temperature);

  const double lambda =
      lambda_override ? *lambda_override : schedule(k - plan.warmup_steps);
  Tensor loss = add(l_diff, scale(l_align, lambda));

  out.loss = loss;
  out.report.loss_diffusion = l_diff.scalar();
  out.report.loss_align = l_align.scalar();
  out.report.lambda = lambda;
  out.report.loss_total = loss.scalar();

  const double recon = out.report.loss_diffusion + lambda * out.report.loss_align;
  if (std::abs(out.report.loss_total - recon) > 1e-12 * std::max(1.0, std::abs(recon))) {
    throw std::logic_error("total_loss: loss identity violated");
  }
  return out;
}

}  // namespace erw
