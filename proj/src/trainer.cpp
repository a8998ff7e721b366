#include "erw/trainer.hpp"

#include "erw/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace erw {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::vector<Matrix> collect_grads(const Backbone& model, const Backbone::Vars& vars) {
  std::vector<Matrix> grads;
  grads.reserve(static_cast<size_t>(model.num_params()));
  for (Index i = 0; i < model.num_params(); ++i) {
    const Array& g = vars.p[static_cast<size_t>(i)].grad();
    grads.push_back(
        Eigen::Map<const Matrix>(g.data(), model.param(i).rows(), model.param(i).cols()));
  }
  return grads;
}

void maybe_checkpoint(const TrainContext& ctx, long step, const Backbone& model) {
  if (ctx.checkpoint_cb && ctx.checkpoint_every > 0 && step > 0 && step % ctx.checkpoint_every == 0) {
    ctx.checkpoint_cb(step, model);
  }
}

void maybe_metrics(const TrainContext& ctx, long step, const Backbone& model, TrainRun& run) {
  if (ctx.cfg.metric_every > 0 && step > 0 && step % ctx.cfg.metric_every == 0) {
    run.metrics.push_back(
        evaluate_model(model, ctx, step, ctx.cfg.inrun_fid_samples, ctx.cfg.inrun_fid_steps));
  }
}

}  // namespace

MetricReport evaluate_model(const Backbone& model, const TrainContext& ctx, long step,
                            Index n_samples, int sampler_steps) {
  MetricReport rep;
  rep.step = step;

  const Matrix& hx = ctx.heldout->x;
  Matrix hz = ctx.codec->encode(hx);
  Matrix teacher_feats = ctx.teacher->embed(hx);
  Matrix tap_feats = model.features_at(hz, Vector::Zero(hz.rows()), model.config().proj_tap);
  MetricConfig mc;
  mc.k = ctx.cfg.cknna_k;
  rep.cknna_value = cknna(tap_feats, teacher_feats, mc);

  SamplerConfig sc;
  sc.n_steps = sampler_steps;
  sc.seed = mix_seed(ctx.cfg.seed, 0x65766100ULL + static_cast<std::uint64_t>(step));
  VelocityFn vf = [&model](const Matrix& z, double t) { return model.velocity(z, t); };
  Matrix z_gen = em_sample(vf, sc, ctx.path, n_samples, model.config().d_lat);
  Matrix x_gen = ctx.codec->decode(z_gen);
  rep.toy_fid_value = toy_fid(ctx.teacher->embed(hx), ctx.teacher->embed(x_gen));
  return rep;
}

void run_phase1(Backbone& model, const TrainContext& ctx, AdamW& opt, TrainRun& run) {
  const double t0 = now_seconds();
  const auto [l2r, r2g] = model.partition_params();
  const std::uint64_t r2g_hash_before = model.params_hash(r2g);

  Rng rng(mix_seed(ctx.cfg.seed, 0x70683100ULL));
  for (long k = 0; k < ctx.plan.warmup_steps; ++k) {
    Batch batch{sample_rows(*ctx.data, ctx.plan.batch_size, rng)};
    Tape tape;
    Backbone::Vars vars = model.vars(tape);
    TotalLoss tl = total_loss(tape, batch, model, vars, *ctx.teacher, *ctx.codec, ctx.path,
                              ctx.plan, ctx.schedule, ctx.align, k, rng);
    tape.backward(tl.loss);

    // decoupling: the warmup loss reads only the span + head, so R2G
    // gradients are structurally zero; spot-check numerically
    if (k % 100 == 0) {
      for (int i : r2g) {
        if (vars.p[static_cast<size_t>(i)].grad().abs().maxCoeff() != 0.0) {
          throw std::logic_error("run_phase1: nonzero R2G gradient on " +
                                 model.param_info(i).name);
        }
      }
    }

    std::vector<Matrix> grads = collect_grads(model, vars);
    opt.step(model.params(), grads, l2r);
    run.losses.push_back(tl.report);
    maybe_metrics(ctx, k + 1, model, run);
    maybe_checkpoint(ctx, k + 1, model);
  }

  if (model.params_hash(r2g) != r2g_hash_before) {
    throw std::logic_error("run_phase1: R2G parameters changed during warmup");
  }
  run.phase1_seconds += now_seconds() - t0;
}

void run_phase2(Backbone& model, const TrainContext& ctx, AdamW& opt, TrainRun& run,
                std::optional<double> lambda_override) {
  const double t0 = now_seconds();
  Rng rng(mix_seed(ctx.cfg.seed, 0x70683200ULL));
  const long begin = ctx.plan.warmup_steps;
  const long end = ctx.plan.warmup_steps + ctx.plan.full_steps;

  for (long k = begin; k < end; ++k) {
    Batch batch{sample_rows(*ctx.data, ctx.plan.batch_size, rng)};
    Tape tape;
    Backbone::Vars vars = model.vars(tape);
    TotalLoss tl = total_loss(tape, batch, model, vars, *ctx.teacher, *ctx.codec, ctx.path,
                              ctx.plan, ctx.schedule, ctx.align, k, rng, lambda_override);
    tape.backward(tl.loss);
    std::vector<Matrix> grads = collect_grads(model, vars);
    opt.step(model.params(), grads);
    run.losses.push_back(tl.report);
    maybe_metrics(ctx, k + 1, model, run);
    maybe_checkpoint(ctx, k + 1, model);
  }
  run.phase2_seconds += now_seconds() - t0;
}

std::string arm_name(Arm arm) {
  switch (arm) {
    case Arm::plain: return "plain";
    case Arm::repa: return "repa";
    case Arm::erw: return "erw";
  }
  return "?";
}

ArmResult run_arm(Arm arm, long budget_steps, std::uint64_t seed, const ExperimentSpec& spec,
                  TrainRun* out_run) {
  if (budget_steps < 1) throw std::invalid_argument("run_arm: budget must be positive");
  if (!spec.data || !spec.heldout || !spec.teacher || !spec.codec) {
    throw std::invalid_argument("run_arm: experiment spec is missing data/teacher/codec");
  }

  TrainContext ctx;
  ctx.teacher = spec.teacher;
  ctx.codec = spec.codec;
  ctx.data = spec.data;
  ctx.heldout = spec.heldout;
  ctx.path = spec.path;
  ctx.align = AlignmentConfig{};
  ctx.cfg = spec.trainer;
  ctx.cfg.seed = mix_seed(seed, 0x7472616eULL);  // same batch stream across arms

  long warmup = 0;
  if (arm == Arm::erw) {
    warmup = std::lround(spec.warmup_frac * static_cast<double>(budget_steps));
    warmup = std::clamp<long>(warmup, 0, budget_steps);
  }
  ctx.plan.warmup_steps = warmup;
  ctx.plan.full_steps = budget_steps - warmup;
  ctx.plan.batch_size = spec.batch_size;
  ctx.schedule.c0 = spec.c0;
  ctx.schedule.tau = std::max(1.0, spec.tau_frac * static_cast<double>(ctx.plan.full_steps));

  // paired model init across arms
  Backbone model(spec.backbone, mix_seed(seed, 0x6d6f6465ULL));
  AdamW opt(model.params(), ctx.cfg.opt);

  ArmResult result;
  result.arm = arm;
  result.seed = seed;
  result.run.seed = seed;

  std::optional<double> lambda_override;
  if (arm == Arm::plain) lambda_override = 0.0;
  if (arm == Arm::repa) lambda_override = spec.c0;

  if (warmup > 0) {
    run_phase1(model, ctx, opt, result.run);
    if (!ctx.cfg.carry_optimizer) opt.reset();
  }
  run_phase2(model, ctx, opt, result.run, lambda_override);

  if (static_cast<long>(result.run.losses.size()) != budget_steps) {
    throw std::logic_error("run_arm: step budget mismatch, recorded " +
                           std::to_string(result.run.losses.size()) + " of " +
                           std::to_string(budget_steps));
  }

  MetricReport final_rep = evaluate_model(model, ctx, budget_steps, ctx.cfg.final_eval_samples,
                                          ctx.cfg.final_eval_steps);
  result.run.metrics.push_back(final_rep);
  result.final_toy_fid = final_rep.toy_fid_value;
  result.final_cknna = final_rep.cknna_value;
  if (ctx.checkpoint_cb) ctx.checkpoint_cb(budget_steps, model);
  if (out_run) *out_run = result.run;
  return result;
}

double ExperimentTable::median_final_fid(Arm arm) const {
  std::vector<double> vals;
  for (const ArmResult& r : rows) {
    if (r.arm == arm) vals.push_back(r.final_toy_fid);
  }
  if (vals.empty()) throw std::invalid_argument("median_final_fid: no rows for arm");
  std::sort(vals.begin(), vals.end());
  const size_t n = vals.size();
  return n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
}

ExperimentTable run_experiment(const std::vector<Arm>& arms, long budget_steps,
                               const std::vector<std::uint64_t>& seeds,
                               const ExperimentSpec& spec) {
  ExperimentTable table;
  for (Arm arm : arms) {
    for (std::uint64_t seed : seeds) {
      table.rows.push_back(run_arm(arm, budget_steps, seed, spec));
    }
  }
  return table;
}

}  // namespace erw
