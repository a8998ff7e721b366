#pragma once

#include "erw/backbone.hpp"
#include "erw/codec.hpp"
#include "erw/dataset.hpp"
#include "erw/interpolant.hpp"
#include "erw/objectives.hpp"
#include "erw/optimizer.hpp"
#include "erw/teacher.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace erw {

struct TrainerConfig {
  OptimizerConfig opt;        // lr 1e-4, (0.9, 0.999), no weight decay, clip 1.0
  long metric_every = 250;    // cadence of the held-out metric evaluations
  Index inrun_fid_samples = 256;
  int inrun_fid_steps = 50;   // light sampler for in-run tracking
  Index final_eval_samples = 1024;
  int final_eval_steps = 250;
  int cknna_k = 10;
  bool carry_optimizer = false;  // keep moments across the phase boundary
  std::uint64_t seed = 0;
};

struct MetricReport {
  long step = 0;
  double cknna_value = 0.0;
  double toy_fid_value = 0.0;
};

struct TrainRun {
  std::uint64_t seed = 0;
  std::vector<LossReport> losses;    // one record per optimizer step
  std::vector<MetricReport> metrics; // periodic held-out evaluations
  double phase1_seconds = 0.0;
  double phase2_seconds = 0.0;
};

struct TrainContext {
  const TeacherEncoder* teacher = nullptr;
  const LatentCodec* codec = nullptr;
  const ToyDataset* data = nullptr;
  const ToyDataset* heldout = nullptr;
  InterpolantPath path = InterpolantPath::linear();
  PhasePlan plan;
  LambdaSchedule schedule;
  AlignmentConfig align;
  TrainerConfig cfg;
  // invoked every `checkpoint_every` steps when set (plus once at the end)
  long checkpoint_every = 0;
  std::function<void(long step, const Backbone&)> checkpoint_cb;
};

// Warmup: trains only the L2R parameter set on clean latents; the R2G set is
// bitwise unchanged (verified by hash). Appends one LossReport per step.
void run_phase1(Backbone& model, const TrainContext& ctx, AdamW& opt, TrainRun& run);

// Joint training on the total loss with per-sample t ~ U[0,1]. A lambda
// override of 0 reproduces plain flow matching; a constant override
// reproduces the REPA-style baseline.
void run_phase2(Backbone& model, const TrainContext& ctx, AdamW& opt, TrainRun& run,
                std::optional<double> lambda_override = {});

// Held-out metrics against the frozen teacher.
MetricReport evaluate_model(const Backbone& model, const TrainContext& ctx, long step,
                            Index n_samples, int sampler_steps);

enum class Arm { plain, repa, erw };
std::string arm_name(Arm arm);

struct ExperimentSpec {
  BackboneConfig backbone;
  const ToyDataset* data = nullptr;
  const ToyDataset* heldout = nullptr;
  const TeacherEncoder* teacher = nullptr;
  const LatentCodec* codec = nullptr;
  InterpolantPath path = InterpolantPath::linear();
  Index batch_size = 64;
  double c0 = 0.5;
  double tau_frac = 1.0 / 3.0;  // tau = tau_frac * full_steps
  double warmup_frac = 0.2;     // ERW arm: warmup = warmup_frac * budget
  TrainerConfig trainer;
};

struct ArmResult {
  Arm arm;
  std::uint64_t seed = 0;
  double final_toy_fid = 0.0;
  double final_cknna = 0.0;
  TrainRun run;
};

struct ExperimentTable {
  std::vector<ArmResult> rows;
  double median_final_fid(Arm arm) const;
};

// Runs one arm for `budget_steps` optimizer steps (the ERW arm spends
// warmup + (budget - warmup)); model init and batch stream depend only on
// the seed, so arms are paired.
ArmResult run_arm(Arm arm, long budget_steps, std::uint64_t seed, const ExperimentSpec& spec,
                  TrainRun* out_run = nullptr);

ExperimentTable run_experiment(const std::vector<Arm>& arms, long budget_steps,
                               const std::vector<std::uint64_t>& seeds,
                               const ExperimentSpec& spec);

}  // namespace erw
