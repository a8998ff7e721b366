#include "erw/verify.hpp"

#include "erw/objectives.hpp"
#include "erw/optimizer.hpp"
#include "erw/rng.hpp"
#include "erw/tensor.hpp"
#include "erw/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace erw {

int DiscreteToyWorld::num_r() const {
  int mx = -1;
  for (int r : r_id) mx = std::max(mx, r);
  return mx + 1;
}

void DiscreteToyWorld::validate() const {
  if (m() < 1 || m() > 8) throw std::invalid_argument("DiscreteToyWorld: M must be in [1, 8]");
  if (dim() < 1 || dim() > 2) throw std::invalid_argument("DiscreteToyWorld: d must be 1 or 2");
  if (prior.size() != m() || static_cast<Index>(r_id.size()) != m()) {
    throw std::invalid_argument("DiscreteToyWorld: prior/r_id size mismatch");
  }
  if (prior.minCoeff() < 0.0 || std::abs(prior.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("DiscreteToyWorld: prior must be a distribution");
  }
}

double log_forward_kernel(const DiscreteToyWorld& w, Index i, const Vector& z, double t) {
  const double a = w.path.alpha(t), s = w.path.sigma(t);
  const double s2 = s * s;
  const Vector resid = z - a * w.latents.row(i).transpose();
  return -0.5 * w.dim() * std::log(2.0 * M_PI * s2) - resid.squaredNorm() / (2.0 * s2);
}

Vector forward_kernel_score(const DiscreteToyWorld& w, Index i, const Vector& z, double t) {
  const double a = w.path.alpha(t), s = w.path.sigma(t);
  return -(z - a * w.latents.row(i).transpose()) / (s * s);
}

namespace {

// posterior weights over a subset of latents, computed stably in log space
struct MixturePosterior {
  Vector weights;   // over the subset, sums to 1
  double log_density = 0.0;
  double density = 0.0;
};

MixturePosterior mixture_posterior(const DiscreteToyWorld& w, const std::vector<Index>& subset,
                                   const Vector& z, double t) {
  MixturePosterior out;
  Vector logs(static_cast<Index>(subset.size()));
  for (size_t j = 0; j < subset.size(); ++j) {
    const Index i = subset[j];
    logs[static_cast<Index>(j)] =
        std::log(w.prior[i]) + log_forward_kernel(w, i, z, t);
  }
  const double mx = logs.maxCoeff();
  Vector expd = (logs.array() - mx).exp();
  const double sum = expd.sum();
  out.weights = expd / sum;
  out.log_density = mx + std::log(sum);
  // plain-arithmetic density for the exact marginal identity
  double dens = 0.0;
  for (size_t j = 0; j < subset.size(); ++j) {
    const Index i = subset[j];
    dens += w.prior[i] * std::exp(log_forward_kernel(w, i, z, t));
  }
  out.density = dens;
  return out;
}

std::vector<Index> all_latents(const DiscreteToyWorld& w) {
  std::vector<Index> idx(static_cast<size_t>(w.m()));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

std::vector<Index> latents_with_r(const DiscreteToyWorld& w, int r) {
  std::vector<Index> idx;
  for (Index i = 0; i < w.m(); ++i)
    if (w.r_id[static_cast<size_t>(i)] == r) idx.push_back(i);
  if (idx.empty()) throw std::invalid_argument("DiscreteToyWorld: no latent maps to r");
  return idx;
}

Vector mixture_score(const DiscreteToyWorld& w, const std::vector<Index>& subset, const Vector& z,
                     double t) {
  const MixturePosterior post = mixture_posterior(w, subset, z, t);
  Vector score = Vector::Zero(w.dim());
  for (size_t j = 0; j < subset.size(); ++j) {
    score += post.weights[static_cast<Index>(j)] * forward_kernel_score(w, subset[j], z, t);
  }
  return score;
}

}  // namespace

double marginal_density(const DiscreteToyWorld& w, const Vector& z, double t) {
  return mixture_posterior(w, all_latents(w), z, t).density;
}

Vector marginal_score(const DiscreteToyWorld& w, const Vector& z, double t) {
  return mixture_score(w, all_latents(w), z, t);
}

double joint_r_density(const DiscreteToyWorld& w, int r, const Vector& z, double t) {
  return mixture_posterior(w, latents_with_r(w, r), z, t).density;
}

Vector joint_r_score(const DiscreteToyWorld& w, int r, const Vector& z, double t) {
  return mixture_score(w, latents_with_r(w, r), z, t);
}

double log_posterior_joint(const DiscreteToyWorld& w, Index i, const Vector& z, double t) {
  const double log_num = std::log(w.prior[i]) + log_forward_kernel(w, i, z, t);
  return log_num - mixture_posterior(w, all_latents(w), z, t).log_density;
}

double log_posterior_gen(const DiscreteToyWorld& w, Index i, const Vector& z, double t) {
  const int r = w.r_id[static_cast<size_t>(i)];
  const double log_num = std::log(w.prior[i]) + log_forward_kernel(w, i, z, t);
  return log_num - mixture_posterior(w, latents_with_r(w, r), z, t).log_density;
}

double log_posterior_rep(const DiscreteToyWorld& w, int r, const Vector& z, double t) {
  return mixture_posterior(w, latents_with_r(w, r), z, t).log_density -
         mixture_posterior(w, all_latents(w), z, t).log_density;
}

ScoreDecomposition joint_score_decomposition_check(const DiscreteToyWorld& w, double t,
                                                   const Vector& z, Index latent_index) {
  w.validate();
  if (!(t > 0.0 && t < 1.0)) throw std::domain_error("joint_score_decomposition_check: t in (0,1)");
  if (latent_index < 0 || latent_index >= w.m() || w.prior[latent_index] <= 0.0) {
    throw std::invalid_argument("joint_score_decomposition_check: zero posterior mass at latent");
  }
  const int r = w.r_id[static_cast<size_t>(latent_index)];
  const Vector kernel_score = forward_kernel_score(w, latent_index, z, t);

  // grad log p(z0, r | z_t) = grad log p(z_t | z0) - grad log p(z_t)
  ScoreDecomposition out;
  out.lhs = kernel_score - marginal_score(w, z, t);
  const Vector gen = kernel_score - joint_r_score(w, r, z, t);
  const Vector rep = joint_r_score(w, r, z, t) - marginal_score(w, z, t);
  out.rhs_sum = gen + rep;
  out.max_abs_gap = (out.lhs - out.rhs_sum).cwiseAbs().maxCoeff();
  return out;
}

double marginal_consistency_check(const DiscreteToyWorld& w, double t,
                                  const std::vector<Vector>& grid) {
  w.validate();
  double max_gap = 0.0;
  for (const Vector& z : grid) {
    double sum_r = 0.0;
    for (int r = 0; r < w.num_r(); ++r) sum_r += joint_r_density(w, r, z, t);
    max_gap = std::max(max_gap, std::abs(sum_r - marginal_density(w, z, t)));
  }
  return max_gap;
}

// --- warmup boundary ------------------------------------------------------

namespace {

// independent NT-Xent evaluation (plain Eigen, no tape)
double nt_xent_plain(const Matrix& student, const Matrix& teacher, double temperature) {
  const Index n = student.rows();
  Matrix sims = student * teacher.transpose() / temperature;
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double mx = sims.row(i).maxCoeff();
    const double lse = mx + std::log((sims.row(i).array() - mx).exp().sum());
    loss += sims(i, i) - lse;
  }
  return -loss / static_cast<double>(n);
}

}  // namespace

WarmupBoundaryReport warmup_boundary_check(const Backbone& model, const TeacherEncoder& teacher,
                                           const LatentCodec& codec, const ToyDataset& data) {
  const Index n = std::min<Index>(256, data.n());
  Matrix x = data.x.topRows(n);
  Matrix z0 = codec.encode(x);
  Matrix r = teacher.embed(x);
  const AlignmentConfig align;

  WarmupBoundaryReport rep;

  // trainer path: Phase-1 objective via total_loss
  {
    PhasePlan plan;
    plan.warmup_steps = 1;
    plan.full_steps = 0;
    plan.batch_size = n;
    LambdaSchedule sched;
    sched.tau = 1.0;
    Rng rng(1);
    Tape tape;
    Backbone::Vars vars = model.vars(tape);
    Batch batch{x};
    TotalLoss tl = total_loss(tape, batch, model, vars, teacher, codec,
                              InterpolantPath::linear(), plan, sched, align, 0, rng);
    rep.trainer_loss = tl.report.loss_total;
  }

  // direct path: clean latents through the span + head, plain arithmetic
  {
    Matrix feats = model.features_at(z0, Vector::Zero(n), model.config().l2r_tap());
    Matrix student = model.project_features(feats);
    rep.direct_loss = nt_xent_plain(student, r, align.temperature);
  }
  rep.equality_pass = std::abs(rep.trainer_loss - rep.direct_loss) <=
                      1e-12 * std::max(1.0, std::abs(rep.direct_loss));

  // noisy-input alignment as t -> 0, averaged over fixed noise draws
  const std::vector<double> ts = {0.2, 0.1, 0.05, 0.01};
  Rng rng(mix_seed(7, 0x626e6479ULL));
  const int n_draws = 8;
  const InterpolantPath path = InterpolantPath::linear();
  for (double t : ts) {
    double acc = 0.0;
    for (int d = 0; d < n_draws; ++d) {
      Matrix eps = rng.normal_matrix(n, z0.cols());
      Matrix zt = forward_sample(z0, eps, Vector::Constant(n, t), path);
      Matrix feats = model.features_at(zt, Vector::Constant(n, t), model.config().l2r_tap());
      Matrix student = model.project_features(feats);
      acc += nt_xent_plain(student, r, align.temperature);
    }
    rep.noisy_curve.push_back({t, acc / n_draws});
  }

  rep.monotone_pass = true;
  for (size_t i = 1; i < rep.noisy_curve.size(); ++i) {
    if (rep.noisy_curve[i].second > rep.noisy_curve[i - 1].second) rep.monotone_pass = false;
  }
  const double at_001 = rep.noisy_curve.back().second;
  rep.continuity_pass =
      std::abs(at_001 - rep.direct_loss) <= 0.10 * std::max(1e-12, std::abs(rep.direct_loss));
  return rep;
}

// --- idealized regressions -------------------------------------------------

namespace {

// tiny scalar->scalar MLP trained on the grid; inputs scaled to [-1, 1],
// targets normalized by their RMS
struct ScalarRegressor {
  std::vector<Matrix> params;
  double in_scale = 1.0;
  double target_rms = 1.0;

  static ScalarRegressor fit(const Vector& zs, const Vector& targets, long steps,
                             std::uint64_t seed) {
    const Index width = 32;
    Rng init(mix_seed(seed, 0x72656772ULL));
    auto randn = [&](Index rr, Index cc, double sc) {
      Matrix m(rr, cc);
      for (Index i = 0; i < rr; ++i)
        for (Index j = 0; j < cc; ++j) m(i, j) = sc * init.normal();
      return m;
    };
    ScalarRegressor reg;
    reg.in_scale = zs.cwiseAbs().maxCoeff();
    reg.target_rms = std::max(std::sqrt(targets.squaredNorm() / targets.size()), 1e-12);
    reg.params = {randn(1, width, 1.0),
                  Matrix::Zero(1, width),
                  randn(width, width, std::sqrt(2.0 / double(width))),
                  Matrix::Zero(1, width),
                  randn(width, 1, 1.0 / std::sqrt(double(width))),
                  Matrix::Zero(1, 1)};

    Matrix in(zs.size(), 1);
    in.col(0) = zs / reg.in_scale;
    Matrix target(zs.size(), 1);
    target.col(0) = targets / reg.target_rms;

    OptimizerConfig oc;
    oc.lr = 1e-2;
    oc.clip_norm = 1e9;  // tiny full-batch problem; clipping not needed
    AdamW opt(reg.params, oc);
    for (long s = 0; s < steps; ++s) {
      Tape tape;
      std::vector<Tensor> vars;
      for (const Matrix& p : reg.params) vars.push_back(tape.input(p, true));
      const Index nb = in.rows();
      Tensor h = silu(add(matmul(tape.input(in, false), vars[0]), broadcast_rows(vars[1], nb)));
      h = silu(add(matmul(h, vars[2]), broadcast_rows(vars[3], nb)));
      h = add(matmul(h, vars[4]), broadcast_rows(vars[5], nb));
      Tensor err = sub(h, tape.input(target, false));
      Tensor loss = scale(sum(mul(err, err)), 1.0 / double(nb));
      tape.backward(loss);
      std::vector<Matrix> grads;
      for (size_t i = 0; i < reg.params.size(); ++i) {
        const Array& g = vars[i].grad();
        grads.push_back(
            Eigen::Map<const Matrix>(g.data(), reg.params[i].rows(), reg.params[i].cols()));
      }
      opt.step(reg.params, grads);
    }
    return reg;
  }

  Vector predict(const Vector& zs) const {
    Matrix h(zs.size(), 1);
    h.col(0) = zs / in_scale;
    auto silu_m = [](Matrix m) {
      for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) {
          const double v = m(i, j);
          m(i, j) = v / (1.0 + std::exp(-v));
        }
      return m;
    };
    h = silu_m((h * params[0]).rowwise() + params[1].row(0));
    h = silu_m((h * params[2]).rowwise() + params[3].row(0));
    h = (h * params[4]).rowwise() + params[5].row(0);
    return h.col(0) * target_rms;
  }
};

double rel_gap(const Vector& a, const Vector& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-12);
}

}  // namespace

RegressionCheckReport l2r_r2g_idealized_regression_check(const DiscreteToyWorld& w, double t,
                                                         long train_steps) {
  w.validate();
  if (w.dim() != 1) {
    throw std::invalid_argument("l2r_r2g_idealized_regression_check: 1-D worlds only");
  }
  const Index n_grid = 50;
  Vector zs(n_grid);
  for (Index i = 0; i < n_grid; ++i) zs[i] = -6.0 + 12.0 * double(i) / double(n_grid - 1);

  const Index latent = 0;
  const int r = w.r_id[0];
  Vector f_joint(n_grid), f_gen(n_grid), f_rep(n_grid);
  for (Index i = 0; i < n_grid; ++i) {
    Vector z(1);
    z[0] = zs[i];
    const Vector ks = forward_kernel_score(w, latent, z, t);
    f_joint[i] = (ks - marginal_score(w, z, t))[0];
    f_gen[i] = (ks - joint_r_score(w, r, z, t))[0];
    f_rep[i] = (joint_r_score(w, r, z, t) - marginal_score(w, z, t))[0];
  }

  RegressionCheckReport rep;
  // lookup regressors reconstruct by the exact identity
  rep.lookup_gap = (f_gen + f_rep - f_joint).cwiseAbs().maxCoeff();

  ScalarRegressor reg_rep = ScalarRegressor::fit(zs, f_rep, train_steps, 11);
  ScalarRegressor reg_gen = ScalarRegressor::fit(zs, f_gen, train_steps, 23);
  Vector a = reg_rep.predict(zs);
  Vector b = reg_gen.predict(zs);

  rep.mlp_rep_rel_gap = rel_gap(a, f_rep);
  rep.mlp_gen_rel_gap = rel_gap(b, f_gen);
  rep.mlp_sum_rel_gap = rel_gap(a + b, f_joint);
  rep.swapped_rel_gap = std::max(rel_gap(a, f_gen), rel_gap(b, f_rep));
  return rep;
}

// --- suite ------------------------------------------------------------------

DiscreteToyWorld make_m4_world() {
  DiscreteToyWorld w;
  w.latents.resize(4, 1);
  w.latents << -3.0, -1.0, 1.0, 3.0;
  w.prior.resize(4);
  w.prior << 0.4, 0.1, 0.2, 0.3;
  w.r_id = {0, 0, 1, 1};  // two latents share each representation
  w.validate();
  return w;
}

std::vector<VerifyCheck> run_verify_suite(bool flip_sde_sign) {
  std::vector<VerifyCheck> checks;
  const DiscreteToyWorld w = make_m4_world();

  // Theorem-1 identity, analytic enumeration
  {
    VerifyCheck c;
    c.name = "theorem1-identity";
    double max_gap = 0.0;
    for (double t : {0.1, 0.5, 0.9}) {
      for (Index g = 0; g < 20; ++g) {
        Vector z(1);
        z[0] = -6.0 + 12.0 * double(g) / 19.0;
        for (Index i = 0; i < w.m(); ++i) {
          max_gap = std::max(max_gap, joint_score_decomposition_check(w, t, z, i).max_abs_gap);
        }
      }
    }
    c.stats["max_gap"] = max_gap;
    c.pass = max_gap <= 1e-10;
    checks.push_back(c);
  }

  // Theorem-1 scores via central differences of the log-posteriors
  {
    VerifyCheck c;
    c.name = "theorem1-finite-difference";
    const double h = 1e-5;
    double max_err = 0.0;
    for (double t : {0.1, 0.5, 0.9}) {
      for (Index g = 0; g < 20; ++g) {
        Vector z(1);
        z[0] = -6.0 + 12.0 * double(g) / 19.0;
        Vector zp = z, zm = z;
        zp[0] += h;
        zm[0] -= h;
        const Index i = 1;
        const int r = w.r_id[static_cast<size_t>(i)];
        const double fd_joint =
            (log_posterior_joint(w, i, zp, t) - log_posterior_joint(w, i, zm, t)) / (2 * h);
        const double fd_gen =
            (log_posterior_gen(w, i, zp, t) - log_posterior_gen(w, i, zm, t)) / (2 * h);
        const double fd_rep =
            (log_posterior_rep(w, r, zp, t) - log_posterior_rep(w, r, zm, t)) / (2 * h);
        const ScoreDecomposition sd = joint_score_decomposition_check(w, t, z, i);
        const Vector ks = forward_kernel_score(w, i, z, t);
        const double an_gen = (ks - joint_r_score(w, r, z, t))[0];
        const double an_rep = (joint_r_score(w, r, z, t) - marginal_score(w, z, t))[0];
        max_err = std::max({max_err, std::abs(fd_joint - sd.lhs[0]), std::abs(fd_gen - an_gen),
                            std::abs(fd_rep - an_rep)});
      }
    }
    c.stats["max_fd_error"] = max_err;
    c.pass = max_err <= 1e-6;
    checks.push_back(c);
  }

  // Marginal consistency and posterior normalization
  {
    VerifyCheck c;
    c.name = "marginal-consistency";
    std::vector<Vector> grid;
    for (Index g = 0; g < 50; ++g) {
      Vector z(1);
      z[0] = -6.0 + 12.0 * double(g) / 49.0;
      grid.push_back(z);
    }
    double max_gap = 0.0;
    for (double t : {0.1, 0.5, 0.9}) {
      max_gap = std::max(max_gap, marginal_consistency_check(w, t, grid));
    }
    double max_norm_gap = 0.0;
    for (const Vector& z : grid) {
      for (int r = 0; r < w.num_r(); ++r) {
        double total = 0.0;
        for (Index i = 0; i < w.m(); ++i) {
          if (w.r_id[static_cast<size_t>(i)] == r) {
            total += std::exp(log_posterior_gen(w, i, z, 0.5));
          }
        }
        max_norm_gap = std::max(max_norm_gap, std::abs(total - 1.0));
      }
    }
    c.stats["max_gap"] = max_gap;
    c.stats["max_posterior_norm_gap"] = max_norm_gap;
    c.pass = max_gap <= 1e-12 && max_norm_gap <= 1e-12;
    checks.push_back(c);
  }

  // Sampler against the anisotropic Gaussian oracle
  {
    VerifyCheck c;
    c.name = "sampler-gaussian-oracle";
    Vector mu(2);
    mu << 3.0, 0.0;
    Matrix cov = Matrix::Zero(2, 2);
    cov(0, 0) = 1.0;
    cov(1, 1) = 0.25;
    const GaussianOracle oracle(mu, cov);
    const InterpolantPath path = InterpolantPath::linear();
    SamplerConfig sc;
    sc.seed = 99;
    sc.flip_score_sign = flip_sde_sign;
    VelocityFn vf = [&](const Matrix& z, double t) {
      return gaussian_oracle_velocity(z, t, oracle, path);
    };
    Matrix samples = em_sample(vf, sc, path, 4096, 2);
    Vector mean = samples.colwise().mean();
    Matrix centered = samples.rowwise() - mean.transpose();
    Matrix sample_cov = centered.transpose() * centered / double(samples.rows() - 1);
    const double mean_err = (mean - mu).cwiseAbs().maxCoeff();
    const double cov_err = (sample_cov - cov).norm();
    c.stats["mean_error"] = mean_err;
    c.stats["cov_frobenius_error"] = cov_err;
    c.pass = mean_err <= 0.05 && cov_err <= 0.1;
    checks.push_back(c);
  }

  // Warmup boundary condition on a small trained model
  {
    VerifyCheck c;
    c.name = "warmup-boundary";
    const ToyDataset data = make_gaussian_mixture(2048, 8, 0.3, 31);
    const LatentCodec codec = codec_fit(data, 2);
    TeacherConfig tc;
    tc.d_rep = 8;
    const TeacherEncoder teacher = teacher_pretrain(data, 0.1, 1500, 31, tc);

    BackboneConfig bc;
    bc.depth = 3;
    bc.width = 48;
    bc.erw_depth = 2;
    bc.proj_tap = 2;
    bc.d_rep = 8;
    bc.head_width = 48;
    Backbone model(bc, 77);

    TrainContext ctx;
    ctx.teacher = &teacher;
    ctx.codec = &codec;
    ctx.data = &data;
    ctx.heldout = &data;
    ctx.plan.warmup_steps = 800;
    ctx.plan.full_steps = 0;
    ctx.plan.batch_size = 128;
    ctx.schedule.tau = 1.0;
    ctx.cfg.metric_every = 0;
    ctx.cfg.seed = 5;
    AdamW opt(model.params(), ctx.cfg.opt);
    TrainRun run;
    run_phase1(model, ctx, opt, run);

    const WarmupBoundaryReport rep = warmup_boundary_check(model, teacher, codec, data);
    c.stats["trainer_loss"] = rep.trainer_loss;
    c.stats["direct_loss"] = rep.direct_loss;
    c.stats["align_at_t0.01"] = rep.noisy_curve.back().second;
    c.stats["monotone"] = rep.monotone_pass ? 1.0 : 0.0;
    c.pass = rep.equality_pass && rep.continuity_pass && rep.monotone_pass;
    checks.push_back(c);
  }

  // Idealized two-regression decomposition
  {
    VerifyCheck c;
    c.name = "idealized-regression";
    const RegressionCheckReport rep = l2r_r2g_idealized_regression_check(w, 0.5, 2000);
    c.stats["lookup_gap"] = rep.lookup_gap;
    c.stats["mlp_sum_rel_gap"] = rep.mlp_sum_rel_gap;
    c.stats["swapped_rel_gap"] = rep.swapped_rel_gap;
    const double fit = std::max(rep.mlp_rep_rel_gap, rep.mlp_gen_rel_gap);
    c.stats["mlp_component_rel_gap"] = fit;
    c.pass = rep.lookup_gap <= 1e-10 && rep.mlp_sum_rel_gap <= 0.10 &&
             rep.swapped_rel_gap > 10.0 * fit;
    checks.push_back(c);
  }

  return checks;
}

}  // namespace erw
