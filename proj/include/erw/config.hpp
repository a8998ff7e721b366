#pragma once

#include "erw/backbone.hpp"
#include "erw/optimizer.hpp"
#include "erw/teacher.hpp"
#include "erw/trainer.hpp"
#include "erw/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace erw {

// Full experiment configuration; validated on load with field-level messages
// and serialized as a snapshot before any run starts.
struct RunConfig {
  std::string name = "run";

  struct Dataset {
    std::string kind = "mixture";  // mixture | checkerboard
    Index n = 4096;
    int classes = 8;
    double spread = 0.3;
    int cells = 4;
    std::uint64_t seed = 1;
  } dataset;

  Index heldout_n = 512;
  Index d_lat = 2;

  struct Teacher {
    Index width = 64;
    Index d_rep = 16;
    double jitter = 0.1;
    long steps = 3000;
    Index batch = 128;
    double temperature = 0.1;
    double lr = 1e-3;
    std::uint64_t seed = 7;
  } teacher;

  struct BackboneCfg {
    Index depth = 6;
    Index width = 128;
    Index erw_depth = 2;
    Index erw_start = 0;
    Index proj_tap = 4;
    Index time_dim = 16;
    Index head_width = 64;
  } backbone;

  struct Phases {
    long budget_steps = 10000;
    double warmup_frac = 0.2;
    Index batch_size = 256;
  } phases;

  struct Schedule {
    double c0 = 0.5;
    double tau_frac = 1.0 / 3.0;
  } schedule;

  double align_temperature = 0.1;
  OptimizerConfig optimizer;

  struct Sampler {
    int n_steps = 250;
    double t_min = 0.04;
  } sampler;

  struct Metrics {
    long metric_every = 250;
    int cknna_k = 10;
    Index inrun_fid_samples = 256;
    int inrun_fid_steps = 50;
    Index final_eval_samples = 1024;
    int final_eval_steps = 250;
  } metrics;

  long checkpoint_every = 0;  // 0 = final checkpoint only
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "runs";

  void validate() const;  // throws std::invalid_argument naming the field
  std::string to_json() const;
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  BackboneConfig backbone_config() const;
  TeacherConfig teacher_config() const;

  // content hash of everything the teacher/codec checkpoint depends on
  std::uint64_t prep_hash() const;
};

}  // namespace erw
