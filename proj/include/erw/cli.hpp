#pragma once

#include "erw/codec.hpp"
#include "erw/config.hpp"
#include "erw/dataset.hpp"
#include "erw/teacher.hpp"
#include "erw/trainer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace erw::cli {

// Teacher + codec preparation, cached by content hash under ERW_CACHE_DIR
// (default <out_dir>/cache). With no_prep set, a cache miss is an error.
struct Prep {
  LatentCodec codec;
  TeacherEncoder teacher;
  std::string cache_path;
};
Prep prepare(const RunConfig& cfg, bool no_prep);

ToyDataset build_dataset(const RunConfig& cfg);
ToyDataset build_heldout(const RunConfig& cfg);
ExperimentSpec build_spec(const RunConfig& cfg, const ToyDataset& data, const ToyDataset& heldout,
                          const Prep& prep);

// Runs one arm with one seed and writes config.json, run.json, metrics.csv
// and checkpoints under <out_dir>/<name>-<arm>-seed<seed>/. Returns the run
// directory.
std::string train_run(const RunConfig& cfg, Arm arm, std::uint64_t seed, bool no_prep);

int cmd_train(const std::string& config_path, const std::string& arm,
              std::optional<std::uint64_t> seed, std::optional<std::string> out_dir, bool no_prep);
int cmd_eval(const std::string& run_dir, Index n_samples, std::uint64_t seed);
int cmd_verify(bool flip_sde_sign, const std::string& report_path);
int cmd_sweep(const std::string& config_path, const std::string& axis,
              const std::vector<double>& values, std::optional<std::string> out_dir, bool no_prep);
int cmd_sample(const std::string& run_dir, Index n, std::uint64_t seed, const std::string& out_csv);

std::string format_double(double v);

}  // namespace erw::cli
