#include "erw/config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace erw {

using nlohmann::json;

namespace {

// typed field access with path-qualified error messages
template <typename T>
T get_field(const json& obj, const std::string& path, const std::string& key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: field " + path + "." + key + " has the wrong type (" +
                                e.what() + ")");
  }
}

void reject_unknown(const json& obj, const std::string& path,
                    std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known) {
      if (key == k) ok = true;
    }
    if (!ok) throw std::invalid_argument("config: unknown field " + path + "." + key);
  }
}

void check(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw std::invalid_argument("config: " + field + " " + message);
}

}  // namespace

void RunConfig::validate() const {
  check(!name.empty(), "name", "must not be empty");
  check(dataset.kind == "mixture" || dataset.kind == "checkerboard", "dataset.kind",
        "must be 'mixture' or 'checkerboard'");
  check(dataset.n >= 16, "dataset.n", "must be at least 16");
  check(dataset.classes >= 2, "dataset.classes", "must be at least 2");
  check(dataset.spread > 0.0, "dataset.spread", "must be positive");
  check(dataset.cells >= 2 && dataset.cells % 2 == 0, "dataset.cells", "must be even and >= 2");
  check(heldout_n >= 32, "heldout_n", "must be at least 32");
  check(d_lat >= 1, "d_lat", "must be positive");
  check(teacher.width >= 1 && teacher.d_rep >= 2, "teacher", "width/d_rep must be positive");
  check(teacher.jitter > 0.0, "teacher.jitter", "must be positive");
  check(teacher.steps >= 1, "teacher.steps", "must be positive");
  check(phases.budget_steps >= 1, "phases.budget_steps", "must be positive");
  check(phases.warmup_frac >= 0.0 && phases.warmup_frac < 1.0, "phases.warmup_frac",
        "must lie in [0, 1)");
  check(phases.batch_size >= 2, "phases.batch_size", "must be at least 2");
  check(schedule.c0 > 0.0, "schedule.c0", "must be positive");
  check(schedule.tau_frac > 0.0, "schedule.tau_frac", "must be positive");
  check(align_temperature > 0.0, "align.temperature", "must be positive");
  check(optimizer.lr > 0.0, "optimizer.lr", "must be positive");
  check(sampler.n_steps >= 2, "sampler.n_steps", "must be at least 2");
  check(sampler.t_min > 0.0 && sampler.t_min < 1.0, "sampler.t_min", "must lie in (0, 1)");
  check(metrics.cknna_k >= 2, "metrics.cknna_k", "must be at least 2");
  check(metrics.cknna_k < heldout_n, "metrics.cknna_k", "must be smaller than heldout_n");
  check(!seeds.empty(), "seeds", "must not be empty");
  check(!out_dir.empty(), "out_dir", "must not be empty");
  try {
    backbone_config().validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("config: backbone invalid: " + std::string(e.what()));
  }
}

BackboneConfig RunConfig::backbone_config() const {
  BackboneConfig bc;
  bc.depth = backbone.depth;
  bc.width = backbone.width;
  bc.erw_depth = backbone.erw_depth;
  bc.erw_start = backbone.erw_start;
  bc.proj_tap = backbone.proj_tap;
  bc.d_lat = d_lat;
  bc.d_rep = teacher.d_rep;
  bc.time_dim = backbone.time_dim;
  bc.head_width = backbone.head_width;
  return bc;
}

TeacherConfig RunConfig::teacher_config() const {
  TeacherConfig tc;
  tc.width = teacher.width;
  tc.d_rep = teacher.d_rep;
  tc.batch = teacher.batch;
  tc.temperature = teacher.temperature;
  tc.lr = teacher.lr;
  return tc;
}

std::string RunConfig::to_json() const {
  json j;
  j["name"] = name;
  j["dataset"] = {{"kind", dataset.kind}, {"n", dataset.n},         {"classes", dataset.classes},
                  {"spread", dataset.spread}, {"cells", dataset.cells}, {"seed", dataset.seed}};
  j["heldout_n"] = heldout_n;
  j["d_lat"] = d_lat;
  j["teacher"] = {{"width", teacher.width},     {"d_rep", teacher.d_rep},
                  {"jitter", teacher.jitter},   {"steps", teacher.steps},
                  {"batch", teacher.batch},     {"temperature", teacher.temperature},
                  {"lr", teacher.lr},           {"seed", teacher.seed}};
  j["backbone"] = {{"depth", backbone.depth},         {"width", backbone.width},
                   {"erw_depth", backbone.erw_depth}, {"erw_start", backbone.erw_start},
                   {"proj_tap", backbone.proj_tap},   {"time_dim", backbone.time_dim},
                   {"head_width", backbone.head_width}};
  j["phases"] = {{"budget_steps", phases.budget_steps},
                 {"warmup_frac", phases.warmup_frac},
                 {"batch_size", phases.batch_size}};
  j["schedule"] = {{"c0", schedule.c0}, {"tau_frac", schedule.tau_frac}};
  j["align"] = {{"temperature", align_temperature}};
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"weight_decay", optimizer.weight_decay},
                    {"clip_norm", optimizer.clip_norm}};
  j["sampler"] = {{"n_steps", sampler.n_steps}, {"t_min", sampler.t_min}};
  j["metrics"] = {{"metric_every", metrics.metric_every},
                  {"cknna_k", metrics.cknna_k},
                  {"inrun_fid_samples", metrics.inrun_fid_samples},
                  {"inrun_fid_steps", metrics.inrun_fid_steps},
                  {"final_eval_samples", metrics.final_eval_samples},
                  {"final_eval_steps", metrics.final_eval_steps}};
  j["checkpoint_every"] = checkpoint_every;
  j["seeds"] = seeds;
  j["out_dir"] = out_dir;
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown(j, "", {"name", "dataset", "heldout_n", "d_lat", "teacher", "backbone", "phases",
                         "schedule", "align", "optimizer", "sampler", "metrics",
                         "checkpoint_every", "seeds", "out_dir"});
  RunConfig c;
  c.name = get_field<std::string>(j, "", "name", c.name);
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    reject_unknown(d, "dataset", {"kind", "n", "classes", "spread", "cells", "seed"});
    c.dataset.kind = get_field<std::string>(d, "dataset", "kind", c.dataset.kind);
    c.dataset.n = get_field<Index>(d, "dataset", "n", c.dataset.n);
    c.dataset.classes = get_field<int>(d, "dataset", "classes", c.dataset.classes);
    c.dataset.spread = get_field<double>(d, "dataset", "spread", c.dataset.spread);
    c.dataset.cells = get_field<int>(d, "dataset", "cells", c.dataset.cells);
    c.dataset.seed = get_field<std::uint64_t>(d, "dataset", "seed", c.dataset.seed);
  }
  c.heldout_n = get_field<Index>(j, "", "heldout_n", c.heldout_n);
  c.d_lat = get_field<Index>(j, "", "d_lat", c.d_lat);
  if (j.contains("teacher")) {
    const json& t = j["teacher"];
    reject_unknown(t, "teacher",
                   {"width", "d_rep", "jitter", "steps", "batch", "temperature", "lr", "seed"});
    c.teacher.width = get_field<Index>(t, "teacher", "width", c.teacher.width);
    c.teacher.d_rep = get_field<Index>(t, "teacher", "d_rep", c.teacher.d_rep);
    c.teacher.jitter = get_field<double>(t, "teacher", "jitter", c.teacher.jitter);
    c.teacher.steps = get_field<long>(t, "teacher", "steps", c.teacher.steps);
    c.teacher.batch = get_field<Index>(t, "teacher", "batch", c.teacher.batch);
    c.teacher.temperature = get_field<double>(t, "teacher", "temperature", c.teacher.temperature);
    c.teacher.lr = get_field<double>(t, "teacher", "lr", c.teacher.lr);
    c.teacher.seed = get_field<std::uint64_t>(t, "teacher", "seed", c.teacher.seed);
  }
  if (j.contains("backbone")) {
    const json& b = j["backbone"];
    reject_unknown(b, "backbone",
                   {"depth", "width", "erw_depth", "erw_start", "proj_tap", "time_dim",
                    "head_width"});
    c.backbone.depth = get_field<Index>(b, "backbone", "depth", c.backbone.depth);
    c.backbone.width = get_field<Index>(b, "backbone", "width", c.backbone.width);
    c.backbone.erw_depth = get_field<Index>(b, "backbone", "erw_depth", c.backbone.erw_depth);
    c.backbone.erw_start = get_field<Index>(b, "backbone", "erw_start", c.backbone.erw_start);
    c.backbone.proj_tap = get_field<Index>(b, "backbone", "proj_tap", c.backbone.proj_tap);
    c.backbone.time_dim = get_field<Index>(b, "backbone", "time_dim", c.backbone.time_dim);
    c.backbone.head_width = get_field<Index>(b, "backbone", "head_width", c.backbone.head_width);
  }
  if (j.contains("phases")) {
    const json& p = j["phases"];
    reject_unknown(p, "phases", {"budget_steps", "warmup_frac", "batch_size"});
    c.phases.budget_steps = get_field<long>(p, "phases", "budget_steps", c.phases.budget_steps);
    c.phases.warmup_frac = get_field<double>(p, "phases", "warmup_frac", c.phases.warmup_frac);
    c.phases.batch_size = get_field<Index>(p, "phases", "batch_size", c.phases.batch_size);
  }
  if (j.contains("schedule")) {
    const json& s = j["schedule"];
    reject_unknown(s, "schedule", {"c0", "tau_frac"});
    c.schedule.c0 = get_field<double>(s, "schedule", "c0", c.schedule.c0);
    c.schedule.tau_frac = get_field<double>(s, "schedule", "tau_frac", c.schedule.tau_frac);
  }
  if (j.contains("align")) {
    reject_unknown(j["align"], "align", {"temperature"});
    c.align_temperature = get_field<double>(j["align"], "align", "temperature", c.align_temperature);
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    reject_unknown(o, "optimizer", {"lr", "beta1", "beta2", "weight_decay", "clip_norm"});
    c.optimizer.lr = get_field<double>(o, "optimizer", "lr", c.optimizer.lr);
    c.optimizer.beta1 = get_field<double>(o, "optimizer", "beta1", c.optimizer.beta1);
    c.optimizer.beta2 = get_field<double>(o, "optimizer", "beta2", c.optimizer.beta2);
    c.optimizer.weight_decay =
        get_field<double>(o, "optimizer", "weight_decay", c.optimizer.weight_decay);
    c.optimizer.clip_norm = get_field<double>(o, "optimizer", "clip_norm", c.optimizer.clip_norm);
  }
  if (j.contains("sampler")) {
    const json& s = j["sampler"];
    reject_unknown(s, "sampler", {"n_steps", "t_min"});
    c.sampler.n_steps = get_field<int>(s, "sampler", "n_steps", c.sampler.n_steps);
    c.sampler.t_min = get_field<double>(s, "sampler", "t_min", c.sampler.t_min);
  }
  if (j.contains("metrics")) {
    const json& m = j["metrics"];
    reject_unknown(m, "metrics",
                   {"metric_every", "cknna_k", "inrun_fid_samples", "inrun_fid_steps",
                    "final_eval_samples", "final_eval_steps"});
    c.metrics.metric_every = get_field<long>(m, "metrics", "metric_every", c.metrics.metric_every);
    c.metrics.cknna_k = get_field<int>(m, "metrics", "cknna_k", c.metrics.cknna_k);
    c.metrics.inrun_fid_samples =
        get_field<Index>(m, "metrics", "inrun_fid_samples", c.metrics.inrun_fid_samples);
    c.metrics.inrun_fid_steps =
        get_field<int>(m, "metrics", "inrun_fid_steps", c.metrics.inrun_fid_steps);
    c.metrics.final_eval_samples =
        get_field<Index>(m, "metrics", "final_eval_samples", c.metrics.final_eval_samples);
    c.metrics.final_eval_steps =
        get_field<int>(m, "metrics", "final_eval_steps", c.metrics.final_eval_steps);
  }
  c.checkpoint_every = get_field<long>(j, "", "checkpoint_every", c.checkpoint_every);
  c.seeds = get_field<std::vector<std::uint64_t>>(j, "", "seeds", c.seeds);
  c.out_dir = get_field<std::string>(j, "", "out_dir", c.out_dir);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

void RunConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("config: cannot write " + path);
  os << to_json() << "\n";
}

std::uint64_t RunConfig::prep_hash() const {
  json j;
  j["dataset"] = {{"kind", dataset.kind}, {"n", dataset.n},         {"classes", dataset.classes},
                  {"spread", dataset.spread}, {"cells", dataset.cells}, {"seed", dataset.seed}};
  j["d_lat"] = d_lat;
  j["teacher"] = {{"width", teacher.width},   {"d_rep", teacher.d_rep},
                  {"jitter", teacher.jitter}, {"steps", teacher.steps},
                  {"batch", teacher.batch},   {"temperature", teacher.temperature},
                  {"lr", teacher.lr},         {"seed", teacher.seed}};
  const std::string s = j.dump();
  return fnv1a64(s.data(), s.size());
}

}  // namespace erw
