#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "memenc/synthgen.hpp"
#include "memenc/tracker.hpp"
#include "memenc/training.hpp"

namespace memenc {

struct MetricsConfig {
  int nc_splits = 20;
  std::uint64_t nc_seed = 7;
  int nc_min_groups = 10;

  void validate() const;
};

// The resolved contents of a run's JSON config. Sections omit nothing after
// parsing: defaults are materialized, so the resolved document alone
// reproduces the run. Unknown keys anywhere are rejected.
struct RunConfig {
  GeneratorSpec generator;
  BackboneConfig backbone;  // image_size / n_subjects follow the generator
  std::string backbone_mode = "frozen";
  HeadsConfig heads;
  MemoryConfig memory;  // t_mem follows the generator
  bool memory_enabled = true;
  RecipeConfig recipe;
  MetricsConfig metrics;
  TrackerConfig tracker;
  std::string output_dir = "runs";
  std::uint64_t seed = 1;

  ModelConfig model_config() const;
  void validate() const;
};

// The master seed and the per-section seeds it feeds (generator, recipe,
// tracker). Explicit section seeds in the file win over the master.
void override_seed(RunConfig& rc, std::uint64_t seed);

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& file);

// Canonical resolved document (sorted keys, every field present).
nlohmann::json resolved_json(const RunConfig& rc);
std::string config_hash(const RunConfig& rc);  // sha256 of the canonical dump
void write_resolved(const RunConfig& rc, const std::filesystem::path& file);

InputMask parse_mask(const std::string& spec);  // "frames=lag:6,condB" style

}  // namespace memenc
