#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "siq/features.hpp"
#include "siq/graph.hpp"
#include "siq/ingest.hpp"
#include "siq/synth.hpp"
#include "siq/train.hpp"

namespace siq::config {

/// Every setting of a pipeline run. `seed` drives all randomness: it is
/// copied into the synthetic generator and the training seed.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "run";
  // Input files; empty means the synth stage's output in the run directory.
  std::filesystem::path events_path;
  std::filesystem::path scores_path;
  std::filesystem::path questions_path;

  synth::SynthConfig synth;
  features::MouseFeatureConfig mouse;
  ingest::ScoreThresholds thresholds;
  std::optional<std::int64_t> feature_cutoff_ms;
  graph::SnapshotOptions snapshot;
  // Evaluate the N eligible students with the most records; 0 keeps all.
  std::size_t max_students = 0;
  // Restricts evaluation to these student ids when non-empty.
  std::vector<std::string> students;
  train::ExperimentConfig experiment;
  std::vector<double> sweep_fractions{0.4, 0.6, 0.8, 1.0};
  std::size_t workers = 1;
  // Methods trained by the full pipeline.
  std::vector<train::Method> methods{train::Method::R2GCN, train::Method::RGCN_E2N,
                                     train::Method::RGCN_NoE2N, train::Method::LogisticRegression,
                                     train::Method::Majority};

  void validate() const;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and unparsable values are errors that name the line.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const char*)>;

/// SIQ_SEED, SIQ_OUT, SIQ_EVENTS, SIQ_SCORES and SIQ_QUESTIONS override the
/// matching keys.
void apply_env_overrides(RunConfig& config, const EnvLookup& lookup);
void apply_env_overrides(RunConfig& config);

/// Recognised keys in documentation order.
std::vector<std::string> known_keys();

/// The config rendered back as `key = value` lines.
std::string to_text(const RunConfig& config);

}  // namespace siq::config
