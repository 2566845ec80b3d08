#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "siq/ingest.hpp"

namespace siq::synth {

struct SynthConfig {
  std::size_t num_students = 500;
  std::size_t num_questions = 200;
  double interactions_per_student = 40.0;
  std::size_t latent_dim = 8;
  double noise_sigma = 0.5;
  std::size_t num_math_dimensions = 6;
  std::uint64_t seed = 0;

  double ability_sigma = 1.0;
  // Spread of the non-intercept question loadings.
  double loading_sigma = 0.3;
  // Offset per declared difficulty step, plus a per-question jitter.
  double difficulty_step = 0.6;
  double offset_jitter = 1.2;
  // Share of questions released after mouse logging starts; they have no
  // statistics from before the feature cutoff.
  double late_release_fraction = 0.5;
  double second_trial_probability = 0.15;
  int window_days = 120;
  // Mouse logging begins this far into the window.
  double mouse_start_fraction = 0.3;
  double grade_affinity_scale = 2.0;

  void validate() const;
};

/// Planted parameters. Student i has ability a_i, question j has loadings
/// q_j (q_j[0] = 1) and offset_j; an attempt scores
/// clamp(50 + 12 * (a_i . q_j - offset_j + noise), 0, 100).
struct LatentModel {
  std::vector<std::vector<double>> abilities;
  std::vector<std::vector<double>> loadings;
  std::vector<double> offsets;
  std::vector<int> student_grades;
};

/// Raw score for a given affinity a.q, offset and noise draw.
int raw_score(double affinity, double offset, double noise);
double affinity(const LatentModel& model, std::size_t student, std::size_t question);

struct SynthData {
  std::vector<ingest::MouseEvent> events;
  std::vector<ingest::ScoreRecord> scores;  // time order
  std::vector<ingest::QuestionMeta> questions;
  LatentModel latent;
  std::array<double, 4> level_frequency{};  // over generated first trials
  std::int64_t mouse_start_ms = 0;
  int offset_draws = 1;
};

/// Deterministic in the config. Offsets are redrawn until every score
/// level covers at least 5% of first trials.
SynthData generate(const SynthConfig& config);

/// events.jsonl, scores.csv, questions.csv in the ingest formats.
void write_files(const SynthData& data, const std::filesystem::path& dir);

struct Description {
  std::size_t latent_dim = 0;
  std::uint64_t seed = 0;
  std::size_t num_students = 0;
  std::size_t num_questions = 0;
  double noise_sigma = 0.0;
  // Monte Carlo estimate over random (student, question) pairs.
  std::array<double, 4> expected_level_frequency{};
};

Description describe(const SynthConfig& config, std::size_t samples = 20000);

std::string math_dimension_name(std::size_t index);

}  // namespace siq::synth
