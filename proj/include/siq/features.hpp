#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "siq/ingest.hpp"

namespace siq::features {

enum class ClickKind { Click, Drag };

/// One mousedown..mouseup episode inside a trajectory.
struct GeneralizedClick {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::size_t start_index = 0;
  std::size_t end_index = 0;
  double path_length = 0.0;
  ClickKind kind = ClickKind::Click;
};

struct MouseFeatureConfig {
  double drag_threshold_px = 5.0;
  // Silence that ends the first-attempt episode.
  std::int64_t attempt_gap_ms = 2000;
  // Offset of local time from the timestamps' epoch, for InteractionHour.
  std::int64_t utc_offset_minutes = 0;
};

/// Pairs every mousedown with the next mouseup. Moves in between add to the
/// path length; stray mouseups, nested mousedowns and a trailing open
/// mousedown are dropped.
std::vector<GeneralizedClick> detect_generalized_clicks(const ingest::Trajectory& trajectory,
                                                        double drag_threshold_px);

struct InteractionFeatures {
  static constexpr std::size_t kNumericCount = 11;
  static constexpr std::size_t kHourCount = 24;
  static constexpr std::size_t kThinkTimeCount = 7;
  static constexpr std::size_t kDimension = kNumericCount + kHourCount + kThinkTimeCount;

  double first_gc_time_length = 0.0;
  double first_gc_time_percent = 0.0;
  double first_gc_event_start_idx = 0.0;
  double first_gc_event_percent = 0.0;
  double first_gc_event_end_idx = 0.0;
  double gc_count = 0.0;
  double gc_per_second = 0.0;
  double avg_time_between_gc = 0.0;
  double med_time_between_gc = 0.0;
  double std_time_between_gc = 0.0;
  double overall_distance = 0.0;
  int interaction_hour = 0;
  double think_time_length = 0.0;
  double think_time_percent = 0.0;
  double think_time_event_count = 0.0;
  double think_time_event_percent = 0.0;
  double first_attempt_event_count = 0.0;
  double total_time = 0.0;
  double total_event_count = 0.0;

  /// Numeric block, InteractionHour one-hot, think-time block.
  std::vector<double> to_vector() const;
  static const std::vector<std::string>& column_names();
};

InteractionFeatures extract_mouse_features(const ingest::Trajectory& trajectory,
                                           std::span<const GeneralizedClick> gcs,
                                           const MouseFeatureConfig& config = {});

InteractionFeatures featurize_trajectory(const ingest::Trajectory& trajectory,
                                         const MouseFeatureConfig& config = {});

/// The (math dimension x grade x difficulty) buckets of the student
/// statistics. Vocabularies are sorted and deduplicated.
struct BucketSchema {
  std::vector<std::string> math_dimensions;
  std::vector<int> grades;
  std::vector<int> difficulties;

  static BucketSchema observed(std::span<const ingest::QuestionMeta> meta);

  std::size_t bucket_count() const;
  /// Throws when the question's categories are outside the schema.
  std::size_t bucket_of(const ingest::QuestionMeta& question) const;
};

struct StudentStats {
  double total_trials = 0.0;
  double second_trials = 0.0;
  std::vector<double> trial_pct;
  std::vector<double> mean_first_score;

  std::vector<double> to_vector() const;
};

struct QuestionStats {
  std::vector<double> math_dimension_onehot;
  std::array<double, 13> grade_onehot{};
  std::array<double, 5> difficulty_onehot{};
  double total_trials = 0.0;
  double second_trials = 0.0;
  std::array<double, 4> score_level_pct{};

  std::vector<double> to_vector() const;
};

std::size_t student_stats_dimension(const BucketSchema& schema);
std::size_t question_stats_dimension(const BucketSchema& schema);

using QuestionIndex = std::map<std::string, ingest::QuestionMeta>;
QuestionIndex index_questions(std::span<const ingest::QuestionMeta> meta);

template <typename Stats>
struct StatsTable {
  std::map<std::string, Stats> by_id;
  std::size_t skipped = 0;
};

/// Statistics over records with timestamp < cutoff_ms.
StatsTable<StudentStats> compute_student_stats(std::span<const ingest::ScoreRecord> records,
                                               const QuestionIndex& questions,
                                               const BucketSchema& schema,
                                               std::int64_t cutoff_ms,
                                               const ingest::ScoreThresholds& thresholds = {});

/// One entry per question in `questions`; level percentages use first trials.
StatsTable<QuestionStats> compute_question_stats(std::span<const ingest::ScoreRecord> records,
                                                 const QuestionIndex& questions,
                                                 const BucketSchema& schema,
                                                 std::int64_t cutoff_ms,
                                                 const ingest::ScoreThresholds& thresholds = {});

/// The stats of `student_id`, or all-zero stats when it has none.
StudentStats student_stats_or_zero(const StatsTable<StudentStats>& table,
                                   const std::string& student_id, const BucketSchema& schema);

std::vector<std::string> student_stats_columns(const BucketSchema& schema);
std::vector<std::string> question_stats_columns(const BucketSchema& schema);

}  // namespace siq::features
