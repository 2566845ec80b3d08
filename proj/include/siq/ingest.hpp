#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace siq::ingest {

enum class EventType { MouseDown, MouseUp, MouseMove };

std::optional<EventType> parse_event_type(std::string_view name);
std::string_view to_string(EventType type);

struct MouseEvent {
  std::string student_id;
  std::string question_id;
  EventType type = EventType::MouseMove;
  std::int64_t t_ms = 0;
  double x = 0.0;
  double y = 0.0;
};

/// All mouse events of one (student, question) session, sorted by time.
/// Ties keep input order.
struct Trajectory {
  std::string student_id;
  std::string question_id;
  std::vector<MouseEvent> events;
};

struct ScoreRecord {
  std::string student_id;
  std::string question_id;
  int raw_score = 0;
  std::int64_t timestamp_ms = 0;
  int trial_index = 1;
};

struct QuestionMeta {
  std::string question_id;
  int grade = 0;
  int difficulty = 1;
  std::string math_dimension;
};

/// One of the four classification labels, 0..3.
class ScoreLevel {
 public:
  static constexpr int kCount = 4;

  constexpr ScoreLevel() = default;
  explicit ScoreLevel(int level);

  constexpr int value() const { return level_; }
  friend constexpr bool operator==(ScoreLevel, ScoreLevel) = default;
  friend constexpr auto operator<=>(ScoreLevel, ScoreLevel) = default;

 private:
  int level_ = 0;
};

/// Raw score thresholds separating the levels. A score s maps to the number
/// of thresholds t with t <= s, so the defaults 25/50/75 give
/// floor(min(s, 99) / 25).
struct ScoreThresholds {
  std::vector<int> bounds{25, 50, 75};

  void validate() const;
};

ScoreLevel map_score_level(int raw_score, const ScoreThresholds& thresholds = {});

template <typename T>
struct LoadResult {
  std::vector<T> items;
  std::size_t discarded = 0;
};

/// Parses a JSON Lines event file. Malformed lines and unknown event types
/// are skipped and counted. Trajectories come back ordered by
/// (student_id, question_id).
LoadResult<Trajectory> load_events(const std::filesystem::path& path);
LoadResult<Trajectory> parse_events(std::string_view text);

/// Groups events into sorted trajectories.
std::vector<Trajectory> group_events(std::vector<MouseEvent> events);

/// Reads `student_id,question_id,raw_score,timestamp_ms`. Records keep file
/// order; trial_index is derived per (student, question) from timestamp
/// order with ties broken by file order.
LoadResult<ScoreRecord> load_scores(const std::filesystem::path& path);
LoadResult<ScoreRecord> parse_scores(std::string_view text);

void assign_trial_indices(std::vector<ScoreRecord>& records);

/// Reads `question_id,grade,difficulty,math_dimension`. When `vocabulary` is
/// non-empty, rows with a math dimension outside it are discarded.
LoadResult<QuestionMeta> load_questions(const std::filesystem::path& path,
                                        std::span<const std::string> vocabulary = {});
LoadResult<QuestionMeta> parse_questions(std::string_view text,
                                         std::span<const std::string> vocabulary = {});

std::vector<ScoreRecord> first_trials(std::span<const ScoreRecord> records);

std::string read_file(const std::filesystem::path& path);

}  // namespace siq::ingest
