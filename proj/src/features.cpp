#include "siq/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace siq::features {

using ingest::EventType;
using ingest::MouseEvent;

namespace {

double distance(const MouseEvent& a, const MouseEvent& b) {
  return std::hypot(b.x - a.x, b.y - a.y);
}

double ratio(double numerator, double denominator) {
  return denominator == 0.0 ? 0.0 : numerator / denominator;
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

int local_hour(std::int64_t t_ms, std::int64_t utc_offset_minutes) {
  constexpr std::int64_t kDayMs = 24LL * 3600 * 1000;
  std::int64_t local = t_ms + utc_offset_minutes * 60 * 1000;
  std::int64_t in_day = ((local % kDayMs) + kDayMs) % kDayMs;
  return static_cast<int>(in_day / (3600 * 1000));
}

}  // namespace

std::vector<GeneralizedClick> detect_generalized_clicks(const ingest::Trajectory& trajectory,
                                                        double drag_threshold_px) {
  std::vector<GeneralizedClick> clicks;
  const auto& events = trajectory.events;
  bool open = false;
  GeneralizedClick current;
  const MouseEvent* last = nullptr;

  for (std::size_t i = 0; i < events.size(); ++i) {
    const MouseEvent& event = events[i];
    switch (event.type) {
      case EventType::MouseDown:
        if (!open) {
          open = true;
          current = GeneralizedClick{event.t_ms, event.t_ms, i, i, 0.0, ClickKind::Click};
          last = &event;
        }
        break;
      case EventType::MouseMove:
        if (open) {
          current.path_length += distance(*last, event);
          last = &event;
        }
        break;
      case EventType::MouseUp:
        if (open) {
          current.path_length += distance(*last, event);
          current.end_ms = event.t_ms;
          current.end_index = i;
          current.kind =
              current.path_length > drag_threshold_px ? ClickKind::Drag : ClickKind::Click;
          clicks.push_back(current);
          open = false;
        }
        break;
    }
  }
  return clicks;
}

std::vector<double> InteractionFeatures::to_vector() const {
  std::vector<double> out{first_gc_time_length,    first_gc_time_percent,
                          first_gc_event_start_idx, first_gc_event_percent,
                          first_gc_event_end_idx,   gc_count,
                          gc_per_second,            avg_time_between_gc,
                          med_time_between_gc,      std_time_between_gc,
                          overall_distance};
  out.reserve(kDimension);
  for (std::size_t h = 0; h < kHourCount; ++h) {
    out.push_back(static_cast<int>(h) == interaction_hour ? 1.0 : 0.0);
  }
  for (double v : {think_time_length, think_time_percent, think_time_event_count,
                   think_time_event_percent, first_attempt_event_count, total_time,
                   total_event_count}) {
    out.push_back(v);
  }
  return out;
}

const std::vector<std::string>& InteractionFeatures::column_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n{"1stGCTimeLength", "1stGCTimePercent", "1stGCEventStartIdx",
                               "1stGCEventPercent", "1stGCEventEndIdx", "GCCount",
                               "GCPerSecond", "AvgTimeBtwGC", "MedTimeBtwGC",
                               "StdTimeBtwGC", "OverallDistance"};
    for (int h = 0; h < 24; ++h) n.push_back("InteractionHour_" + std::to_string(h));
    for (const char* name : {"ThinkTimeLength", "ThinkTimePercent", "ThinkTimeEventCount",
                             "ThinkTimeEventPercent", "1stAttemptEventCount", "TotalTime",
                             "TotalEventCount"}) {
      n.emplace_back(name);
    }
    return n;
  }();
  return names;
}

InteractionFeatures extract_mouse_features(const ingest::Trajectory& trajectory,
                                           std::span<const GeneralizedClick> gcs,
                                           const MouseFeatureConfig& config) {
  InteractionFeatures f;
  const auto& events = trajectory.events;
  if (events.empty()) return f;

  const double n = static_cast<double>(events.size());
  const std::int64_t session_start = events.front().t_ms;
  f.total_time = static_cast<double>(events.back().t_ms - session_start);
  f.total_event_count = n;
  f.interaction_hour = local_hour(session_start, config.utc_offset_minutes);
  for (std::size_t i = 1; i < events.size(); ++i) {
    f.overall_distance += distance(events[i - 1], events[i]);
  }

  if (gcs.empty()) return f;

  const GeneralizedClick& first = gcs.front();
  f.gc_count = static_cast<double>(gcs.size());
  f.first_gc_time_length = static_cast<double>(first.start_ms - session_start);
  f.first_gc_time_percent = ratio(static_cast<double>(first.end_ms - first.start_ms), f.total_time);
  f.first_gc_event_start_idx = static_cast<double>(first.start_index);
  f.first_gc_event_percent = static_cast<double>(first.start_index) / n;
  f.first_gc_event_end_idx = static_cast<double>(first.end_index + 1);
  f.gc_per_second = ratio(f.gc_count, f.total_time / 1000.0);

  if (gcs.size() >= 2) {
    std::vector<double> gaps;
    gaps.reserve(gcs.size() - 1);
    for (std::size_t k = 0; k + 1 < gcs.size(); ++k) {
      gaps.push_back(static_cast<double>(gcs[k + 1].start_ms - gcs[k].end_ms));
    }
    double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    double sq = 0.0;
    for (double g : gaps) sq += (g - mean) * (g - mean);
    f.avg_time_between_gc = mean;
    f.med_time_between_gc = median(gaps);
    f.std_time_between_gc = std::sqrt(sq / static_cast<double>(gaps.size()));
  }

  // Think time is approximated by the time before the first GC.
  f.think_time_length = f.first_gc_time_length;
  f.think_time_percent = ratio(f.think_time_length, f.total_time);
  f.think_time_event_count = f.first_gc_event_start_idx;
  f.think_time_event_percent = f.first_gc_event_percent;

  std::size_t episode_end = first.start_index;
  while (episode_end + 1 < events.size() &&
         events[episode_end + 1].t_ms - events[episode_end].t_ms <= config.attempt_gap_ms) {
    ++episode_end;
  }
  f.first_attempt_event_count = static_cast<double>(episode_end - first.start_index + 1);
  return f;
}

InteractionFeatures featurize_trajectory(const ingest::Trajectory& trajectory,
                                         const MouseFeatureConfig& config) {
  auto gcs = detect_generalized_clicks(trajectory, config.drag_threshold_px);
  return extract_mouse_features(trajectory, gcs, config);
}

BucketSchema BucketSchema::observed(std::span<const ingest::QuestionMeta> meta) {
  std::set<std::string> dims;
  std::set<int> grades;
  std::set<int> difficulties;
  for (const auto& q : meta) {
    dims.insert(q.math_dimension);
    grades.insert(q.grade);
    difficulties.insert(q.difficulty);
  }
  return BucketSchema{{dims.begin(), dims.end()},
                      {grades.begin(), grades.end()},
                      {difficulties.begin(), difficulties.end()}};
}

std::size_t BucketSchema::bucket_count() const {
  return math_dimensions.size() * grades.size() * difficulties.size();
}

std::size_t BucketSchema::bucket_of(const ingest::QuestionMeta& question) const {
  auto dim = std::lower_bound(math_dimensions.begin(), math_dimensions.end(),
                              question.math_dimension);
  auto grade = std::lower_bound(grades.begin(), grades.end(), question.grade);
  auto diff = std::lower_bound(difficulties.begin(), difficulties.end(), question.difficulty);
  if (dim == math_dimensions.end() || *dim != question.math_dimension ||
      grade == grades.end() || *grade != question.grade || diff == difficulties.end() ||
      *diff != question.difficulty) {
    throw std::out_of_range("question " + question.question_id + " outside bucket schema");
  }
  std::size_t d = static_cast<std::size_t>(dim - math_dimensions.begin());
  std::size_t g = static_cast<std::size_t>(grade - grades.begin());
  std::size_t k = static_cast<std::size_t>(diff - difficulties.begin());
  return (d * grades.size() + g) * difficulties.size() + k;
}

std::vector<double> StudentStats::to_vector() const {
  std::vector<double> out{total_trials, second_trials};
  out.insert(out.end(), trial_pct.begin(), trial_pct.end());
  out.insert(out.end(), mean_first_score.begin(), mean_first_score.end());
  return out;
}

std::vector<double> QuestionStats::to_vector() const {
  std::vector<double> out(math_dimension_onehot);
  out.insert(out.end(), grade_onehot.begin(), grade_onehot.end());
  out.insert(out.end(), difficulty_onehot.begin(), difficulty_onehot.end());
  out.push_back(total_trials);
  out.push_back(second_trials);
  out.insert(out.end(), score_level_pct.begin(), score_level_pct.end());
  return out;
}

std::size_t student_stats_dimension(const BucketSchema& schema) {
  return 2 + 2 * schema.bucket_count();
}

std::size_t question_stats_dimension(const BucketSchema& schema) {
  return schema.math_dimensions.size() + 13 + 5 + 2 + 4;
}

QuestionIndex index_questions(std::span<const ingest::QuestionMeta> meta) {
  QuestionIndex index;
  for (const auto& q : meta) index.emplace(q.question_id, q);
  return index;
}

StudentStats student_stats_or_zero(const StatsTable<StudentStats>& table,
                                   const std::string& student_id, const BucketSchema& schema) {
  auto it = table.by_id.find(student_id);
  if (it != table.by_id.end()) return it->second;
  StudentStats zero;
  zero.trial_pct.assign(schema.bucket_count(), 0.0);
  zero.mean_first_score.assign(schema.bucket_count(), 0.0);
  return zero;
}

StatsTable<StudentStats> compute_student_stats(std::span<const ingest::ScoreRecord> records,
                                               const QuestionIndex& questions,
                                               const BucketSchema& schema,
                                               std::int64_t cutoff_ms,
                                               const ingest::ScoreThresholds& thresholds) {
  struct Accumulator {
    StudentStats stats;
    std::vector<double> first_count;
  };
  const std::size_t buckets = schema.bucket_count();
  std::map<std::string, Accumulator> acc;
  StatsTable<StudentStats> table;

  for (const auto& record : records) {
    if (record.timestamp_ms >= cutoff_ms) continue;
    auto q = questions.find(record.question_id);
    if (q == questions.end()) {
      ++table.skipped;
      continue;
    }
    std::size_t bucket = schema.bucket_of(q->second);
    auto [it, inserted] = acc.try_emplace(record.student_id);
    Accumulator& a = it->second;
    if (inserted) {
      a.stats.trial_pct.assign(buckets, 0.0);
      a.stats.mean_first_score.assign(buckets, 0.0);
      a.first_count.assign(buckets, 0.0);
    }
    a.stats.total_trials += 1.0;
    if (record.trial_index == 2) a.stats.second_trials += 1.0;
    a.stats.trial_pct[bucket] += 1.0;
    if (record.trial_index == 1) {
      a.stats.mean_first_score[bucket] += map_score_level(record.raw_score, thresholds).value();
      a.first_count[bucket] += 1.0;
    }
  }

  for (auto& [id, a] : acc) {
    for (std::size_t b = 0; b < buckets; ++b) {
      a.stats.trial_pct[b] /= a.stats.total_trials;
      a.stats.mean_first_score[b] = ratio(a.stats.mean_first_score[b], a.first_count[b]);
    }
    table.by_id.emplace(id, std::move(a.stats));
  }
  return table;
}

StatsTable<QuestionStats> compute_question_stats(std::span<const ingest::ScoreRecord> records,
                                                 const QuestionIndex& questions,
                                                 const BucketSchema& schema,
                                                 std::int64_t cutoff_ms,
                                                 const ingest::ScoreThresholds& thresholds) {
  StatsTable<QuestionStats> table;
  for (const auto& [id, meta] : questions) {
    QuestionStats stats;
    stats.math_dimension_onehot.assign(schema.math_dimensions.size(), 0.0);
    auto dim = std::lower_bound(schema.math_dimensions.begin(), schema.math_dimensions.end(),
                                meta.math_dimension);
    if (dim == schema.math_dimensions.end() || *dim != meta.math_dimension) {
      throw std::out_of_range("question " + id + " has math dimension outside vocabulary");
    }
    stats.math_dimension_onehot[static_cast<std::size_t>(dim - schema.math_dimensions.begin())] =
        1.0;
    stats.grade_onehot.at(static_cast<std::size_t>(meta.grade)) = 1.0;
    stats.difficulty_onehot.at(static_cast<std::size_t>(meta.difficulty - 1)) = 1.0;
    table.by_id.emplace(id, std::move(stats));
  }

  std::map<std::string, double> first_counts;
  for (const auto& record : records) {
    if (record.timestamp_ms >= cutoff_ms) continue;
    auto it = table.by_id.find(record.question_id);
    if (it == table.by_id.end()) {
      ++table.skipped;
      continue;
    }
    QuestionStats& stats = it->second;
    stats.total_trials += 1.0;
    if (record.trial_index == 2) stats.second_trials += 1.0;
    if (record.trial_index == 1) {
      stats.score_level_pct[static_cast<std::size_t>(
          map_score_level(record.raw_score, thresholds).value())] += 1.0;
      first_counts[record.question_id] += 1.0;
    }
  }
  for (const auto& [id, count] : first_counts) {
    for (double& pct : table.by_id[id].score_level_pct) pct /= count;
  }
  return table;
}

std::vector<std::string> student_stats_columns(const BucketSchema& schema) {
  std::vector<std::string> cols{"TotalTrials", "SecondTrials"};
  std::vector<std::string> buckets;
  for (const auto& d : schema.math_dimensions) {
    for (int g : schema.grades) {
      for (int k : schema.difficulties) {
        buckets.push_back(d + "_g" + std::to_string(g) + "_d" + std::to_string(k));
      }
    }
  }
  for (const auto& b : buckets) cols.push_back("TrialPct_" + b);
  for (const auto& b : buckets) cols.push_back("Mean1stScore_" + b);
  return cols;
}

std::vector<std::string> question_stats_columns(const BucketSchema& schema) {
  std::vector<std::string> cols;
  for (const auto& d : schema.math_dimensions) cols.push_back("MathDimension_" + d);
  for (int g = 0; g < 13; ++g) cols.push_back("Grade_" + std::to_string(g));
  for (int k = 1; k <= 5; ++k) cols.push_back("Difficulty_" + std::to_string(k));
  cols.insert(cols.end(), {"TotalTrials", "SecondTrials"});
  for (int l = 0; l < 4; ++l) cols.push_back("TrialPctLevel_" + std::to_string(l));
  return cols;
}

}  // namespace siq::features
