#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "siq/features.hpp"

using namespace siq;
using namespace siq::features;
using siq::testing::down;
using siq::testing::move;
using siq::testing::trajectory;
using siq::testing::up;

TEST_CASE("gc: empty trajectory") {
  CHECK(detect_generalized_clicks(trajectory({}), 5.0).empty());
}

TEST_CASE("gc: down, move, up forms one drag of length 5") {
  auto t = trajectory({down(100, 0, 0), move(150, 3, 0), up(200, 5, 0)});
  auto gcs = detect_generalized_clicks(t, 5.0);
  REQUIRE(gcs.size() == 1);
  CHECK(gcs[0].start_ms == 100);
  CHECK(gcs[0].end_ms == 200);
  CHECK(gcs[0].start_index == 0);
  CHECK(gcs[0].end_index == 2);
  CHECK(gcs[0].path_length == 5.0);
  // 5 is not above a threshold of 5.
  CHECK(gcs[0].kind == ClickKind::Click);
  CHECK(detect_generalized_clicks(t, 4.0)[0].kind == ClickKind::Drag);
}

TEST_CASE("gc: stray up and nested down are dropped") {
  auto t = trajectory({up(50), down(100), down(120), up(200)});
  auto gcs = detect_generalized_clicks(t, 5.0);
  REQUIRE(gcs.size() == 1);
  CHECK(gcs[0].start_ms == 100);
  CHECK(gcs[0].end_ms == 200);
}

TEST_CASE("gc: trailing open down is dropped") {
  auto t = trajectory({down(1), up(2), down(3), move(4, 9, 9)});
  CHECK(detect_generalized_clicks(t, 5.0).size() == 1);
}

TEST_CASE("features: no GC, two moves 30 px apart") {
  auto f = featurize_trajectory(trajectory({move(0, 0, 0), move(500, 30, 0)}));
  CHECK(f.gc_count == 0.0);
  CHECK(f.first_gc_time_length == 0.0);
  CHECK(f.first_gc_time_percent == 0.0);
  CHECK(f.gc_per_second == 0.0);
  CHECK(f.think_time_length == 0.0);
  CHECK(f.first_attempt_event_count == 0.0);
  CHECK(f.overall_distance == 30.0);
  CHECK(f.total_event_count == 2.0);
  CHECK(f.total_time == 500.0);
}

TEST_CASE("features: hand-computed 4000 ms session") {
  auto t = trajectory({move(0, 0, 0), down(1000, 10, 0), up(1500, 20, 0), move(4000, 30, 0)});
  auto f = featurize_trajectory(t);
  CHECK(f.total_time == 4000.0);
  CHECK(f.first_gc_time_length == 1000.0);
  CHECK(f.first_gc_time_percent == 0.125);
  CHECK(f.gc_count == 1.0);
  CHECK(f.gc_per_second == 0.25);
  CHECK(f.overall_distance == 30.0);
  CHECK(f.first_gc_event_start_idx == 1.0);
  CHECK(f.first_gc_event_percent == 0.25);
  CHECK(f.first_gc_event_end_idx == 3.0);
  CHECK(f.think_time_length == 1000.0);
  CHECK(f.think_time_percent == 0.25);
  CHECK(f.think_time_event_count == 1.0);
  // The 2500 ms silence after the mouseup ends the first attempt.
  CHECK(f.first_attempt_event_count == 2.0);
  CHECK(f.avg_time_between_gc == 0.0);
  CHECK(f.total_event_count == 4.0);
}

TEST_CASE("features: gaps between GCs") {
  auto t = trajectory({down(0), up(100), down(300), up(400), down(1000), up(1100)});
  auto f = featurize_trajectory(t);
  CHECK(f.gc_count == 3.0);
  // Gaps 200 and 600.
  CHECK(f.avg_time_between_gc == 400.0);
  CHECK(f.med_time_between_gc == 400.0);
  CHECK(f.std_time_between_gc == 200.0);
}

TEST_CASE("features: interaction hour") {
  const std::int64_t hour = 3600LL * 1000;
  auto f = featurize_trajectory(trajectory({move(13 * hour + 5), move(13 * hour + 10)}));
  CHECK(f.interaction_hour == 13);
  auto v = f.to_vector();
  REQUIRE(v.size() == InteractionFeatures::kDimension);
  CHECK(v.size() == 42);
  double block = 0.0;
  for (std::size_t h = 0; h < 24; ++h) block += v[11 + h];
  CHECK(block == 1.0);
  CHECK(v[11 + 13] == 1.0);

  MouseFeatureConfig shifted;
  shifted.utc_offset_minutes = -120;
  CHECK(featurize_trajectory(trajectory({move(13 * hour)}), shifted).interaction_hour == 11);
  CHECK(InteractionFeatures::column_names().size() == 42);
}

TEST_CASE("features: time shift and coordinate scale invariance") {
  std::vector<ingest::MouseEvent> base{move(0, 1, 1),     down(700, 4, 5),  move(900, 8, 9),
                                       up(1000, 10, 12),  move(4000, 0, 0), down(4100, 3, 3),
                                       up(4150, 3, 4),    move(5000, 7, 7)};
  auto reference = featurize_trajectory(trajectory(base));

  auto shifted = base;
  for (auto& e : shifted) e.t_ms += 123457;
  auto fs = featurize_trajectory(trajectory(shifted));
  auto a = reference.to_vector();
  auto b = fs.to_vector();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i >= 11 && i < 35) continue;  // hour block
    CHECK(a[i] == b[i]);
  }

  auto scaled = base;
  for (auto& e : scaled) {
    e.x *= 4.0;
    e.y *= 4.0;
  }
  auto fc = featurize_trajectory(trajectory(scaled));
  auto c = fc.to_vector();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i == 10) {
      CHECK(c[i] == doctest::Approx(4.0 * a[i]).epsilon(1e-15));
    } else {
      CHECK(a[i] == c[i]);
    }
  }
  auto g1 = detect_generalized_clicks(trajectory(base), 5.0);
  auto g4 = detect_generalized_clicks(trajectory(scaled), 5.0);
  REQUIRE(g1.size() == g4.size());
  for (std::size_t k = 0; k < g1.size(); ++k) {
    CHECK(g4[k].path_length == doctest::Approx(4.0 * g1[k].path_length).epsilon(1e-15));
  }
}

namespace {

std::vector<ingest::QuestionMeta> meta() {
  return {{"q1", 3, 2, "algebra"}, {"q2", 12, 5, "geometry"}, {"q3", 3, 2, "algebra"}};
}

}  // namespace

TEST_CASE("stats: schema dimensions") {
  auto m = meta();
  auto schema = BucketSchema::observed(m);
  CHECK(schema.math_dimensions == std::vector<std::string>{"algebra", "geometry"});
  CHECK(schema.bucket_count() == 2 * 2 * 2);
  CHECK(student_stats_dimension(schema) == 2 + 2 * 8);
  CHECK(question_stats_dimension(schema) == 2 + 24);
  CHECK(student_stats_columns(schema).size() == student_stats_dimension(schema));
  CHECK(question_stats_columns(schema).size() == question_stats_dimension(schema));
  CHECK_THROWS(schema.bucket_of({"qx", 4, 2, "algebra"}));
}

TEST_CASE("stats: students") {
  auto m = meta();
  auto schema = BucketSchema::observed(m);
  auto index = index_questions(m);

  auto none = compute_student_stats({}, index, schema, 1000);
  auto zero = student_stats_or_zero(none, "s1", schema);
  CHECK(zero.total_trials == 0.0);
  for (double v : zero.to_vector()) CHECK(v == 0.0);

  // Two first trials in one bucket at levels 1 and 3.
  std::vector<ingest::ScoreRecord> two{{"s1", "q1", 30, 1, 1}, {"s1", "q3", 80, 2, 1}};
  auto st = compute_student_stats(two, index, schema, 1000).by_id.at("s1");
  std::size_t b = schema.bucket_of(m[0]);
  CHECK(st.trial_pct[b] == 1.0);
  CHECK(st.mean_first_score[b] == 2.0);
  CHECK(std::accumulate(st.trial_pct.begin(), st.trial_pct.end(), 0.0) == 1.0);

  std::vector<ingest::ScoreRecord> retry{{"s1", "q1", 30, 1, 1}, {"s1", "q1", 90, 2, 2},
                                         {"s1", "q9", 90, 3, 1}, {"s1", "q2", 90, 5000, 1}};
  auto table = compute_student_stats(retry, index, schema, 1000);
  CHECK(table.skipped == 1);
  auto s = table.by_id.at("s1");
  CHECK(s.total_trials == 2.0);
  CHECK(s.second_trials == 1.0);
  // Only the first trial feeds the mean.
  CHECK(s.mean_first_score[b] == 1.0);
  CHECK(s.to_vector().size() == student_stats_dimension(schema));
}

TEST_CASE("stats: questions") {
  auto m = meta();
  auto schema = BucketSchema::observed(m);
  auto index = index_questions(m);
  std::vector<ingest::ScoreRecord> records{{"a", "q1", 0, 1, 1},  {"b", "q1", 10, 2, 1},
                                           {"c", "q1", 60, 3, 1}, {"d", "q1", 100, 4, 1},
                                           {"d", "q1", 10, 5, 2}};
  auto table = compute_question_stats(records, index, schema, 1000);
  const auto& q1 = table.by_id.at("q1");
  CHECK(q1.score_level_pct == std::array<double, 4>{0.5, 0.0, 0.25, 0.25});
  CHECK(q1.total_trials == 5.0);
  CHECK(q1.second_trials == 1.0);

  const auto& q2 = table.by_id.at("q2");
  CHECK(q2.total_trials == 0.0);
  CHECK(q2.score_level_pct == std::array<double, 4>{0, 0, 0, 0});
  CHECK(q2.grade_onehot[12] == 1.0);
  CHECK(std::accumulate(q2.grade_onehot.begin(), q2.grade_onehot.end(), 0.0) == 1.0);
  CHECK(q2.difficulty_onehot[4] == 1.0);
  CHECK(q2.math_dimension_onehot == std::vector<double>{0.0, 1.0});
  CHECK(q2.to_vector().size() == question_stats_dimension(schema));
}
