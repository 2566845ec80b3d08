#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "siq/metrics.hpp"
#include "siq/train.hpp"

using namespace siq;
using namespace siq::train;
using metrics::Predictions;
using metrics::StudentOutcome;

namespace {

graph::Snapshot tiny_snapshot() {
  static const auto data = siq::testing::tiny_dataset();
  graph::SnapshotOptions options;
  options.min_records = 10;
  return graph::build_personal_snapshot(data, "s1", options);
}

ExperimentConfig quick_config() {
  ExperimentConfig c;
  c.model.hidden = 6;
  c.model.readout_hidden = 6;
  c.model.layers = 2;
  c.train.lr = 0.01;
  c.train.max_epochs = 15;
  c.train.patience = 5;
  c.train.runs = 2;
  c.logistic.epochs = 20;
  return c;
}

}  // namespace

TEST_CASE("metrics: hand examples") {
  std::vector<StudentOutcome> s{{1, 2}, {1, 1}};
  CHECK(metrics::metric_ap_acc(s) == 0.75);
  CHECK(metrics::metric_o_acc(s) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  std::vector<StudentOutcome> single{{3, 4}};
  CHECK(metrics::metric_ap_acc(single) == 0.75);
  std::vector<StudentOutcome> equal{{1, 3}, {2, 3}, {3, 3}};
  CHECK(metrics::metric_ap_acc(equal) == doctest::Approx(metrics::metric_o_acc(equal)).epsilon(1e-15));
  CHECK_THROWS(metrics::metric_ap_acc({}));
  std::vector<StudentOutcome> empty_set{{0, 0}};
  CHECK_THROWS(metrics::metric_o_acc(empty_set));

  Predictions p{{0, 1, 1}, {0, 0, 1}};
  CHECK(std::abs(metrics::weighted_f1(p) - 2.0 / 3.0) < 1e-12);
  CHECK(std::abs(metrics::weighted_f1(p) - 0.6667) < 1e-4);
  Predictions perfect{{0, 3, 2, 1}, {0, 3, 2, 1}};
  CHECK(metrics::weighted_f1(perfect) == 1.0);
  std::vector<Predictions> both{p, perfect};
  CHECK(metrics::metric_apw_f1(both) == doctest::Approx((2.0 / 3.0 + 1.0) / 2));
}

TEST_CASE("metrics: random instances against the confusion-matrix oracle") {
  std::mt19937_64 rng(42);
  for (int instance = 0; instance < 200; ++instance) {
    std::vector<Predictions> students(1 + rng() % 5);
    std::vector<StudentOutcome> outcomes;
    for (auto& s : students) {
      std::size_t n = 1 + rng() % 9;
      for (std::size_t i = 0; i < n; ++i) {
        s.actual.push_back(static_cast<int>(rng() % 4));
        s.predicted.push_back(static_cast<int>(rng() % 4));
      }
      outcomes.push_back(metrics::outcome(s));
    }
    auto ref = siq::testing::reference_metrics(students);
    CHECK(std::abs(metrics::metric_ap_acc(outcomes) - ref.ap_acc) < 1e-12);
    CHECK(std::abs(metrics::metric_o_acc(outcomes) - ref.o_acc) < 1e-12);
    CHECK(std::abs(metrics::metric_apw_f1(students) - ref.apw_f1) < 1e-12);
  }
}

TEST_CASE("early stopping: hand trace") {
  EarlyStopping s(2);
  std::vector<double> acc{0.5, 0.6, 0.6, 0.55, 0.5};
  int stopped_after = 0;
  for (int e = 1; e <= 5; ++e) {
    s.observe(e, acc[e - 1]);
    if (s.should_stop()) {
      stopped_after = e;
      break;
    }
  }
  CHECK(stopped_after == 4);
  CHECK(s.best_epoch() == 2);
  CHECK(s.best_accuracy() == 0.6);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.patience = 500;
  CHECK_THROWS(c.validate());
  c.max_epochs = 0;
  CHECK_NOTHROW(c.validate());
  c.patience = 0;
  CHECK_THROWS(c.validate());
  TrainConfig f;
  f.label_fraction = 0.0;
  CHECK_THROWS(f.validate());
}

TEST_CASE("label fraction keeps the earliest labels") {
  CHECK(kept_label_count(10, 0.4) == 4);
  CHECK(kept_label_count(10, 1.0) == 10);
  CHECK(kept_label_count(5, 0.6) == 3);
  CHECK_THROWS(kept_label_count(2, 0.4));
  CHECK_THROWS(kept_label_count(10, 0.0));

  auto snap = tiny_snapshot();
  auto full = prepare_graph(snap.graph, model::Variant::R2GCN, 1.0);
  auto part = prepare_graph(snap.graph, model::Variant::R2GCN, 0.6);
  REQUIRE(full.train_rows.size() == 7);
  REQUIRE(part.train_rows.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(part.train_rows[i] == full.train_rows[i]);
  CHECK(part.val_rows == full.val_rows);
  CHECK(part.test_rows == full.test_rows);
  CHECK_THROWS(prepare_graph(snap.graph, model::Variant::R2GCN, 0.1));
}

TEST_CASE("train_one: zero epochs, determinism and best parameters") {
  auto snap = tiny_snapshot();
  auto config = quick_config();
  auto prepared = prepare_graph(snap.graph, model::Variant::R2GCN);
  config.model.variant = model::Variant::R2GCN;

  TrainConfig none = config.train;
  none.max_epochs = 0;
  auto zero = train_one(prepared, config.model, none);
  CHECK(zero.epochs_run == 0);
  CHECK(zero.best_epoch == 0);
  auto m = model::R2GCN::for_graph(prepared.graph, config.model);
  auto init = m.init_params(none.seed);
  for (const auto& name : init.names()) CHECK(zero.params.value(name) == init.value(name));

  auto a = train_one(prepared, config.model, config.train);
  auto b = train_one(prepared, config.model, config.train);
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.val_history == b.val_history);
  for (const auto& name : a.params.names()) CHECK(a.params.value(name) == b.params.value(name));

  // The returned parameters reproduce the reported best validation accuracy.
  CHECK(metrics::accuracy(evaluate(m, a.params, prepared, graph::Split::Validation)) ==
        a.best_val_accuracy);
  for (double v : a.val_history) CHECK(v <= a.best_val_accuracy);
  CHECK(a.best_epoch >= 1);
  CHECK(a.best_epoch <= a.epochs_run);

  auto empty = prepared;
  empty.val_rows.clear();
  empty.val_labels.clear();
  CHECK_THROWS(train_one(empty, config.model, config.train));
}

TEST_CASE("experiments: every method, seeds and aggregation") {
  std::vector<graph::Snapshot> snaps{tiny_snapshot()};
  auto config = quick_config();
  for (auto method : {Method::R2GCN, Method::RGCN_E2N, Method::RGCN_NoE2N,
                      Method::LogisticRegression, Method::Majority}) {
    CAPTURE(to_string(method));
    CHECK(parse_method(to_string(method)) == method);
    auto agg = repeat_and_aggregate(snaps, method, config);
    REQUIRE(agg.runs.size() == 2);
    CHECK(agg.runs[0].seed == config.train.seed);
    CHECK(agg.runs[1].seed == config.train.seed + 1);
    CHECK(agg.config_hash.size() == 16);
    for (const auto& run : agg.runs) {
      CHECK(run.ap_acc >= 0.0);
      CHECK(run.ap_acc <= 1.0);
      CHECK(run.students.size() == 1);
      CHECK(run.students[0].test.actual.size() == 2);
    }
    auto again = repeat_and_aggregate(snaps, method, config);
    CHECK(again.ap_acc.mean == agg.ap_acc.mean);
  }
  CHECK_THROWS(parse_method("gat"));
  CHECK_FALSE(variant_of(Method::Majority).has_value());
}

TEST_CASE("aggregation arithmetic") {
  RunReport a, b;
  a.ap_acc = 0.6;
  b.ap_acc = 0.7;
  auto agg = aggregate({a, b});
  CHECK(agg.ap_acc.mean == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(agg.ap_acc.std == doctest::Approx(0.05).epsilon(1e-12));
  auto one = aggregate({a});
  CHECK(one.ap_acc.mean == 0.6);
  CHECK(one.ap_acc.std == 0.0);
}

TEST_CASE("label sweep at fraction 1 matches the base experiment") {
  std::vector<graph::Snapshot> snaps{tiny_snapshot()};
  auto config = quick_config();
  config.train.runs = 1;
  std::vector<double> fractions{0.6, 1.0};
  auto sweep = label_size_sweep(snaps, Method::RGCN_E2N, config, fractions);
  REQUIRE(sweep.size() == 2);
  auto base = repeat_and_aggregate(snaps, Method::RGCN_E2N, config);
  CHECK(sweep[1].ap_acc.mean == base.ap_acc.mean);
  CHECK(sweep[0].label_fraction == 0.6);
  CHECK(sweep[0].runs[0].students[0].train_size == 4);
}

TEST_CASE("reports") {
  CHECK(config_hash("abc").size() == 16);
  CHECK(config_hash("abc") != config_hash("abd"));
  CHECK(config_hash("") == "cbf29ce484222325");
  ExperimentConfig c;
  auto echo = config_echo(c);
  CHECK(echo.find("train.lr=1e-04") != std::string::npos);

  std::vector<graph::Snapshot> snaps{tiny_snapshot()};
  auto config = quick_config();
  config.train.runs = 1;
  auto agg = repeat_and_aggregate(snaps, Method::Majority, config);
  std::ostringstream csv;
  write_per_student_csv(agg.runs, csv);
  CHECK(csv.str().rfind(
            "student_id,method,seed,label_fraction,n_train,n_val,n_test,n_correct,test_acc,val_acc,"
            "weighted_f1,best_epoch\ns1,majority,0,1,7,1,2,",
            0) == 0);
  std::vector<AggregateReport> reports{agg};
  auto json = summary_json(reports, config);
  CHECK(json.find("\"schema\": \"siq.summary/1\"") != std::string::npos);
}

TEST_CASE("parallel workers merge in student order") {
  auto data = siq::testing::tiny_dataset();
  graph::SnapshotOptions options;
  options.min_records = 10;
  std::vector<graph::Snapshot> snaps{graph::build_personal_snapshot(data, "s2", options),
                                     graph::build_personal_snapshot(data, "s1", options)};
  auto config = quick_config();
  auto serial = run_experiment(snaps, Method::R2GCN, config, 3, 1);
  auto parallel = run_experiment(snaps, Method::R2GCN, config, 3, 2);
  REQUIRE(serial.students.size() == 2);
  CHECK(serial.students[0].student_id == "s1");
  CHECK(parallel.students[0].student_id == "s1");
  CHECK(serial.ap_acc == parallel.ap_acc);
  CHECK(serial.students[1].test.predicted == parallel.students[1].test.predicted);
}
