#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siq/baselines.hpp"
#include "siq/graph.hpp"
#include "siq/metrics.hpp"
#include "siq/model.hpp"
#include "siq/nn.hpp"

namespace siq::train {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-2;
  int max_epochs = 400;
  int patience = 100;
  int runs = 10;
  std::uint64_t seed = 0;
  double label_fraction = 1.0;
  bool decoupled_weight_decay = false;

  void validate() const;
};

/// Tracks the best validation accuracy. Epochs are numbered from 1; ties
/// keep the earlier epoch.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records the accuracy after `epoch`; true when it is a new best.
  bool observe(int epoch, double accuracy);
  bool should_stop() const { return best_epoch_ > 0 && epochs_since_best_ >= patience_; }

  int best_epoch() const { return best_epoch_; }
  double best_accuracy() const { return best_accuracy_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_accuracy_ = -1.0;
  int epochs_since_best_ = 0;
};

/// Model input plus the labeled target rows of each split. Node features
/// are standardized per type; the training rows are cut to the earliest
/// floor(label_fraction * n) labels.
struct PreparedGraph {
  model::HeteroGraph graph;
  std::vector<std::size_t> train_rows, val_rows, test_rows;
  std::vector<int> train_labels, val_labels, test_labels;
};

PreparedGraph prepare_graph(const graph::SIQGraph& graph, model::Variant variant,
                            double label_fraction = 1.0);

/// Earliest floor(fraction * n) entries; throws when that is empty.
std::size_t kept_label_count(std::size_t n, double fraction);

struct TrainResult {
  nn::ParamSet params;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  int epochs_run = 0;
  std::vector<double> val_history;  // accuracy after each epoch
};

/// Full-graph Adam on training-row cross entropy, keeping the parameters of
/// the best validation epoch.
TrainResult train_one(const PreparedGraph& prepared, const model::ModelConfig& model_config,
                      const TrainConfig& config);
TrainResult train_one(const graph::SIQGraph& graph, const model::ModelConfig& model_config,
                      const TrainConfig& config);

metrics::Predictions evaluate(const model::R2GCN& model, const nn::ParamSet& params,
                              const PreparedGraph& prepared, graph::Split split);

enum class Method { R2GCN, RGCN_E2N, RGCN_NoE2N, LogisticRegression, Majority };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);
std::optional<model::Variant> variant_of(Method method);

struct ExperimentConfig {
  model::ModelConfig model;
  TrainConfig train;
  baselines::LogisticConfig logistic;
};

struct StudentResult {
  std::string student_id;
  metrics::Predictions test;
  double test_accuracy = 0.0;
  double val_accuracy = 0.0;
  double weighted_f1 = 0.0;
  int best_epoch = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

/// Trains `method` on one snapshot with `seed` and scores its test split.
StudentResult run_student(const graph::Snapshot& snapshot, Method method,
                          const ExperimentConfig& config, std::uint64_t seed);

struct RunReport {
  std::string method;
  std::uint64_t seed = 0;
  double label_fraction = 1.0;
  std::string config_hash;
  std::vector<StudentResult> students;  // ordered by student id
  double ap_acc = 0.0;
  double o_acc = 0.0;
  double apw_f1 = 0.0;
};

/// Fills the aggregate metrics from the per-student rows.
void summarize(RunReport& report);

/// One run over every snapshot. Students are spread over `workers` threads
/// and merged in student-id order.
RunReport run_experiment(std::span<const graph::Snapshot> snapshots, Method method,
                         const ExperimentConfig& config, std::uint64_t seed,
                         std::size_t workers = 1);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population deviation across runs
};

struct AggregateReport {
  std::string method;
  double label_fraction = 1.0;
  std::string config_hash;
  std::vector<RunReport> runs;
  MetricSummary ap_acc, o_acc, apw_f1;
};

MetricSummary mean_and_std(std::span<const double> values);
AggregateReport aggregate(std::vector<RunReport> runs);

/// config.train.runs runs with seeds config.train.seed + run index.
AggregateReport repeat_and_aggregate(std::span<const graph::Snapshot> snapshots, Method method,
                                     const ExperimentConfig& config, std::size_t workers = 1);

/// repeat_and_aggregate at each training-label fraction.
std::vector<AggregateReport> label_size_sweep(std::span<const graph::Snapshot> snapshots,
                                              Method method, const ExperimentConfig& config,
                                              std::span<const double> fractions,
                                              std::size_t workers = 1);

/// Canonical key = value listing of every setting that affects results.
std::string config_echo(const ExperimentConfig& config);
/// 16 hex digits of FNV-1a over the text.
std::string config_hash(std::string_view text);

/// student_id,method,seed,label_fraction,n_train,n_val,n_test,n_correct,test_acc,val_acc,weighted_f1,best_epoch
void write_per_student_csv(std::span<const RunReport> runs, std::ostream& out);
std::string summary_json(std::span<const AggregateReport> reports, const ExperimentConfig& config);

std::string format_number(double value);

}  // namespace siq::train
