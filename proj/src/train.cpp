#include "siq/train.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace siq::train {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be non-negative");
  if (max_epochs < 0) throw std::invalid_argument("max_epochs must be non-negative");
  if (patience < 1 || (max_epochs > 0 && patience > max_epochs)) {
    throw std::invalid_argument("patience must lie in 1..max_epochs");
  }
  if (runs < 1) throw std::invalid_argument("runs must be at least 1");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) {
    throw std::invalid_argument("label_fraction must lie in (0, 1]");
  }
}

bool EarlyStopping::observe(int epoch, double accuracy) {
  if (accuracy > best_accuracy_) {
    best_accuracy_ = accuracy;
    best_epoch_ = epoch;
    epochs_since_best_ = 0;
    return true;
  }
  ++epochs_since_best_;
  return false;
}

std::size_t kept_label_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("label fraction must lie in (0, 1]");
  }
  auto kept = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  if (kept == 0) {
    throw std::invalid_argument("label fraction " + format_number(fraction) + " of " +
                                std::to_string(n) + " training labels leaves none");
  }
  return kept;
}

PreparedGraph prepare_graph(const graph::SIQGraph& graph, model::Variant variant,
                            double label_fraction) {
  PreparedGraph out;
  out.graph = model::make_model_input(graph, variant);
  for (auto& features : out.graph.features) model::standardize_columns(features);
  for (const auto& label : graph.labels) {
    switch (label.split) {
      case graph::Split::Train:
        out.train_rows.push_back(label.question);
        out.train_labels.push_back(label.level);
        break;
      case graph::Split::Validation:
        out.val_rows.push_back(label.question);
        out.val_labels.push_back(label.level);
        break;
      case graph::Split::Test:
        out.test_rows.push_back(label.question);
        out.test_labels.push_back(label.level);
        break;
    }
  }
  if (!out.train_rows.empty()) {
    std::size_t kept = kept_label_count(out.train_rows.size(), label_fraction);
    out.train_rows.resize(kept);
    out.train_labels.resize(kept);
  }
  return out;
}

namespace {

double accuracy_of(const nn::Tensor& logits, std::size_t first_row, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::size_t r = first_row + i;
    int best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits(r, c) > logits(r, static_cast<std::size_t>(best))) best = static_cast<int>(c);
    }
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

TrainResult train_one(const PreparedGraph& prepared, const model::ModelConfig& model_config,
                      const TrainConfig& config) {
  config.validate();
  if (prepared.train_rows.empty()) throw std::invalid_argument("training mask is empty");
  if (prepared.val_rows.empty()) throw std::invalid_argument("validation mask is empty");

  const auto model = model::R2GCN::for_graph(prepared.graph, model_config);
  TrainResult result;
  result.params = model.init_params(config.seed);
  nn::ParamSet& params = result.params;

  // Train and validation rows share one forward pass: the logits computed
  // before epoch e's update score the parameters left by epoch e - 1.
  std::vector<std::size_t> rows = prepared.train_rows;
  rows.insert(rows.end(), prepared.val_rows.begin(), prepared.val_rows.end());
  std::vector<std::size_t> train_index(prepared.train_rows.size());
  for (std::size_t i = 0; i < train_index.size(); ++i) train_index[i] = i;
  const std::size_t val_offset = prepared.train_rows.size();

  nn::AdamOptions adam;
  adam.lr = config.lr;
  adam.weight_decay = config.weight_decay;
  adam.decoupled_weight_decay = config.decoupled_weight_decay;

  EarlyStopping stopping(config.patience);
  nn::ParamSet best = params;
  auto observe = [&](int epoch, double accuracy) {
    result.val_history.push_back(accuracy);
    if (stopping.observe(epoch, accuracy)) best = params;
  };

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    nn::Tape tape;
    nn::Var logits = model.forward(tape, params, prepared.graph, rows);
    if (epoch > 1) {
      observe(epoch - 1, accuracy_of(logits.value(), val_offset, prepared.val_labels));
      if (stopping.should_stop()) break;
    }
    nn::Var loss = nn::cross_entropy(nn::row_gather(logits, train_index), prepared.train_labels);
    nn::adam_step(params, tape.backward(loss), adam);
    result.epochs_run = epoch;
  }

  if (result.epochs_run == 0) {
    nn::Tape tape;
    nn::Var logits = model.forward(tape, params, prepared.graph, prepared.val_rows);
    result.best_val_accuracy = accuracy_of(logits.value(), 0, prepared.val_labels);
    return result;
  }
  if (result.val_history.size() < static_cast<std::size_t>(result.epochs_run)) {
    nn::Tape tape;
    nn::Var logits = model.forward(tape, params, prepared.graph, prepared.val_rows);
    observe(result.epochs_run, accuracy_of(logits.value(), 0, prepared.val_labels));
  }
  result.params = std::move(best);
  result.best_epoch = stopping.best_epoch();
  result.best_val_accuracy = stopping.best_accuracy();
  return result;
}

TrainResult train_one(const graph::SIQGraph& graph, const model::ModelConfig& model_config,
                      const TrainConfig& config) {
  return train_one(prepare_graph(graph, model_config.variant, config.label_fraction), model_config,
                   config);
}

metrics::Predictions evaluate(const model::R2GCN& model, const nn::ParamSet& params,
                              const PreparedGraph& prepared, graph::Split split) {
  const auto& rows = split == graph::Split::Train        ? prepared.train_rows
                     : split == graph::Split::Validation ? prepared.val_rows
                                                         : prepared.test_rows;
  const auto& labels = split == graph::Split::Train        ? prepared.train_labels
                       : split == graph::Split::Validation ? prepared.val_labels
                                                           : prepared.test_labels;
  metrics::Predictions out;
  out.actual = labels;
  if (rows.empty()) return out;
  nn::Tape tape;
  nn::Var logits = model.forward(tape, params, prepared.graph, rows);
  out.predicted = nn::argmax_rows(logits.value());
  return out;
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::R2GCN: return "r2gcn";
    case Method::RGCN_E2N: return "rgcn_e2n";
    case Method::RGCN_NoE2N: return "rgcn_no_e2n";
    case Method::LogisticRegression: return "lr";
    case Method::Majority: return "majority";
  }
  return "r2gcn";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::R2GCN, Method::RGCN_E2N, Method::RGCN_NoE2N,
                   Method::LogisticRegression, Method::Majority}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) +
                              "' (expected r2gcn, rgcn_e2n, rgcn_no_e2n, lr or majority)");
}

std::optional<model::Variant> variant_of(Method method) {
  switch (method) {
    case Method::R2GCN: return model::Variant::R2GCN;
    case Method::RGCN_E2N: return model::Variant::RGCN_E2N;
    case Method::RGCN_NoE2N: return model::Variant::RGCN_NoE2N;
    default: return std::nullopt;
  }
}

namespace {

StudentResult finish(std::string student_id, metrics::Predictions test, double val_accuracy) {
  StudentResult r;
  r.student_id = std::move(student_id);
  r.test_accuracy = metrics::accuracy(test);
  r.weighted_f1 = metrics::weighted_f1(test);
  r.val_accuracy = val_accuracy;
  r.test = std::move(test);
  return r;
}

double accuracy_of(std::span<const int> predicted, std::span<const baselines::PairExample> examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (predicted[i] == examples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace

StudentResult run_student(const graph::Snapshot& snapshot, Method method,
                          const ExperimentConfig& config, std::uint64_t seed) {
  const auto& id = snapshot.spec.student_id;
  if (auto variant = variant_of(method)) {
    PreparedGraph prepared = prepare_graph(snapshot.graph, *variant, config.train.label_fraction);
    if (prepared.test_rows.empty()) throw std::invalid_argument("student " + id + " has no test labels");
    model::ModelConfig model_config = config.model;
    model_config.variant = *variant;
    TrainConfig train_config = config.train;
    train_config.seed = seed;
    TrainResult trained = train_one(prepared, model_config, train_config);
    const auto model = model::R2GCN::for_graph(prepared.graph, model_config);
    StudentResult r = finish(id, evaluate(model, trained.params, prepared, graph::Split::Test),
                             trained.best_val_accuracy);
    r.best_epoch = trained.best_epoch;
    r.train_size = prepared.train_rows.size();
    r.val_size = prepared.val_rows.size();
    return r;
  }

  auto train = baselines::pair_examples(snapshot.graph, id, graph::Split::Train);
  auto val = baselines::pair_examples(snapshot.graph, id, graph::Split::Validation);
  auto test = baselines::pair_examples(snapshot.graph, id, graph::Split::Test);
  if (train.empty()) throw std::invalid_argument("training mask is empty");
  if (test.empty()) throw std::invalid_argument("student " + id + " has no test labels");
  train.resize(kept_label_count(train.size(), config.train.label_fraction));

  metrics::Predictions predictions;
  for (const auto& ex : test) predictions.actual.push_back(ex.label);
  double val_accuracy = 0.0;
  if (method == Method::Majority) {
    std::vector<int> labels;
    for (const auto& ex : train) labels.push_back(ex.label);
    auto majority = baselines::majority_class(labels);
    predictions.predicted = baselines::predict(majority, test);
    val_accuracy = accuracy_of(baselines::predict(majority, val), val);
  } else {
    auto scaler = baselines::Standardizer::fit(train);
    auto fitted = baselines::logistic_regression_train(scaler.apply(train), config.logistic);
    predictions.predicted = baselines::predict(fitted, scaler.apply(test));
    auto val_scaled = scaler.apply(val);
    val_accuracy = accuracy_of(baselines::predict(fitted, val_scaled), val_scaled);
  }
  StudentResult r = finish(id, std::move(predictions), val_accuracy);
  r.train_size = train.size();
  r.val_size = val.size();
  return r;
}

void summarize(RunReport& report) {
  std::vector<metrics::StudentOutcome> outcomes;
  std::vector<metrics::Predictions> predictions;
  for (const auto& s : report.students) {
    outcomes.push_back(metrics::outcome(s.test));
    predictions.push_back(s.test);
  }
  report.ap_acc = metrics::metric_ap_acc(outcomes);
  report.o_acc = metrics::metric_o_acc(outcomes);
  report.apw_f1 = metrics::metric_apw_f1(predictions);
}

RunReport run_experiment(std::span<const graph::Snapshot> snapshots, Method method,
                         const ExperimentConfig& config, std::uint64_t seed, std::size_t workers) {
  if (snapshots.empty()) throw std::invalid_argument("no students to evaluate");
  std::vector<StudentResult> results(snapshots.size());
  std::vector<std::exception_ptr> errors(snapshots.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < snapshots.size(); i = next++) {
      try {
        results[i] = run_student(snapshots[i], method, config, seed);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, snapshots.size());
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  RunReport report;
  report.method = std::string(to_string(method));
  report.seed = seed;
  report.label_fraction = config.train.label_fraction;
  report.config_hash = config_hash(config_echo(config));
  report.students = std::move(results);
  std::sort(report.students.begin(), report.students.end(),
            [](const StudentResult& a, const StudentResult& b) { return a.student_id < b.student_id; });
  summarize(report);
  return report;
}

MetricSummary mean_and_std(std::span<const double> values) {
  MetricSummary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

AggregateReport aggregate(std::vector<RunReport> runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate needs at least one run");
  AggregateReport out;
  out.method = runs.front().method;
  out.label_fraction = runs.front().label_fraction;
  out.config_hash = runs.front().config_hash;
  std::vector<double> ap, o, f1;
  for (const auto& r : runs) {
    ap.push_back(r.ap_acc);
    o.push_back(r.o_acc);
    f1.push_back(r.apw_f1);
  }
  out.ap_acc = mean_and_std(ap);
  out.o_acc = mean_and_std(o);
  out.apw_f1 = mean_and_std(f1);
  out.runs = std::move(runs);
  return out;
}

AggregateReport repeat_and_aggregate(std::span<const graph::Snapshot> snapshots, Method method,
                                     const ExperimentConfig& config, std::size_t workers) {
  config.train.validate();
  std::vector<RunReport> runs;
  for (int run = 0; run < config.train.runs; ++run) {
    runs.push_back(run_experiment(snapshots, method, config,
                                  config.train.seed + static_cast<std::uint64_t>(run), workers));
  }
  return aggregate(std::move(runs));
}

std::vector<AggregateReport> label_size_sweep(std::span<const graph::Snapshot> snapshots,
                                              Method method, const ExperimentConfig& config,
                                              std::span<const double> fractions,
                                              std::size_t workers) {
  std::vector<AggregateReport> out;
  for (double fraction : fractions) {
    ExperimentConfig c = config;
    c.train.label_fraction = fraction;
    out.push_back(repeat_and_aggregate(snapshots, method, c, workers));
  }
  return out;
}

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

std::string config_echo(const ExperimentConfig& config) {
  std::ostringstream out;
  const auto& m = config.model;
  const auto& t = config.train;
  const auto& l = config.logistic;
  out << "model.layers=" << m.layers << '\n'
      << "model.hidden=" << m.hidden << '\n'
      << "model.readout_hidden=" << m.readout_hidden << '\n'
      << "model.num_classes=" << m.num_classes << '\n'
      << "train.lr=" << format_number(t.lr) << '\n'
      << "train.weight_decay=" << format_number(t.weight_decay) << '\n'
      << "train.decoupled_weight_decay=" << (t.decoupled_weight_decay ? 1 : 0) << '\n'
      << "train.max_epochs=" << t.max_epochs << '\n'
      << "train.patience=" << t.patience << '\n'
      << "train.runs=" << t.runs << '\n'
      << "train.seed=" << t.seed << '\n'
      << "train.label_fraction=" << format_number(t.label_fraction) << '\n'
      << "logistic.lr=" << format_number(l.lr) << '\n'
      << "logistic.epochs=" << l.epochs << '\n'
      << "logistic.l2=" << format_number(l.l2) << '\n';
  return out.str();
}

std::string config_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
  return out;
}

void write_per_student_csv(std::span<const RunReport> runs, std::ostream& out) {
  out << "student_id,method,seed,label_fraction,n_train,n_val,n_test,n_correct,test_acc,val_acc,"
         "weighted_f1,best_epoch\n";
  for (const auto& run : runs) {
    for (const auto& s : run.students) {
      auto o = metrics::outcome(s.test);
      out << s.student_id << ',' << run.method << ',' << run.seed << ','
          << format_number(run.label_fraction) << ',' << s.train_size << ',' << s.val_size << ','
          << o.total << ',' << o.correct << ',' << format_number(s.test_accuracy) << ','
          << format_number(s.val_accuracy) << ',' << format_number(s.weighted_f1) << ','
          << s.best_epoch << '\n';
    }
  }
}

std::string summary_json(std::span<const AggregateReport> reports, const ExperimentConfig& config) {
  nlohmann::ordered_json doc;
  doc["schema"] = "siq.summary/1";
  const std::string echo = config_echo(config);
  doc["config_hash"] = config_hash(echo);
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  std::istringstream lines(echo);
  for (std::string line; std::getline(lines, line);) {
    auto eq = line.find('=');
    cfg[line.substr(0, eq)] = line.substr(eq + 1);
  }
  doc["config"] = cfg;
  doc["results"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json entry;
    entry["method"] = r.method;
    entry["label_fraction"] = r.label_fraction;
    entry["students"] = r.runs.empty() ? 0 : r.runs.front().students.size();
    entry["ap_acc"] = {{"mean", r.ap_acc.mean}, {"std", r.ap_acc.std}};
    entry["o_acc"] = {{"mean", r.o_acc.mean}, {"std", r.o_acc.std}};
    entry["apw_f1"] = {{"mean", r.apw_f1.mean}, {"std", r.apw_f1.std}};
    entry["runs"] = nlohmann::ordered_json::array();
    for (const auto& run : r.runs) {
      entry["runs"].push_back(
          {{"seed", run.seed}, {"ap_acc", run.ap_acc}, {"o_acc", run.o_acc}, {"apw_f1", run.apw_f1}});
    }
    doc["results"].push_back(entry);
  }
  return doc.dump(2);
}

}  // namespace siq::train
