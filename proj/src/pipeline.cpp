#include "siq/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "siq/synth.hpp"

namespace siq::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

MissingStage::MissingStage(const std::string& stage, const std::string& detail)
    : std::runtime_error("stage '" + stage + "' must run first: " + detail), stage_(stage) {}

fs::path stage_dir(const config::RunConfig& config, const std::string& stage) {
  return config.out / stage;
}

namespace {

std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) { open_output(path) << text; }

std::string schema_tag(const std::string& stage) { return "siq." + stage + "/1"; }

void write_manifest(const config::RunConfig& config, const fs::path& dir, const std::string& stage,
                    ordered_json body) {
  ordered_json doc;
  doc["schema"] = schema_tag(stage);
  doc["config_hash"] = config_fingerprint(config);
  for (auto& [key, value] : body.items()) doc[key] = value;
  write_text(dir / "manifest.json", doc.dump(2) + "\n");
}

// Reads <dir>/manifest.json of `stage`, checking its schema tag.
ordered_json require_stage(const fs::path& dir, const std::string& stage) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) throw MissingStage(stage, path.string() + " not found");
  ordered_json doc;
  try {
    doc = ordered_json::parse(ingest::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw MissingStage(stage, path.string() + " is not valid JSON: " + e.what());
  }
  if (doc.value("schema", "") != schema_tag(stage)) {
    throw MissingStage(stage, path.string() + " has schema '" + doc.value("schema", "") +
                                  "', expected '" + schema_tag(stage) + "'");
  }
  return doc;
}

template <typename Row>
void write_row(std::ostream& out, const Row& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    out << train::format_number(values[i]);
  }
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  auto out = open_output(path);
  for (const auto& l : lines) out << l << '\n';
}

graph::DatasetOptions dataset_options(const config::RunConfig& config) {
  graph::DatasetOptions options;
  options.mouse = config.mouse;
  options.thresholds = config.thresholds;
  options.feature_cutoff_ms = config.feature_cutoff_ms;
  return options;
}

struct Inputs {
  fs::path events, scores, questions;
};

Inputs input_paths(const config::RunConfig& config) {
  const fs::path synth = stage_dir(config, "synth");
  Inputs in{config.events_path, config.scores_path, config.questions_path};
  bool defaulted = false;
  if (in.events.empty()) in.events = synth / "events.jsonl", defaulted = true;
  if (in.scores.empty()) in.scores = synth / "scores.csv", defaulted = true;
  if (in.questions.empty()) in.questions = synth / "questions.csv", defaulted = true;
  if (defaulted) require_stage(synth, "synth");
  for (const auto& p : {in.events, in.scores, in.questions}) {
    if (!fs::exists(p)) throw std::runtime_error("input file " + p.string() + " not found");
  }
  return in;
}

std::vector<std::string> method_dirs(const config::RunConfig& config) {
  std::vector<std::string> out;
  const fs::path root = stage_dir(config, "train");
  if (!fs::exists(root)) return out;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
      out.push_back(entry.path().filename().string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::runtime_error("CSV column '" + name + "' missing");
    return static_cast<std::size_t>(it - header.begin());
  }
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvTable read_csv(const fs::path& path) {
  CsvTable table;
  std::istringstream in(ingest::read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
  table.header = split_csv(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != table.header.size()) {
      throw std::runtime_error(path.string() + ": row has " + std::to_string(cells.size()) +
                               " cells, header has " + std::to_string(table.header.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  return table;
}

// Per-seed metrics recomputed from a per-student CSV.
struct MethodMetrics {
  std::string method;
  double label_fraction = 1.0;
  std::size_t students = 0;
  std::vector<double> ap_acc, o_acc, apw_f1;
};

MethodMetrics metrics_from_csv(const std::string& method, const CsvTable& table) {
  const auto c_seed = table.column("seed");
  const auto c_student = table.column("student_id");
  const auto c_test = table.column("n_test");
  const auto c_correct = table.column("n_correct");
  const auto c_f1 = table.column("weighted_f1");
  const auto c_fraction = table.column("label_fraction");
  std::map<std::uint64_t, std::vector<const std::vector<std::string>*>> by_seed;
  for (const auto& row : table.rows) by_seed[std::stoull(row[c_seed])].push_back(&row);
  MethodMetrics m;
  m.method = method;
  for (const auto& [seed, rows] : by_seed) {
    std::vector<metrics::StudentOutcome> outcomes;
    double f1 = 0.0;
    std::set<std::string> students;
    for (const auto* row : rows) {
      outcomes.push_back({std::stoull((*row)[c_correct]), std::stoull((*row)[c_test])});
      f1 += std::stod((*row)[c_f1]);
      students.insert((*row)[c_student]);
      m.label_fraction = std::stod((*row)[c_fraction]);
    }
    m.students = students.size();
    m.ap_acc.push_back(metrics::metric_ap_acc(outcomes));
    m.o_acc.push_back(metrics::metric_o_acc(outcomes));
    m.apw_f1.push_back(f1 / static_cast<double>(rows.size()));
  }
  return m;
}

ordered_json summary_entry(const train::MetricSummary& s) {
  return ordered_json{{"mean", s.mean}, {"std", s.std}};
}

}  // namespace

std::string config_fingerprint(const config::RunConfig& config) {
  std::istringstream lines(config::to_text(config));
  std::string kept;
  for (std::string line; std::getline(lines, line);) {
    auto key = line.substr(0, line.find(' '));
    if (key == "out" || key == "events_path" || key == "scores_path" || key == "questions_path" ||
        key == "workers") {
      continue;
    }
    kept += line + '\n';
  }
  return train::config_hash(kept);
}

void run_synth(const config::RunConfig& config) {
  const fs::path dir = stage_dir(config, "synth");
  auto data = synth::generate(config.synth);
  synth::write_files(data, dir);
  auto d = synth::describe(config.synth);
  ordered_json summary;
  summary["latent_dim"] = d.latent_dim;
  summary["seed"] = d.seed;
  summary["num_students"] = d.num_students;
  summary["num_questions"] = d.num_questions;
  summary["noise_sigma"] = d.noise_sigma;
  summary["offset_draws"] = data.offset_draws;
  summary["mouse_start_ms"] = data.mouse_start_ms;
  summary["level_frequency"] = data.level_frequency;
  summary["expected_level_frequency"] = d.expected_level_frequency;
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_manifest(config, dir, "synth",
                 {{"files", {"events.jsonl", "scores.csv", "questions.csv", "summary.json"}},
                  {"events", data.events.size()},
                  {"scores", data.scores.size()},
                  {"questions", data.questions.size()}});
}

namespace {

// Paths inside the run directory are stored relative to it so that a run
// directory can be moved and two runs of one config produce the same files.
std::string source_entry(const config::RunConfig& config, const fs::path& path) {
  const fs::path abs = fs::absolute(path).lexically_normal();
  const fs::path root = fs::absolute(config.out).lexically_normal();
  const fs::path rel = abs.lexically_relative(root);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return abs.string();
}

fs::path source_path(const config::RunConfig& config, const std::string& entry) {
  const fs::path p(entry);
  return p.is_absolute() ? p : config.out / p;
}

}  // namespace

void run_ingest(const config::RunConfig& config) {
  const Inputs in = input_paths(config);
  auto events = ingest::load_events(in.events);
  auto scores = ingest::load_scores(in.scores);
  auto questions = ingest::load_questions(in.questions);
  const fs::path dir = stage_dir(config, "ingest");
  {
    auto out = open_output(dir / "scores.csv");
    out << "student_id,question_id,raw_score,timestamp_ms,trial_index,level\n";
    for (const auto& r : scores.items) {
      out << r.student_id << ',' << r.question_id << ',' << r.raw_score << ',' << r.timestamp_ms
          << ',' << r.trial_index << ',' << ingest::map_score_level(r.raw_score, config.thresholds).value()
          << '\n';
    }
  }
  std::size_t event_count = 0;
  for (const auto& t : events.items) event_count += t.events.size();
  write_manifest(config, dir, "ingest",
                 {{"sources",
                   {{"events", source_entry(config, in.events)},
                    {"scores", source_entry(config, in.scores)},
                    {"questions", source_entry(config, in.questions)}}},
                  {"trajectories", events.items.size()},
                  {"events", event_count},
                  {"discarded_events", events.discarded},
                  {"scores", scores.items.size()},
                  {"discarded_scores", scores.discarded},
                  {"questions", questions.items.size()},
                  {"discarded_questions", questions.discarded}});
}

graph::Dataset load_dataset(const config::RunConfig& config) {
  auto manifest = require_stage(stage_dir(config, "ingest"), "ingest");
  const auto& sources = manifest.at("sources");
  auto events = ingest::load_events(source_path(config, sources.at("events")));
  auto scores = ingest::load_scores(source_path(config, sources.at("scores")));
  auto questions = ingest::load_questions(source_path(config, sources.at("questions")));
  return graph::prepare_dataset(std::move(scores.items), events.items, questions.items,
                                dataset_options(config));
}

void run_featurize(const config::RunConfig& config) {
  const graph::Dataset data = load_dataset(config);
  const fs::path dir = stage_dir(config, "featurize");
  {
    auto names = features::InteractionFeatures::column_names();
    write_lines(dir / "interactions.schema.txt", names);
    auto out = open_output(dir / "interactions.csv");
    out << "student_id,question_id,timestamp_ms";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (const auto& item : data.interactions) {
      out << item.student_id << ',' << item.question_id << ',' << item.timestamp_ms << ',';
      write_row(out, item.features);
      out << '\n';
    }
  }
  {
    auto names = features::student_stats_columns(data.schema);
    write_lines(dir / "student_stats.schema.txt", names);
    auto out = open_output(dir / "student_stats.csv");
    out << "student_id";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (const auto& [id, stats] : data.student_stats.by_id) {
      out << id << ',';
      write_row(out, stats.to_vector());
      out << '\n';
    }
  }
  {
    auto names = features::question_stats_columns(data.schema);
    write_lines(dir / "question_stats.schema.txt", names);
    auto out = open_output(dir / "question_stats.csv");
    out << "question_id";
    for (const auto& n : names) out << ',' << n;
    out << '\n';
    for (const auto& [id, stats] : data.question_stats.by_id) {
      out << id << ',';
      write_row(out, stats.to_vector());
      out << '\n';
    }
  }
  write_manifest(config, dir, "featurize",
                 {{"interactions", data.interactions.size()},
                  {"skipped_trajectories", data.skipped_trajectories},
                  {"feature_cutoff_ms", data.feature_cutoff_ms},
                  {"bucket_count", data.schema.bucket_count()},
                  {"student_stats_dimension", features::student_stats_dimension(data.schema)},
                  {"question_stats_dimension", features::question_stats_dimension(data.schema)},
                  {"skipped_student_records", data.student_stats.skipped},
                  {"skipped_question_records", data.question_stats.skipped}});
}

std::vector<std::string> select_students(const config::RunConfig& config,
                                         const graph::Dataset& data) {
  auto eligible = graph::eligible_students(data, config.snapshot.min_records);
  if (!config.students.empty()) {
    std::set<std::string> wanted(config.students.begin(), config.students.end());
    std::set<std::string> have(eligible.begin(), eligible.end());
    for (const auto& id : wanted) {
      if (!have.contains(id)) {
        throw std::runtime_error("student " + id + " has fewer than " +
                                 std::to_string(config.snapshot.min_records) +
                                 " labeled records or does not exist");
      }
    }
    std::erase_if(eligible, [&](const std::string& id) { return !wanted.contains(id); });
  }
  if (config.max_students > 0 && eligible.size() > config.max_students) {
    eligible.resize(config.max_students);
  }
  if (eligible.empty()) throw std::runtime_error("no student has enough labeled records");
  return eligible;
}

void run_graph(const config::RunConfig& config) {
  require_stage(stage_dir(config, "featurize"), "featurize");
  const graph::Dataset data = load_dataset(config);
  const auto students = select_students(config, data);
  const fs::path dir = stage_dir(config, "graph");
  auto out = open_output(dir / "snapshots.csv");
  out << "student_id,t1_ms,t2_ms,students,interactions,questions,train,val,test\n";
  for (const auto& id : students) {
    auto snapshot = graph::build_personal_snapshot(data, id, config.snapshot);
    auto problems = graph::check_invariants(snapshot.graph);
    auto leaks = graph::check_no_leakage(snapshot);
    problems.insert(problems.end(), leaks.begin(), leaks.end());
    if (!problems.empty()) {
      throw std::runtime_error("snapshot of " + id + " is invalid: " + problems.front());
    }
    const auto& g = snapshot.graph;
    out << id << ',' << snapshot.spec.t1_ms << ',' << snapshot.spec.t2_ms << ',' << g.num_students()
        << ',' << g.num_interactions() << ',' << g.num_questions() << ','
        << g.questions_in(graph::Split::Train).size() << ','
        << g.questions_in(graph::Split::Validation).size() << ','
        << g.questions_in(graph::Split::Test).size() << '\n';
  }
  out.close();
  write_manifest(config, dir, "graph", {{"students", students}});
}

std::vector<graph::Snapshot> load_snapshots(const config::RunConfig& config,
                                            const graph::Dataset& data) {
  auto manifest = require_stage(stage_dir(config, "graph"), "graph");
  std::vector<graph::Snapshot> out;
  for (const auto& id : manifest.at("students")) {
    out.push_back(graph::build_personal_snapshot(data, id.get<std::string>(), config.snapshot));
  }
  return out;
}

void run_train(const config::RunConfig& config, train::Method method) {
  require_stage(stage_dir(config, "graph"), "graph");
  const graph::Dataset data = load_dataset(config);
  const auto snapshots = load_snapshots(config, data);
  auto report = train::repeat_and_aggregate(snapshots, method, config.experiment, config.workers);
  const fs::path dir = stage_dir(config, "train") / std::string(train::to_string(method));
  {
    auto out = open_output(dir / "per_student.csv");
    train::write_per_student_csv(report.runs, out);
  }
  write_text(dir / "summary.json",
             train::summary_json(std::span(&report, 1), config.experiment) + "\n");
  write_manifest(config, dir, "train",
                 {{"method", report.method},
                  {"runs", report.runs.size()},
                  {"students", snapshots.size()},
                  {"label_fraction", report.label_fraction}});
}

void run_evaluate(const config::RunConfig& config) {
  auto methods = method_dirs(config);
  if (methods.empty()) {
    throw MissingStage("train", "no trained method under " + stage_dir(config, "train").string());
  }
  const fs::path dir = stage_dir(config, "evaluate");
  auto out = open_output(dir / "metrics.csv");
  out << "method,label_fraction,runs,students,ap_acc_mean,ap_acc_std,o_acc_mean,o_acc_std,"
         "apw_f1_mean,apw_f1_std\n";
  for (const auto& method : methods) {
    const fs::path train_dir = stage_dir(config, "train") / method;
    require_stage(train_dir, "train");
    auto m = metrics_from_csv(method, read_csv(train_dir / "per_student.csv"));
    auto ap = train::mean_and_std(m.ap_acc);
    auto o = train::mean_and_std(m.o_acc);
    auto f1 = train::mean_and_std(m.apw_f1);
    out << method << ',' << train::format_number(m.label_fraction) << ',' << m.ap_acc.size() << ','
        << m.students << ',';
    write_row(out, std::vector<double>{ap.mean, ap.std, o.mean, o.std, f1.mean, f1.std});
    out << '\n';
  }
  out.close();
  write_manifest(config, dir, "evaluate", {{"methods", methods}});
}

void run_sweep(const config::RunConfig& config, train::Method method) {
  require_stage(stage_dir(config, "graph"), "graph");
  const graph::Dataset data = load_dataset(config);
  const auto snapshots = load_snapshots(config, data);
  auto reports = train::label_size_sweep(snapshots, method, config.experiment,
                                         config.sweep_fractions, config.workers);
  const fs::path dir = stage_dir(config, "sweep");
  const std::string name(train::to_string(method));
  {
    auto out = open_output(dir / (name + ".csv"));
    out << "label_fraction,runs,ap_acc_mean,ap_acc_std,o_acc_mean,o_acc_std,apw_f1_mean,apw_f1_std\n";
    for (const auto& r : reports) {
      out << train::format_number(r.label_fraction) << ',' << r.runs.size() << ',';
      write_row(out, std::vector<double>{r.ap_acc.mean, r.ap_acc.std, r.o_acc.mean, r.o_acc.std,
                                         r.apw_f1.mean, r.apw_f1.std});
      out << '\n';
    }
  }
  {
    auto out = open_output(dir / (name + "_per_student.csv"));
    std::vector<train::RunReport> runs;
    for (const auto& r : reports) runs.insert(runs.end(), r.runs.begin(), r.runs.end());
    train::write_per_student_csv(runs, out);
  }
  write_manifest(config, dir, "sweep",
                 {{"method", name}, {"fractions", config.sweep_fractions}});
}

void run_distance(const config::RunConfig& config, train::Method method) {
  require_stage(stage_dir(config, "graph"), "graph");
  const std::string name(train::to_string(method));
  const fs::path train_dir = stage_dir(config, "train") / name;
  require_stage(train_dir, "train");
  auto table = read_csv(train_dir / "per_student.csv");
  const auto c_student = table.column("student_id");
  const auto c_test = table.column("test_acc");
  const auto c_val = table.column("val_acc");
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> accuracy;
  for (const auto& row : table.rows) {
    accuracy[row[c_student]].first.push_back(std::stod(row[c_test]));
    accuracy[row[c_student]].second.push_back(std::stod(row[c_val]));
  }
  const graph::Dataset data = load_dataset(config);
  const auto snapshots = load_snapshots(config, data);
  std::vector<graph::DistanceRow> rows;
  for (const auto& s : snapshots) {
    auto it = accuracy.find(s.spec.student_id);
    if (it == accuracy.end()) {
      throw MissingStage("train", "no " + name + " result for student " + s.spec.student_id);
    }
    rows.push_back(graph::distance_row(s, train::mean_and_std(it->second.first).mean,
                                       train::mean_and_std(it->second.second).mean));
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.student_id < b.student_id; });
  const fs::path dir = stage_dir(config, "distance");
  {
    auto out = open_output(dir / "distance_report.csv");
    graph::write_distance_report(rows, out);
  }
  write_manifest(config, dir, "distance", {{"method", name}, {"students", rows.size()}});
}

void run_report(const config::RunConfig& config) {
  require_stage(stage_dir(config, "evaluate"), "evaluate");
  const fs::path dir = stage_dir(config, "report");
  ordered_json summary;
  summary["schema"] = "siq.report/1";
  summary["config_hash"] = config_fingerprint(config);
  ordered_json methods = ordered_json::array();
  std::vector<std::vector<std::string>> merged_rows;
  std::vector<std::string> header;
  for (const auto& method : method_dirs(config)) {
    const fs::path train_dir = stage_dir(config, "train") / method;
    auto table = read_csv(train_dir / "per_student.csv");
    auto m = metrics_from_csv(method, table);
    methods.push_back({{"method", method},
                       {"label_fraction", m.label_fraction},
                       {"runs", m.ap_acc.size()},
                       {"students", m.students},
                       {"ap_acc", summary_entry(train::mean_and_std(m.ap_acc))},
                       {"o_acc", summary_entry(train::mean_and_std(m.o_acc))},
                       {"apw_f1", summary_entry(train::mean_and_std(m.apw_f1))}});
    header = table.header;
    merged_rows.insert(merged_rows.end(), table.rows.begin(), table.rows.end());
  }
  summary["methods"] = methods;

  if (fs::exists(stage_dir(config, "sweep") / "manifest.json")) {
    auto manifest = require_stage(stage_dir(config, "sweep"), "sweep");
    const std::string name = manifest.at("method");
    auto table = read_csv(stage_dir(config, "sweep") / (name + ".csv"));
    ordered_json rows = ordered_json::array();
    for (const auto& row : table.rows) {
      rows.push_back({{"label_fraction", std::stod(row[table.column("label_fraction")])},
                      {"ap_acc", std::stod(row[table.column("ap_acc_mean")])},
                      {"o_acc", std::stod(row[table.column("o_acc_mean")])},
                      {"apw_f1", std::stod(row[table.column("apw_f1_mean")])}});
    }
    summary["label_sweep"] = {{"method", name}, {"fractions", rows}};
  }

  if (fs::exists(stage_dir(config, "distance") / "manifest.json")) {
    auto manifest = require_stage(stage_dir(config, "distance"), "distance");
    auto table = read_csv(stage_dir(config, "distance") / "distance_report.csv");
    ordered_json means;
    for (const char* column : {"d_train_val", "d_train_test", "d_test_val"}) {
      std::vector<double> values;
      for (const auto& row : table.rows) {
        const auto& cell = row[table.column(column)];
        if (cell != "NA") values.push_back(std::stod(cell));
      }
      means[column] = values.empty() ? ordered_json(nullptr)
                                     : ordered_json(train::mean_and_std(values).mean);
    }
    summary["distance"] = {{"method", manifest.at("method")}, {"students", table.rows.size()},
                           {"mean", means}};
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  {
    auto out = open_output(dir / "per_student.csv");
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : merged_rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << '\n';
    }
  }
  write_manifest(config, dir, "report", {{"files", {"summary.json", "per_student.csv"}}});
}

void run_all(const config::RunConfig& config) {
  if (config.events_path.empty() || config.scores_path.empty() || config.questions_path.empty()) {
    run_synth(config);
  }
  run_ingest(config);
  run_featurize(config);
  run_graph(config);
  for (auto method : config.methods) run_train(config, method);
  run_evaluate(config);
  if (!config.methods.empty()) {
    run_sweep(config, config.methods.front());
    if (train::variant_of(config.methods.front())) run_distance(config, config.methods.front());
  }
  run_report(config);
}

}  // namespace siq::pipeline
