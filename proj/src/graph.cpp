#include "siq/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace siq::graph {

namespace {

std::size_t index_of(const std::vector<std::string>& sorted_ids, const std::string& id) {
  auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), id);
  if (it == sorted_ids.end() || *it != id) throw std::out_of_range("unknown node id " + id);
  return static_cast<std::size_t>(it - sorted_ids.begin());
}

nn::Tensor stack_rows(const std::vector<std::vector<double>>& rows, std::size_t width) {
  nn::Tensor out({rows.size(), width});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != width) {
      throw std::invalid_argument("feature row of width " + std::to_string(rows[r].size()) +
                                  ", expected " + std::to_string(width));
    }
    std::copy(rows[r].begin(), rows[r].end(), out.data() + r * width);
  }
  return out;
}

std::string format_number(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  return std::string(buffer, end);
}

}  // namespace

FeaturizeResult featurize_interactions(std::span<const ingest::ScoreRecord> first_trials,
                                       std::span<const ingest::Trajectory> trajectories,
                                       const features::MouseFeatureConfig& config) {
  std::map<std::pair<std::string, std::string>, const ingest::ScoreRecord*> by_pair;
  for (const auto& record : first_trials) {
    if (record.trial_index == 1) by_pair[{record.student_id, record.question_id}] = &record;
  }
  FeaturizeResult result;
  for (const auto& trajectory : trajectories) {
    auto it = by_pair.find({trajectory.student_id, trajectory.question_id});
    if (it == by_pair.end() || trajectory.events.empty()) {
      ++result.skipped;
      continue;
    }
    result.items.push_back(FeaturizedInteraction{
        trajectory.student_id, trajectory.question_id, it->second->timestamp_ms,
        trajectory.events.back().t_ms,
        features::featurize_trajectory(trajectory, config).to_vector()});
  }
  std::stable_sort(result.items.begin(), result.items.end(),
                   [](const FeaturizedInteraction& a, const FeaturizedInteraction& b) {
                     return std::tie(a.timestamp_ms, a.student_id, a.question_id) <
                            std::tie(b.timestamp_ms, b.student_id, b.question_id);
                   });
  return result;
}

ProblemSolvingNetwork build_problem_solving_network(
    std::span<const FeaturizedInteraction> interactions, std::int64_t until_ms,
    const NodeUniverse& extra) {
  std::set<std::string> students = extra.students;
  std::set<std::string> questions = extra.questions;
  std::vector<const FeaturizedInteraction*> kept;
  for (const auto& item : interactions) {
    if (item.timestamp_ms >= until_ms || item.last_event_ms >= until_ms) continue;
    kept.push_back(&item);
    students.insert(item.student_id);
    questions.insert(item.question_id);
  }
  ProblemSolvingNetwork network;
  network.students.assign(students.begin(), students.end());
  network.questions.assign(questions.begin(), questions.end());
  network.interactions.reserve(kept.size());
  for (const auto* item : kept) {
    network.interactions.push_back(Interaction{index_of(network.students, item->student_id),
                                               index_of(network.questions, item->question_id),
                                               item->timestamp_ms, item->features});
  }
  return network;
}

NetworkBuild build_problem_solving_network(std::span<const ingest::ScoreRecord> first_trials,
                                           std::span<const ingest::Trajectory> trajectories,
                                           std::int64_t until_ms,
                                           const features::MouseFeatureConfig& config) {
  auto featurized = featurize_interactions(first_trials, trajectories, config);
  return {build_problem_solving_network(featurized.items, until_ms), featurized.skipped};
}

std::string_view to_string(Relation relation) {
  switch (relation) {
    case Relation::InteractionToQuestion: return "I->Q";
    case Relation::QuestionToInteraction: return "Q->I";
    case Relation::InteractionToStudent: return "I->S";
    case Relation::StudentToInteraction: return "S->I";
  }
  return "?";
}

NodeType source_type(Relation relation) {
  switch (relation) {
    case Relation::InteractionToQuestion:
    case Relation::InteractionToStudent: return NodeType::Interaction;
    case Relation::QuestionToInteraction: return NodeType::Question;
    case Relation::StudentToInteraction: return NodeType::Student;
  }
  return NodeType::Interaction;
}

NodeType target_type(Relation relation) {
  switch (relation) {
    case Relation::InteractionToQuestion: return NodeType::Question;
    case Relation::InteractionToStudent: return NodeType::Student;
    case Relation::QuestionToInteraction:
    case Relation::StudentToInteraction: return NodeType::Interaction;
  }
  return NodeType::Interaction;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::vector<std::size_t> SIQGraph::questions_in(Split split) const {
  std::vector<std::size_t> out;
  for (const auto& label : labels) {
    if (label.split == split) out.push_back(label.question);
  }
  return out;
}

SIQGraph edge2node(const ProblemSolvingNetwork& network, nn::Tensor student_features,
                   nn::Tensor question_features) {
  if (student_features.rows() != network.students.size() ||
      question_features.rows() != network.questions.size()) {
    throw std::invalid_argument("node feature rows do not match the network's node count");
  }
  SIQGraph g;
  g.student_ids = network.students;
  g.question_ids = network.questions;
  g.student_features = std::move(student_features);
  g.question_features = std::move(question_features);

  const std::size_t n = network.interactions.size();
  const std::size_t width = n == 0 ? features::InteractionFeatures::kDimension
                                   : network.interactions.front().features.size();
  g.interaction_features = nn::Tensor({n, width});
  g.interaction_time.reserve(n);
  for (auto& edges : g.relations) {
    edges.src.reserve(n);
    edges.dst.reserve(n);
  }
  auto link = [&](Relation r, std::size_t src, std::size_t dst) {
    auto& edges = g.relations[static_cast<std::size_t>(r)];
    edges.src.push_back(src);
    edges.dst.push_back(dst);
  };
  for (std::size_t k = 0; k < n; ++k) {
    const Interaction& e = network.interactions[k];
    if (e.features.size() != width) {
      throw std::invalid_argument("interaction features of inconsistent width");
    }
    std::copy(e.features.begin(), e.features.end(), g.interaction_features.data() + k * width);
    g.interaction_time.push_back(e.timestamp_ms);
    link(Relation::InteractionToQuestion, k, e.question);
    link(Relation::QuestionToInteraction, e.question, k);
    link(Relation::InteractionToStudent, k, e.student);
    link(Relation::StudentToInteraction, e.student, k);
  }
  return g;
}

ProblemSolvingNetwork node2edge(const SIQGraph& graph) {
  const std::size_t n = graph.num_interactions();
  constexpr std::size_t kUnset = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> question(n, kUnset);
  std::vector<std::size_t> student(n, kUnset);
  const auto& iq = graph.edges(Relation::InteractionToQuestion);
  const auto& is = graph.edges(Relation::InteractionToStudent);
  for (std::size_t e = 0; e < iq.size(); ++e) question.at(iq.src[e]) = iq.dst[e];
  for (std::size_t e = 0; e < is.size(); ++e) student.at(is.src[e]) = is.dst[e];

  ProblemSolvingNetwork network;
  network.students = graph.student_ids;
  network.questions = graph.question_ids;
  for (std::size_t k = 0; k < n; ++k) {
    if (question[k] == kUnset || student[k] == kUnset) {
      throw std::runtime_error("interaction node " + std::to_string(k) + " is not fully linked");
    }
    auto row = graph.interaction_features.row(k);
    network.interactions.push_back(
        Interaction{student[k], question[k], graph.interaction_time[k], {row.begin(), row.end()}});
  }
  return network;
}

std::vector<std::string> check_invariants(const SIQGraph& g) {
  std::vector<std::string> problems;
  const std::size_t n = g.num_interactions();
  auto node_count = [&](NodeType t) {
    switch (t) {
      case NodeType::Student: return g.num_students();
      case NodeType::Interaction: return n;
      case NodeType::Question: return g.num_questions();
    }
    return std::size_t{0};
  };

  if (g.interaction_features.rows() != n) problems.push_back("interaction feature rows != |I|");
  if (g.student_features.rows() != g.num_students()) problems.push_back("student feature rows != |S|");
  if (g.question_features.rows() != g.num_questions()) problems.push_back("question feature rows != |Q|");

  for (Relation r : kRelations) {
    const auto& edges = g.edges(r);
    std::string name(to_string(r));
    if (edges.src.size() != edges.dst.size()) problems.push_back(name + ": ragged edge list");
    if (edges.size() != n) {
      problems.push_back(name + " has " + std::to_string(edges.size()) + " edges, |I| = " +
                         std::to_string(n));
    }
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edges.src[e] >= node_count(source_type(r)) || edges.dst[e] >= node_count(target_type(r))) {
        problems.push_back(name + ": edge " + std::to_string(e) + " out of range");
        break;
      }
    }
  }
  if (!problems.empty()) return problems;

  // Each I node: one outgoing edge to Q and to S, mirrored by the reverse relations.
  std::vector<std::set<std::size_t>> out_q(n), out_s(n), in_q(n), in_s(n);
  const auto& iq = g.edges(Relation::InteractionToQuestion);
  const auto& qi = g.edges(Relation::QuestionToInteraction);
  const auto& is = g.edges(Relation::InteractionToStudent);
  const auto& si = g.edges(Relation::StudentToInteraction);
  std::vector<std::size_t> iq_count(n, 0), is_count(n, 0);
  for (std::size_t e = 0; e < n; ++e) {
    ++iq_count[iq.src[e]];
    out_q[iq.src[e]].insert(iq.dst[e]);
    ++is_count[is.src[e]];
    out_s[is.src[e]].insert(is.dst[e]);
    in_q[qi.dst[e]].insert(qi.src[e]);
    in_s[si.dst[e]].insert(si.src[e]);
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (iq_count[k] != 1 || is_count[k] != 1) {
      problems.push_back("I node " + std::to_string(k) + " lacks exactly one I->Q and one I->S edge");
    } else if (out_q[k] != in_q[k] || out_s[k] != in_s[k]) {
      problems.push_back("I node " + std::to_string(k) + " has unmatched reverse edges");
    }
  }

  std::set<std::size_t> labeled;
  for (const auto& label : g.labels) {
    if (label.question >= g.num_questions()) {
      problems.push_back("label on unknown question node");
    } else if (!labeled.insert(label.question).second) {
      problems.push_back("question " + g.question_ids[label.question] + " labeled twice");
    }
    if (label.level < 0 || label.level > 3) problems.push_back("label level outside 0..3");
  }
  return problems;
}

Dataset prepare_dataset(std::vector<ingest::ScoreRecord> records,
                        std::span<const ingest::Trajectory> trajectories,
                        std::span<const ingest::QuestionMeta> meta,
                        const DatasetOptions& options) {
  options.thresholds.validate();
  Dataset data;
  data.records = std::move(records);
  data.first = ingest::first_trials(data.records);
  data.questions = features::index_questions(meta);
  data.schema = features::BucketSchema::observed(meta);
  data.thresholds = options.thresholds;

  auto featurized = featurize_interactions(data.first, trajectories, options.mouse);
  data.interactions = std::move(featurized.items);
  data.skipped_trajectories = featurized.skipped;

  if (options.feature_cutoff_ms) {
    data.feature_cutoff_ms = *options.feature_cutoff_ms;
  } else {
    data.feature_cutoff_ms = std::numeric_limits<std::int64_t>::max();
    for (const auto& t : trajectories) {
      if (!t.events.empty()) {
        data.feature_cutoff_ms = std::min(data.feature_cutoff_ms, t.events.front().t_ms);
      }
    }
  }
  data.student_stats = features::compute_student_stats(data.records, data.questions, data.schema,
                                                       data.feature_cutoff_ms, data.thresholds);
  data.question_stats = features::compute_question_stats(data.records, data.questions, data.schema,
                                                         data.feature_cutoff_ms, data.thresholds);
  return data;
}

SplitSizes split_sizes(std::size_t n, const SplitFractions& fractions) {
  if (fractions.train < 0.0 || fractions.validation < 0.0 ||
      fractions.train + fractions.validation > 1.0 + 1e-12) {
    throw std::invalid_argument("split fractions must be non-negative and sum to at most 1");
  }
  // The epsilon absorbs binary rounding of products such as 0.7 * 10.
  auto cut = [n](double fraction) {
    auto c = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    return std::min(c, n);
  };
  std::size_t train_end = cut(fractions.train);
  std::size_t val_end = std::max(train_end, cut(fractions.train + fractions.validation));
  return {train_end, val_end - train_end, n - val_end};
}

std::vector<ingest::ScoreRecord> labeled_records(const Dataset& data,
                                                 const std::string& student_id) {
  std::vector<ingest::ScoreRecord> out;
  for (const auto& record : data.first) {
    if (record.student_id == student_id && record.timestamp_ms >= data.feature_cutoff_ms &&
        data.questions.contains(record.question_id)) {
      out.push_back(record);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.timestamp_ms < b.timestamp_ms;
  });
  return out;
}

std::vector<std::string> eligible_students(const Dataset& data, std::size_t min_records) {
  std::map<std::string, std::size_t> counts;
  for (const auto& record : data.first) {
    if (record.timestamp_ms >= data.feature_cutoff_ms &&
        data.questions.contains(record.question_id)) {
      ++counts[record.student_id];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> eligible;
  for (const auto& [id, count] : counts) {
    if (count >= min_records) eligible.emplace_back(id, count);
  }
  std::stable_sort(eligible.begin(), eligible.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (auto& [id, count] : eligible) out.push_back(id);
  return out;
}

Snapshot build_personal_snapshot(const Dataset& data, const std::string& student_id,
                                 const SnapshotOptions& options) {
  auto records = labeled_records(data, student_id);
  const std::size_t n = records.size();
  if (n < options.min_records) {
    throw std::runtime_error("student " + student_id + " has " + std::to_string(n) +
                             " labeled records; at least " +
                             std::to_string(options.min_records) + " required");
  }
  const SplitSizes sizes = split_sizes(n, options.fractions);
  const std::size_t val_start = sizes.train;
  const std::size_t test_start = sizes.train + sizes.validation;
  auto time_at = [&](std::size_t index) {
    if (index < n) return records[index].timestamp_ms;
    return n == 0 ? data.feature_cutoff_ms : records.back().timestamp_ms + 1;
  };

  Snapshot snap;
  snap.spec = SnapshotSpec{student_id, time_at(val_start), time_at(test_start),
                           data.feature_cutoff_ms};
  if (snap.spec.feature_cutoff_ms > snap.spec.t1_ms || snap.spec.t1_ms > snap.spec.t2_ms) {
    throw std::logic_error("snapshot split times out of order for student " + student_id);
  }

  NodeUniverse universe;
  universe.students.insert(student_id);
  for (const auto& [id, stats] : data.student_stats.by_id) universe.students.insert(id);
  for (const auto& [id, stats] : data.question_stats.by_id) {
    if (stats.total_trials > 0.0) universe.questions.insert(id);
  }
  for (const auto& record : records) universe.questions.insert(record.question_id);

  snap.network = build_problem_solving_network(data.interactions, snap.spec.t1_ms, universe);

  std::vector<std::vector<double>> student_rows;
  student_rows.reserve(snap.network.students.size());
  for (const auto& id : snap.network.students) {
    student_rows.push_back(
        features::student_stats_or_zero(data.student_stats, id, data.schema).to_vector());
  }
  std::vector<std::vector<double>> question_rows;
  question_rows.reserve(snap.network.questions.size());
  for (const auto& id : snap.network.questions) {
    question_rows.push_back(data.question_stats.by_id.at(id).to_vector());
  }
  snap.graph = edge2node(snap.network,
                         stack_rows(student_rows, features::student_stats_dimension(data.schema)),
                         stack_rows(question_rows, features::question_stats_dimension(data.schema)));

  for (std::size_t i = 0; i < n; ++i) {
    Split split = i < val_start ? Split::Train : (i < test_start ? Split::Validation : Split::Test);
    snap.graph.labels.push_back(
        LabeledQuestion{index_of(snap.network.questions, records[i].question_id),
                        ingest::map_score_level(records[i].raw_score, data.thresholds).value(),
                        records[i].timestamp_ms, split});
  }
  return snap;
}

std::vector<std::string> check_no_leakage(const Snapshot& snapshot) {
  std::vector<std::string> problems;
  const SIQGraph& g = snapshot.graph;
  auto target = std::lower_bound(g.student_ids.begin(), g.student_ids.end(),
                                 snapshot.spec.student_id);
  if (target == g.student_ids.end() || *target != snapshot.spec.student_id) {
    problems.push_back("target student missing from the graph");
    return problems;
  }
  const auto target_index = static_cast<std::size_t>(target - g.student_ids.begin());
  std::set<std::size_t> held_out;
  for (const auto& label : g.labels) {
    if (label.split != Split::Train) held_out.insert(label.question);
  }
  const auto& is = g.edges(Relation::InteractionToStudent);
  const auto& iq = g.edges(Relation::InteractionToQuestion);
  std::vector<std::size_t> question_of(g.num_interactions());
  for (std::size_t e = 0; e < iq.size(); ++e) question_of[iq.src[e]] = iq.dst[e];
  for (std::size_t e = 0; e < is.size(); ++e) {
    if (is.dst[e] != target_index) continue;
    std::size_t k = is.src[e];
    if (g.interaction_time[k] >= snapshot.spec.t1_ms) {
      problems.push_back("target interaction " + std::to_string(k) + " at or after t1");
    }
    if (held_out.contains(question_of[k])) {
      problems.push_back("target interaction with held-out question " +
                         g.question_ids[question_of[k]]);
    }
  }
  return problems;
}

DistanceResult avg_shortest_distance(const ProblemSolvingNetwork& network,
                                     std::span<const std::size_t> from,
                                     std::span<const std::size_t> to) {
  if (from.empty() || to.empty()) {
    throw std::invalid_argument("average shortest distance needs non-empty question sets");
  }
  const std::size_t offset = network.students.size();
  const std::size_t nodes = offset + network.questions.size();
  std::vector<std::vector<std::size_t>> adjacency(nodes);
  for (const auto& e : network.interactions) {
    adjacency[e.student].push_back(offset + e.question);
    adjacency[offset + e.question].push_back(e.student);
  }
  for (std::size_t q : to) {
    if (q >= network.questions.size()) throw std::out_of_range("question index out of range");
  }

  DistanceResult result;
  double total = 0.0;
  std::size_t reached = 0;
  constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(nodes);
  for (std::size_t x : from) {
    if (x >= network.questions.size()) throw std::out_of_range("question index out of range");
    std::fill(dist.begin(), dist.end(), kUnreached);
    std::deque<std::size_t> queue{offset + x};
    dist[offset + x] = 0;
    while (!queue.empty()) {
      std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t v : adjacency[u]) {
        if (dist[v] == kUnreached) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
    for (std::size_t y : to) {
      ++result.pairs;
      std::size_t d = dist[offset + y];
      if (d == kUnreached) {
        ++result.unreachable;
      } else {
        total += static_cast<double>(d);
        ++reached;
      }
    }
  }
  if (reached > 0) result.mean = total / static_cast<double>(reached);
  return result;
}

DistanceRow distance_row(const Snapshot& snapshot, double test_accuracy, double val_accuracy) {
  auto train = snapshot.graph.questions_in(Split::Train);
  auto val = snapshot.graph.questions_in(Split::Validation);
  auto test = snapshot.graph.questions_in(Split::Test);
  auto distance = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (a.empty() || b.empty()) return DistanceResult{};
    return avg_shortest_distance(snapshot.network, a, b);
  };
  return DistanceRow{snapshot.spec.student_id, distance(train, val), distance(train, test),
                     distance(test, val),      test_accuracy,         val_accuracy};
}

void write_distance_report(std::span<const DistanceRow> rows, std::ostream& out) {
  out << "student_id,d_train_val,d_train_test,d_test_val,test_acc,val_acc\n";
  auto cell = [](const DistanceResult& d) {
    return d.mean ? format_number(*d.mean) : std::string("NA");
  };
  for (const auto& row : rows) {
    out << row.student_id << ',' << cell(row.train_val) << ',' << cell(row.train_test) << ','
        << cell(row.test_val) << ',' << format_number(row.test_accuracy) << ','
        << format_number(row.val_accuracy) << '\n';
  }
}

std::string graph_to_json(const SIQGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  auto add_nodes = [&](const char* type, std::size_t count, const nn::Tensor& features,
                       auto id_of) {
    for (std::size_t i = 0; i < count; ++i) {
      auto row = features.row(i);
      nodes.push_back({{"id", id_of(i)},
                       {"type", type},
                       {"features", std::vector<double>(row.begin(), row.end())}});
    }
  };
  add_nodes("S", graph.num_students(), graph.student_features,
            [&](std::size_t i) { return "S:" + graph.student_ids[i]; });
  add_nodes("I", graph.num_interactions(), graph.interaction_features,
            [](std::size_t i) { return "I:" + std::to_string(i); });
  add_nodes("Q", graph.num_questions(), graph.question_features,
            [&](std::size_t i) { return "Q:" + graph.question_ids[i]; });

  auto node_id = [&](NodeType type, std::size_t i) -> std::string {
    switch (type) {
      case NodeType::Student: return "S:" + graph.student_ids[i];
      case NodeType::Interaction: return "I:" + std::to_string(i);
      case NodeType::Question: return "Q:" + graph.question_ids[i];
    }
    return "";
  };
  nlohmann::json edges = nlohmann::json::array();
  for (Relation r : kRelations) {
    const auto& list = graph.edges(r);
    for (std::size_t e = 0; e < list.size(); ++e) {
      edges.push_back({{"src", node_id(source_type(r), list.src[e])},
                       {"dst", node_id(target_type(r), list.dst[e])},
                       {"relation", std::string(to_string(r))}});
    }
  }
  nlohmann::json labels = nlohmann::json::array();
  for (const auto& label : graph.labels) {
    labels.push_back({{"question", graph.question_ids[label.question]},
                      {"level", label.level},
                      {"split", std::string(to_string(label.split))}});
  }
  return nlohmann::json{{"schema", "siq.graph/1"}, {"nodes", nodes}, {"edges", edges},
                        {"labels", labels}}
      .dump();
}

}  // namespace siq::graph
