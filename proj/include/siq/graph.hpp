#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siq/features.hpp"
#include "siq/ingest.hpp"
#include "siq/nn.hpp"

namespace siq::graph {

/// Mouse features of one first-trial session, keyed by its score record.
struct FeaturizedInteraction {
  std::string student_id;
  std::string question_id;
  std::int64_t timestamp_ms = 0;  // submission time of the first trial
  std::int64_t last_event_ms = 0;
  std::vector<double> features;
};

struct FeaturizeResult {
  std::vector<FeaturizedInteraction> items;  // sorted by (timestamp, student, question)
  std::size_t skipped = 0;                   // trajectories without a first-trial record
};

FeaturizeResult featurize_interactions(std::span<const ingest::ScoreRecord> first_trials,
                                       std::span<const ingest::Trajectory> trajectories,
                                       const features::MouseFeatureConfig& config = {});

struct Interaction {
  std::size_t student = 0;
  std::size_t question = 0;
  std::int64_t timestamp_ms = 0;
  std::vector<double> features;

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

/// Bipartite student/question network whose edges carry mouse features.
/// Node id lists are sorted.
struct ProblemSolvingNetwork {
  std::vector<std::string> students;
  std::vector<std::string> questions;
  std::vector<Interaction> interactions;

  friend bool operator==(const ProblemSolvingNetwork&, const ProblemSolvingNetwork&) = default;
};

/// Nodes to include even without interactions.
struct NodeUniverse {
  std::set<std::string> students;
  std::set<std::string> questions;
};

/// Keeps interactions whose submission and last event are both before
/// `until_ms`.
ProblemSolvingNetwork build_problem_solving_network(
    std::span<const FeaturizedInteraction> interactions, std::int64_t until_ms,
    const NodeUniverse& extra = {});

struct NetworkBuild {
  ProblemSolvingNetwork network;
  std::size_t skipped = 0;
};

NetworkBuild build_problem_solving_network(std::span<const ingest::ScoreRecord> first_trials,
                                           std::span<const ingest::Trajectory> trajectories,
                                           std::int64_t until_ms,
                                           const features::MouseFeatureConfig& config = {});

enum class NodeType { Student, Interaction, Question };

enum class Relation : std::size_t {
  InteractionToQuestion = 0,
  QuestionToInteraction = 1,
  InteractionToStudent = 2,
  StudentToInteraction = 3,
};

inline constexpr std::array<Relation, 4> kRelations{
    Relation::InteractionToQuestion, Relation::QuestionToInteraction,
    Relation::InteractionToStudent, Relation::StudentToInteraction};

std::string_view to_string(Relation relation);
NodeType source_type(Relation relation);
NodeType target_type(Relation relation);

struct EdgeList {
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::size_t size() const { return src.size(); }
};

enum class Split { Train, Validation, Test };
std::string_view to_string(Split split);

struct LabeledQuestion {
  std::size_t question = 0;
  int level = 0;
  std::int64_t timestamp_ms = 0;
  Split split = Split::Train;
};

/// Student-Interaction-Question graph. Node indices are per type; edges of
/// relation r go from nodes of source_type(r) to nodes of target_type(r).
struct SIQGraph {
  std::vector<std::string> student_ids;
  std::vector<std::string> question_ids;
  std::vector<std::int64_t> interaction_time;
  nn::Tensor student_features;
  nn::Tensor interaction_features;
  nn::Tensor question_features;
  std::array<EdgeList, 4> relations;
  std::vector<LabeledQuestion> labels;

  std::size_t num_students() const { return student_ids.size(); }
  std::size_t num_questions() const { return question_ids.size(); }
  std::size_t num_interactions() const { return interaction_time.size(); }
  const EdgeList& edges(Relation r) const { return relations[static_cast<std::size_t>(r)]; }

  std::vector<std::size_t> questions_in(Split split) const;
};

/// Reifies every interaction edge as an I node connected by the four typed
/// relations. Feature rows align with network.students / network.questions.
SIQGraph edge2node(const ProblemSolvingNetwork& network, nn::Tensor student_features,
                   nn::Tensor question_features);

/// Collapses I nodes back into feature-bearing edges.
ProblemSolvingNetwork node2edge(const SIQGraph& graph);

/// Human-readable violations of the structural invariants; empty when valid.
std::vector<std::string> check_invariants(const SIQGraph& graph);

/// Everything derived once per data set that snapshots draw from.
struct Dataset {
  std::vector<ingest::ScoreRecord> records;
  std::vector<ingest::ScoreRecord> first;
  features::QuestionIndex questions;
  features::BucketSchema schema;
  ingest::ScoreThresholds thresholds;
  std::vector<FeaturizedInteraction> interactions;
  std::size_t skipped_trajectories = 0;
  std::int64_t feature_cutoff_ms = 0;
  features::StatsTable<features::StudentStats> student_stats;
  features::StatsTable<features::QuestionStats> question_stats;
};

struct DatasetOptions {
  features::MouseFeatureConfig mouse;
  ingest::ScoreThresholds thresholds;
  // Defaults to the first mouse event in the data.
  std::optional<std::int64_t> feature_cutoff_ms;
};

Dataset prepare_dataset(std::vector<ingest::ScoreRecord> records,
                        std::span<const ingest::Trajectory> trajectories,
                        std::span<const ingest::QuestionMeta> meta,
                        const DatasetOptions& options = {});

struct SplitFractions {
  double train = 0.7;
  double validation = 0.15;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

/// Index cuts floor(train * n) and floor((train + validation) * n).
SplitSizes split_sizes(std::size_t n, const SplitFractions& fractions = {});

struct SnapshotSpec {
  std::string student_id;
  std::int64_t t1_ms = 0;
  std::int64_t t2_ms = 0;
  std::int64_t feature_cutoff_ms = 0;
};

struct SnapshotOptions {
  SplitFractions fractions;
  std::size_t min_records = 20;
};

struct Snapshot {
  SnapshotSpec spec;
  ProblemSolvingNetwork network;
  SIQGraph graph;
};

/// The student's labeled first trials: those at or after the feature cutoff
/// on known questions, in time order (ties keep record order).
std::vector<ingest::ScoreRecord> labeled_records(const Dataset& data,
                                                 const std::string& student_id);

/// Students with at least `min_records` labeled records, most records first
/// (ties by id).
std::vector<std::string> eligible_students(const Dataset& data, std::size_t min_records);

Snapshot build_personal_snapshot(const Dataset& data, const std::string& student_id,
                                 const SnapshotOptions& options = {});

/// Violations of the no-leakage rule: the target student has no interaction
/// node at or after t1, and no validation or test question of the target
/// is reached through one of the target's interaction nodes.
std::vector<std::string> check_no_leakage(const Snapshot& snapshot);

struct DistanceResult {
  std::optional<double> mean;  // empty when no pair is connected
  std::size_t pairs = 0;
  std::size_t unreachable = 0;
};

/// Mean unweighted shortest-path length between question sets on the
/// bipartite network. Unreachable pairs are excluded and counted.
DistanceResult avg_shortest_distance(const ProblemSolvingNetwork& network,
                                     std::span<const std::size_t> from,
                                     std::span<const std::size_t> to);

struct DistanceRow {
  std::string student_id;
  DistanceResult train_val;
  DistanceResult train_test;
  DistanceResult test_val;
  double test_accuracy = 0.0;
  double val_accuracy = 0.0;
};

DistanceRow distance_row(const Snapshot& snapshot, double test_accuracy, double val_accuracy);

/// CSV with header student_id,d_train_val,d_train_test,d_test_val,test_acc,val_acc;
/// undefined distances are written as NA.
void write_distance_report(std::span<const DistanceRow> rows, std::ostream& out);

/// {"nodes": [{"id", "type", "features"}], "edges": [{"src", "dst", "relation"}]}.
std::string graph_to_json(const SIQGraph& graph);

}  // namespace siq::graph
