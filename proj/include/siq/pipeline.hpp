#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "siq/config.hpp"
#include "siq/graph.hpp"
#include "siq/train.hpp"

namespace siq::pipeline {

/// An upstream stage's artifacts are absent or carry the wrong schema tag.
class MissingStage : public std::runtime_error {
 public:
  MissingStage(const std::string& stage, const std::string& detail);
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Stage directory under the run directory, e.g. <out>/train/r2gcn.
std::filesystem::path stage_dir(const config::RunConfig& config, const std::string& stage);

/// Hash of every setting except output and input paths.
std::string config_fingerprint(const config::RunConfig& config);

void run_synth(const config::RunConfig& config);
void run_ingest(const config::RunConfig& config);
void run_featurize(const config::RunConfig& config);
void run_graph(const config::RunConfig& config);
void run_train(const config::RunConfig& config, train::Method method);
void run_evaluate(const config::RunConfig& config);
void run_sweep(const config::RunConfig& config, train::Method method);
void run_distance(const config::RunConfig& config, train::Method method);
void run_report(const config::RunConfig& config);

/// Every stage in order, training each of config.methods.
void run_all(const config::RunConfig& config);

/// Data set rebuilt from the files recorded by the ingest stage.
graph::Dataset load_dataset(const config::RunConfig& config);

/// Snapshots of the students selected by the graph stage.
std::vector<graph::Snapshot> load_snapshots(const config::RunConfig& config,
                                            const graph::Dataset& data);

/// Eligible students after the id filter and the max_students cap.
std::vector<std::string> select_students(const config::RunConfig& config,
                                         const graph::Dataset& data);

}  // namespace siq::pipeline
