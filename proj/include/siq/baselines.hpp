#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "siq/graph.hpp"
#include "siq/nn.hpp"

namespace siq::baselines {

/// concat(student statistics, question statistics) with its score level.
struct PairExample {
  std::vector<double> features;
  int label = 0;
};

/// One example per labeled question of `split`, pairing the target
/// student's statistics with the question's.
std::vector<PairExample> pair_examples(const graph::SIQGraph& graph,
                                       const std::string& student_id, graph::Split split);

/// Column means and deviations fitted on training examples.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(std::span<const PairExample> examples);
  std::vector<PairExample> apply(std::span<const PairExample> examples) const;
};

struct LogisticConfig {
  double lr = 0.05;
  int epochs = 300;
  double l2 = 1e-2;
};

/// Multinomial logistic regression: class scores = W x + b with W of shape
/// classes x d.
struct LogisticModel {
  nn::Tensor weight;
  nn::Tensor bias;
};

/// Full-batch cross-entropy fit with Adam from zero weights; the L2 penalty
/// enters as coupled weight decay.
LogisticModel logistic_regression_train(std::span<const PairExample> examples,
                                        const LogisticConfig& config, int num_classes = 4);

std::vector<int> predict(const LogisticModel& model, std::span<const PairExample> examples);

struct MajorityModel {
  int level = 0;
};

/// Most frequent label; ties go to the lowest level.
MajorityModel majority_class(std::span<const int> labels, int num_classes = 4);

std::vector<int> predict(const MajorityModel& model, std::span<const PairExample> examples);

}  // namespace siq::baselines
