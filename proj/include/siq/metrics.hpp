#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace siq::metrics {

/// Test-set outcome of one student: n_c correct out of n predictions.
struct StudentOutcome {
  std::size_t correct = 0;
  std::size_t total = 0;
};

struct Predictions {
  std::vector<int> predicted;
  std::vector<int> actual;
};

StudentOutcome outcome(const Predictions& p);
double accuracy(const Predictions& p);

/// Mean over students of n_c / n.
double metric_ap_acc(std::span<const StudentOutcome> students);
/// Sum of n_c over sum of n.
double metric_o_acc(std::span<const StudentOutcome> students);

/// Support-weighted mean of per-class F1 over classes 0..num_classes-1;
/// a class with precision + recall = 0 scores 0. Empty input scores 0.
double weighted_f1(const Predictions& p, int num_classes = 4);
/// Mean over students of weighted_f1.
double metric_apw_f1(std::span<const Predictions> students, int num_classes = 4);

}  // namespace siq::metrics
