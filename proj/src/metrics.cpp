#include "siq/metrics.hpp"

#include <stdexcept>

namespace siq::metrics {

StudentOutcome outcome(const Predictions& p) {
  if (p.predicted.size() != p.actual.size()) {
    throw std::invalid_argument("predictions and labels differ in length");
  }
  StudentOutcome o{0, p.actual.size()};
  for (std::size_t i = 0; i < p.actual.size(); ++i) {
    if (p.predicted[i] == p.actual[i]) ++o.correct;
  }
  return o;
}

double accuracy(const Predictions& p) {
  StudentOutcome o = outcome(p);
  return o.total == 0 ? 0.0 : static_cast<double>(o.correct) / static_cast<double>(o.total);
}

double metric_ap_acc(std::span<const StudentOutcome> students) {
  if (students.empty()) throw std::invalid_argument("AP-Acc needs at least one student");
  double total = 0.0;
  for (const auto& s : students) {
    if (s.total == 0) throw std::invalid_argument("AP-Acc: student with an empty test set");
    total += static_cast<double>(s.correct) / static_cast<double>(s.total);
  }
  return total / static_cast<double>(students.size());
}

double metric_o_acc(std::span<const StudentOutcome> students) {
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& s : students) {
    correct += s.correct;
    total += s.total;
  }
  if (total == 0) throw std::invalid_argument("O-Acc needs at least one prediction");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double weighted_f1(const Predictions& p, int num_classes) {
  if (p.predicted.size() != p.actual.size()) {
    throw std::invalid_argument("predictions and labels differ in length");
  }
  const std::size_t k = static_cast<std::size_t>(num_classes);
  std::vector<double> tp(k, 0.0), predicted(k, 0.0), support(k, 0.0);
  for (std::size_t i = 0; i < p.actual.size(); ++i) {
    int a = p.actual[i];
    int b = p.predicted[i];
    if (a < 0 || a >= num_classes || b < 0 || b >= num_classes) {
      throw std::out_of_range("class label outside 0.." + std::to_string(num_classes - 1));
    }
    support[static_cast<std::size_t>(a)] += 1.0;
    predicted[static_cast<std::size_t>(b)] += 1.0;
    if (a == b) tp[static_cast<std::size_t>(a)] += 1.0;
  }
  const double n = static_cast<double>(p.actual.size());
  if (n == 0.0) return 0.0;
  double score = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    if (support[c] == 0.0) continue;
    double precision = predicted[c] > 0.0 ? tp[c] / predicted[c] : 0.0;
    double recall = tp[c] / support[c];
    double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    score += support[c] / n * f1;
  }
  return score;
}

double metric_apw_f1(std::span<const Predictions> students, int num_classes) {
  if (students.empty()) throw std::invalid_argument("APW-F1 needs at least one student");
  double total = 0.0;
  for (const auto& s : students) total += weighted_f1(s, num_classes);
  return total / static_cast<double>(students.size());
}

}  // namespace siq::metrics
