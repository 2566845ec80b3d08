#include "siq/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace siq::baselines {

std::vector<PairExample> pair_examples(const graph::SIQGraph& graph,
                                       const std::string& student_id, graph::Split split) {
  auto it = std::lower_bound(graph.student_ids.begin(), graph.student_ids.end(), student_id);
  if (it == graph.student_ids.end() || *it != student_id) {
    throw std::out_of_range("student " + student_id + " is not in the graph");
  }
  auto student_row = graph.student_features.row(static_cast<std::size_t>(it - graph.student_ids.begin()));
  std::vector<PairExample> out;
  for (const auto& label : graph.labels) {
    if (label.split != split) continue;
    PairExample ex;
    ex.features.assign(student_row.begin(), student_row.end());
    auto q = graph.question_features.row(label.question);
    ex.features.insert(ex.features.end(), q.begin(), q.end());
    ex.label = label.level;
    out.push_back(std::move(ex));
  }
  return out;
}

Standardizer Standardizer::fit(std::span<const PairExample> examples) {
  Standardizer s;
  if (examples.empty()) return s;
  const std::size_t d = examples.front().features.size();
  const double n = static_cast<double>(examples.size());
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (const auto& ex : examples) {
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += ex.features[j] / n;
  }
  for (const auto& ex : examples) {
    for (std::size_t j = 0; j < d; ++j) {
      double diff = ex.features[j] - s.mean[j];
      s.scale[j] += diff * diff / n;
    }
  }
  for (double& v : s.scale) v = std::sqrt(v);
  return s;
}

std::vector<PairExample> Standardizer::apply(std::span<const PairExample> examples) const {
  std::vector<PairExample> out(examples.begin(), examples.end());
  for (auto& ex : out) {
    if (ex.features.size() != mean.size()) {
      throw std::invalid_argument("standardizer fitted on a different feature dimension");
    }
    for (std::size_t j = 0; j < mean.size(); ++j) {
      ex.features[j] = scale[j] > 1e-12 ? (ex.features[j] - mean[j]) / scale[j] : 0.0;
    }
  }
  return out;
}

namespace {

nn::Tensor design_matrix(std::span<const PairExample> examples, std::size_t d) {
  nn::Tensor x({examples.size(), d});
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].features.size() != d) {
      throw std::invalid_argument("example " + std::to_string(i) + " has dimension " +
                                  std::to_string(examples[i].features.size()) + ", expected " +
                                  std::to_string(d));
    }
    std::copy(examples[i].features.begin(), examples[i].features.end(), x.data() + i * d);
  }
  return x;
}

}  // namespace

LogisticModel logistic_regression_train(std::span<const PairExample> examples,
                                        const LogisticConfig& config, int num_classes) {
  if (examples.empty()) throw std::invalid_argument("logistic regression needs examples");
  const std::size_t d = examples.front().features.size();
  const auto k = static_cast<std::size_t>(num_classes);
  nn::Tensor x = design_matrix(examples, d);
  std::vector<int> labels;
  for (const auto& ex : examples) labels.push_back(ex.label);

  nn::ParamSet params;
  params.add("weight", nn::Tensor::zeros(d, k));
  params.add("bias", nn::Tensor::zeros(1, k));
  nn::AdamOptions adam{config.lr, config.l2};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    nn::Tape tape;
    nn::Var logits = nn::add_bias(nn::matmul(tape.constant(x), tape.parameter(params, "weight")),
                                  tape.parameter(params, "bias"));
    nn::Var loss = nn::cross_entropy(logits, labels);
    nn::adam_step(params, tape.backward(loss), adam);
  }

  LogisticModel model;
  model.weight = nn::Tensor::zeros(k, d);
  const nn::Tensor& w = params.value("weight");
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t c = 0; c < k; ++c) model.weight(c, j) = w(j, c);
  }
  model.bias = params.value("bias");
  return model;
}

std::vector<int> predict(const LogisticModel& model, std::span<const PairExample> examples) {
  const std::size_t k = model.weight.rows();
  const std::size_t d = model.weight.cols();
  nn::Tensor scores({examples.size(), k});
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].features.size() != d) {
      throw std::invalid_argument("example dimension " + std::to_string(examples[i].features.size()) +
                                  " does not match model dimension " + std::to_string(d));
    }
    for (std::size_t c = 0; c < k; ++c) {
      double s = model.bias(0, c);
      for (std::size_t j = 0; j < d; ++j) s += model.weight(c, j) * examples[i].features[j];
      scores(i, c) = s;
    }
  }
  return nn::argmax_rows(scores);
}

MajorityModel majority_class(std::span<const int> labels, int num_classes) {
  if (labels.empty()) throw std::invalid_argument("majority class needs labels");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int label : labels) {
    if (label < 0 || label >= num_classes) throw std::out_of_range("label outside class range");
    ++counts[static_cast<std::size_t>(label)];
  }
  return {static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin())};
}

std::vector<int> predict(const MajorityModel& model, std::span<const PairExample> examples) {
  return std::vector<int>(examples.size(), model.level);
}

}  // namespace siq::baselines
