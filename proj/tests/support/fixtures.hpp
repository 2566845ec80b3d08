#pragma once

// Small builders and independent reference implementations shared by the
// unit tests and the acceptance suite. The references are deliberately
// naive so that they do not share code paths with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "siq/features.hpp"
#include "siq/graph.hpp"
#include "siq/ingest.hpp"
#include "siq/metrics.hpp"
#include "siq/nn.hpp"

namespace siq::testing {

inline ingest::MouseEvent ev(ingest::EventType type, std::int64_t t, double x = 0.0,
                             double y = 0.0, std::string student = "s1",
                             std::string question = "q1") {
  return ingest::MouseEvent{std::move(student), std::move(question), type, t, x, y};
}

inline ingest::MouseEvent down(std::int64_t t, double x = 0.0, double y = 0.0) {
  return ev(ingest::EventType::MouseDown, t, x, y);
}
inline ingest::MouseEvent up(std::int64_t t, double x = 0.0, double y = 0.0) {
  return ev(ingest::EventType::MouseUp, t, x, y);
}
inline ingest::MouseEvent move(std::int64_t t, double x = 0.0, double y = 0.0) {
  return ev(ingest::EventType::MouseMove, t, x, y);
}

inline ingest::Trajectory trajectory(std::vector<ingest::MouseEvent> events) {
  return ingest::Trajectory{"s1", "q1", std::move(events)};
}

// Reference GC detector: for every mousedown that is not inside an open
// episode, scan forward for the next mouseup; everything between is part
// of the episode.
struct RefClick {
  std::size_t start_index;
  std::size_t end_index;
  double path_length;
};

inline std::vector<RefClick> reference_clicks(const std::vector<ingest::MouseEvent>& events) {
  std::vector<RefClick> out;
  std::size_t i = 0;
  while (i < events.size()) {
    if (events[i].type != ingest::EventType::MouseDown) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < events.size() && events[j].type != ingest::EventType::MouseUp) ++j;
    if (j == events.size()) break;
    // Path through the opening event, every move inside, and the closing event.
    std::vector<std::size_t> points{i};
    for (std::size_t k = i + 1; k < j; ++k) {
      if (events[k].type == ingest::EventType::MouseMove) points.push_back(k);
    }
    points.push_back(j);
    double length = 0.0;
    for (std::size_t k = 1; k < points.size(); ++k) {
      const auto& a = events[points[k - 1]];
      const auto& b = events[points[k]];
      length += std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
    }
    out.push_back({i, j, length});
    i = j + 1;
  }
  return out;
}

// Reference metrics computed from an explicit confusion matrix.
struct RefMetrics {
  double ap_acc = 0.0;
  double o_acc = 0.0;
  double apw_f1 = 0.0;
};

inline RefMetrics reference_metrics(const std::vector<metrics::Predictions>& students,
                                    int classes = 4) {
  RefMetrics m;
  double correct_all = 0.0;
  double total_all = 0.0;
  for (const auto& p : students) {
    std::vector<std::vector<double>> cm(classes, std::vector<double>(classes, 0.0));
    for (std::size_t i = 0; i < p.actual.size(); ++i) cm[p.actual[i]][p.predicted[i]] += 1.0;
    double correct = 0.0;
    double total = 0.0;
    for (int a = 0; a < classes; ++a) {
      for (int b = 0; b < classes; ++b) {
        total += cm[a][b];
        if (a == b) correct += cm[a][b];
      }
    }
    m.ap_acc += total > 0 ? correct / total : 0.0;
    correct_all += correct;
    total_all += total;
    double f1_sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      double tp = cm[c][c];
      double support = 0.0;
      double predicted = 0.0;
      for (int k = 0; k < classes; ++k) {
        support += cm[c][k];
        predicted += cm[k][c];
      }
      double precision = predicted > 0 ? tp / predicted : 0.0;
      double recall = support > 0 ? tp / support : 0.0;
      double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
      f1_sum += support * f1;
    }
    m.apw_f1 += total > 0 ? f1_sum / total : 0.0;
  }
  const double n = static_cast<double>(students.size());
  m.ap_acc /= n;
  m.apw_f1 /= n;
  m.o_acc = total_all > 0 ? correct_all / total_all : 0.0;
  return m;
}

// Reference distance: adjacency lists over named nodes and a plain BFS
// from each source.
inline std::optional<double> reference_distance(
    const std::vector<std::pair<std::string, std::string>>& edges,
    const std::vector<std::string>& from, const std::vector<std::string>& to,
    std::size_t* unreachable = nullptr) {
  std::map<std::string, std::set<std::string>> adj;
  for (const auto& [a, b] : edges) {
    adj[a].insert(b);
    adj[b].insert(a);
  }
  double sum = 0.0;
  std::size_t found = 0;
  std::size_t missing = 0;
  for (const auto& x : from) {
    std::map<std::string, int> dist{{x, 0}};
    std::deque<std::string> queue{x};
    while (!queue.empty()) {
      auto u = queue.front();
      queue.pop_front();
      for (const auto& v : adj[u]) {
        if (!dist.contains(v)) {
          dist[v] = dist[u] + 1;
          queue.push_back(v);
        }
      }
    }
    for (const auto& y : to) {
      auto it = dist.find(y);
      if (it == dist.end()) {
        ++missing;
      } else {
        sum += it->second;
        ++found;
      }
    }
  }
  if (unreachable) *unreachable = missing;
  if (found == 0) return std::nullopt;
  return sum / static_cast<double>(found);
}

// Network with the given (student, question, timestamp) interactions and
// feature vectors [k, 2k] for the k-th interaction.
inline graph::ProblemSolvingNetwork network(
    std::vector<std::string> students, std::vector<std::string> questions,
    const std::vector<std::tuple<std::size_t, std::size_t, std::int64_t>>& edges,
    std::size_t feature_dim = 2) {
  graph::ProblemSolvingNetwork net;
  net.students = std::move(students);
  net.questions = std::move(questions);
  for (std::size_t k = 0; k < edges.size(); ++k) {
    auto [s, q, t] = edges[k];
    std::vector<double> f(feature_dim);
    for (std::size_t d = 0; d < feature_dim; ++d) f[d] = static_cast<double>((d + 1) * (k + 1));
    net.interactions.push_back({s, q, t, f});
  }
  return net;
}

// Random small SIQ graph with labeled questions spread over the splits.
inline graph::SIQGraph random_siq_graph(std::uint64_t seed, std::size_t students,
                                        std::size_t questions, std::size_t interactions,
                                        std::size_t dim_s = 3, std::size_t dim_i = 4,
                                        std::size_t dim_q = 5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  graph::ProblemSolvingNetwork net;
  for (std::size_t i = 0; i < students; ++i) net.students.push_back("s" + std::to_string(i));
  for (std::size_t j = 0; j < questions; ++j) net.questions.push_back("q" + std::to_string(j));
  std::set<std::pair<std::size_t, std::size_t>> used;
  while (net.interactions.size() < interactions) {
    std::size_t s = rng() % students;
    std::size_t q = rng() % questions;
    if (!used.insert({s, q}).second) continue;
    std::vector<double> f(dim_i);
    for (auto& v : f) v = u(rng);
    net.interactions.push_back({s, q, static_cast<std::int64_t>(net.interactions.size()), f});
  }
  auto fill = [&](std::size_t rows, std::size_t cols) {
    nn::Tensor t = nn::Tensor::zeros(rows, cols);
    for (auto& v : t.values()) v = u(rng);
    return t;
  };
  auto g = graph::edge2node(net, fill(students, dim_s), fill(questions, dim_q));
  for (std::size_t j = 0; j < questions; ++j) {
    graph::Split split = j % 3 == 0 ? graph::Split::Validation
                         : j % 3 == 1 ? graph::Split::Test
                                      : graph::Split::Train;
    g.labels.push_back({j, static_cast<int>(rng() % 4), static_cast<std::int64_t>(j), split});
  }
  return g;
}

// Central finite differences over every scalar of every parameter,
// compared with the tape's gradients. Returns the largest relative error
// |analytic - numeric| / max(|analytic| + |numeric|, floor).
using LossFn = std::function<nn::Var(nn::Tape&, const nn::ParamSet&)>;

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

inline GradCheck check_gradients(nn::ParamSet params, const LossFn& loss, double step = 1e-5,
                                 double floor = 1e-6) {
  nn::Tape tape;
  auto grads = tape.backward(loss(tape, params));
  GradCheck result;
  for (const auto& name : params.names()) {
    nn::Tensor& value = params.value(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double original = value.values()[i];
      value.values()[i] = original + step;
      nn::Tape plus_tape;
      const double plus = loss(plus_tape, params).value().item();
      value.values()[i] = original - step;
      nn::Tape minus_tape;
      const double minus = loss(minus_tape, params).value().item();
      value.values()[i] = original;
      const double numeric = (plus - minus) / (2 * step);
      auto it = grads.find(name);
      const double analytic = it == grads.end() ? 0.0 : it->second.values()[i];
      const double denom = std::max(std::abs(analytic) + std::abs(numeric), floor);
      result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

// Zero-initialised biases put relu inputs exactly on the kink for nodes
// with all-zero states; nudging every parameter moves the check off it.
inline nn::ParamSet jitter(nn::ParamSet params, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  for (const auto& name : params.names()) {
    for (auto& v : params.value(name).values()) v += u(rng);
  }
  return params;
}

inline nn::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  nn::Tensor t = nn::Tensor::zeros(rows, cols);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Hand-built data set: s1 answers q01..q10 at t = 1000k, s2 answers
// q01..q12 at t = 1000k + 500, each with a short mouse session ending
// before the submission. s1 also answered q12 before the feature cutoff
// (t = 100, cutoff 200) and s3 has a session with no score record.
struct TinyData {
  std::vector<ingest::ScoreRecord> records;
  std::vector<ingest::Trajectory> trajectories;
  std::vector<ingest::QuestionMeta> meta;
};

inline std::string qid(int k) { return k < 10 ? "q0" + std::to_string(k) : "q" + std::to_string(k); }

inline TinyData tiny_data() {
  TinyData d;
  for (int k = 1; k <= 12; ++k) d.meta.push_back({qid(k), 3 + k % 2, 1 + k % 3, k % 2 ? "algebra" : "geometry"});
  auto session = [&](const std::string& s, const std::string& q, std::int64_t t) {
    ingest::Trajectory tr{s, q, {}};
    tr.events.push_back(ev(ingest::EventType::MouseMove, t - 300, 0, 0, s, q));
    tr.events.push_back(ev(ingest::EventType::MouseDown, t - 200, 3, 4, s, q));
    tr.events.push_back(ev(ingest::EventType::MouseUp, t - 100, 6, 8, s, q));
    d.trajectories.push_back(tr);
  };
  d.records.push_back({"s1", "q12", 90, 100, 1});
  for (int k = 1; k <= 10; ++k) {
    d.records.push_back({"s1", qid(k), 9 * k, 1000 * k, 1});
    session("s1", qid(k), 1000 * k);
  }
  for (int k = 1; k <= 12; ++k) {
    d.records.push_back({"s2", qid(k), 100 - 8 * k, 1000 * k + 500, 1});
    session("s2", qid(k), 1000 * k + 500);
  }
  session("s3", "q05", 5000);
  ingest::assign_trial_indices(d.records);
  return d;
}

inline graph::Dataset tiny_dataset() {
  auto d = tiny_data();
  graph::DatasetOptions options;
  options.feature_cutoff_ms = 200;
  return graph::prepare_dataset(d.records, d.trajectories, d.meta, options);
}

}  // namespace siq::testing
