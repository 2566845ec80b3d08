#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "siq/nn.hpp"

namespace siq::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

MatrixMap map(Tensor& t) {
  return MatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                   static_cast<Eigen::Index>(t.cols()));
}

ConstMatrixMap map(const Tensor& t) {
  return ConstMatrixMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                        static_cast<Eigen::Index>(t.cols()));
}

void require_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " +
                                t.shape_string());
  }
}

Tape& tape_of(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument("operands recorded on different tapes");
  }
  return *a.tape;
}

}  // namespace

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(const ParamSet& params, const std::string& name) {
  Node node;
  node.value = params.value(name);
  node.requires_grad = true;
  node.param_name = name;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardRule rule) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [&](std::size_t id) { return nodes_[id].requires_grad; });
  if (node.requires_grad) {
    node.inputs = std::move(inputs);
    node.rule = std::move(rule);
  }
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad(std::size_t id) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Tensor(node.value.shape());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::accumulate(std::size_t id, Tensor contribution) {
  Node& node = nodes_[id];
  if (!node.has_grad) {
    node.grad = std::move(contribution);
    node.has_grad = true;
    return;
  }
  auto dst = node.grad.values();
  const auto src = contribution.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Gradients Tape::backward(Var loss) {
  if (loss.tape != this) throw std::invalid_argument("loss recorded on a different tape");
  const Tensor& value = nodes_[loss.id].value;
  if (value.size() != 1) {
    throw std::invalid_argument("backward needs a scalar loss, got shape " + value.shape_string());
  }
  grad(loss.id).values()[0] = 1.0;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.has_grad && node.rule) {
      node.rule(*this, id);
      // Interior gradients are dead once propagated.
      if (node.param_name.empty()) node.grad = Tensor();
    }
  }
  Gradients grads;
  for (auto& node : nodes_) {
    if (node.param_name.empty()) continue;
    Tensor g = node.has_grad ? node.grad : Tensor(node.value.shape());
    auto [it, inserted] = grads.try_emplace(node.param_name, g);
    if (!inserted) {
      for (std::size_t i = 0; i < g.size(); ++i) it->second.values()[i] += g.values()[i];
    }
  }
  return grads;
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2("matmul", av);
  require_rank2("matmul", bv);
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out({av.rows(), bv.cols()});
  if (out.size() > 0) map(out).noalias() = map(av) * map(bv);
  return tape.record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a) && g.size() > 0) {
      map(t.grad(a)).noalias() += map(g) * map(t.value(b)).transpose();
    }
    if (t.requires_grad(b) && g.size() > 0) {
      map(t.grad(b)).noalias() += map(t.value(a)).transpose() * map(g);
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += bv.values()[i];
  return tape.record(std::move(out), {a.id, b.id}, [a = a.id, b = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(a)) t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate(b, g);
  });
}

Var add_bias(Var a, Var bias) {
  Tape& tape = tape_of(a, bias);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  require_rank2("add_bias", av);
  require_rank2("add_bias", bv);
  if (bv.rows() != 1 || bv.cols() != av.cols()) shape_error("add_bias", av, bv);
  Tensor out = av;
  if (out.size() > 0) map(out).rowwise() += map(bv).row(0);
  return tape.record(std::move(out), {a.id, bias.id},
                     [a = a.id, b = bias.id](Tape& t, std::size_t self) {
                       const Tensor& g = t.grad(self);
                       if (t.requires_grad(b) && g.size() > 0) {
                         map(t.grad(b)).row(0) += map(g).colwise().sum();
                       }
                       if (t.requires_grad(a)) t.accumulate(a, g);
                     });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  return a.tape->record(std::move(out), {a.id}, [a = a.id, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    auto dst = t.grad(a).values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g.values()[i];
  });
}

Var relu(Var a) {
  Tensor out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return a.tape->record(std::move(out), {a.id}, [a = a.id](Tape& t, std::size_t self) {
    Tensor masked = t.grad(self);
    const Tensor& y = t.value(self);
    auto d = masked.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!(y.values()[i] > 0.0)) d[i] = 0.0;
    }
    t.accumulate(a, std::move(masked));
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Tape& tape = *parts.front().tape;
  const std::size_t rows = parts.front().value().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (p.tape != &tape) throw std::invalid_argument("operands recorded on different tapes");
    require_rank2("concat", p.value());
    if (p.value().rows() != rows) shape_error("concat", parts.front().value(), p.value());
    cols += p.value().cols();
    ids.push_back(p.id);
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (v.cols() > 0 && rows > 0) {
      map(out).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(v.cols())) =
          map(v);
    }
    offset += v.cols();
  }
  return tape.record(std::move(out), ids, [ids](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t id : ids) {
      std::size_t width = t.value(id).cols();
      if (t.requires_grad(id) && width > 0 && g.rows() > 0) {
        map(t.grad(id)) +=
            map(g).middleCols(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(width));
      }
      offset += width;
    }
  });
}

Var row_gather(Var a, std::span<const std::size_t> rows) {
  const Tensor& av = a.value();
  require_rank2("row_gather", av);
  const std::size_t cols = av.cols();
  Tensor out({rows.size(), cols});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= av.rows()) {
      throw std::out_of_range("row_gather: row " + std::to_string(rows[i]) +
                              " outside tensor of shape " + av.shape_string());
    }
    std::copy_n(av.data() + rows[i] * cols, cols, out.data() + i * cols);
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return a.tape->record(std::move(out), {a.id},
                        [a = a.id, index = std::move(index), cols](Tape& t, std::size_t self) {
                          const Tensor& g = t.grad(self);
                          double* dst = t.grad(a).data();
                          for (std::size_t i = 0; i < index.size(); ++i) {
                            const double* src = g.data() + i * cols;
                            double* d = dst + index[i] * cols;
                            for (std::size_t c = 0; c < cols; ++c) d[c] += src[c];
                          }
                        });
}

Var row_scatter_mean(Var a, std::span<const std::size_t> segment, std::size_t num_segments) {
  const Tensor& av = a.value();
  require_rank2("row_scatter_mean", av);
  if (segment.size() != av.rows()) {
    throw std::invalid_argument("row_scatter_mean: " + std::to_string(segment.size()) +
                                " segment ids for tensor of shape " + av.shape_string());
  }
  const std::size_t cols = av.cols();
  std::vector<double> inv_count(num_segments, 0.0);
  for (std::size_t s : segment) {
    if (s >= num_segments) throw std::out_of_range("row_scatter_mean: segment id out of range");
    inv_count[s] += 1.0;
  }
  for (double& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;

  Tensor out({num_segments, cols});
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const double* src = av.data() + i * cols;
    double* dst = out.data() + segment[i] * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
  }
  for (std::size_t s = 0; s < num_segments; ++s) {
    double* dst = out.data() + s * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] *= inv_count[s];
  }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  return a.tape->record(
      std::move(out), {a.id},
      [a = a.id, seg = std::move(seg), inv_count = std::move(inv_count), cols](Tape& t,
                                                                             std::size_t self) {
        const Tensor& g = t.grad(self);
        double* dst = t.grad(a).data();
        for (std::size_t i = 0; i < seg.size(); ++i) {
          const double* src = g.data() + seg[i] * cols;
          const double w = inv_count[seg[i]];
          double* d = dst + i * cols;
          for (std::size_t c = 0; c < cols; ++c) d[c] += w * src[c];
        }
      });
}

Var neighbor_mean(Var a, std::span<const std::size_t> src, std::span<const std::size_t> dst,
                  std::size_t num_targets) {
  const Tensor& av = a.value();
  require_rank2("neighbor_mean", av);
  if (src.size() != dst.size()) {
    throw std::invalid_argument("neighbor_mean: " + std::to_string(src.size()) + " sources for " +
                                std::to_string(dst.size()) + " targets");
  }
  const std::size_t cols = av.cols();
  std::vector<double> inv_count(num_targets, 0.0);
  for (std::size_t e = 0; e < src.size(); ++e) {
    if (src[e] >= av.rows()) {
      throw std::out_of_range("neighbor_mean: row " + std::to_string(src[e]) +
                              " outside tensor of shape " + av.shape_string());
    }
    if (dst[e] >= num_targets) throw std::out_of_range("neighbor_mean: target out of range");
    inv_count[dst[e]] += 1.0;
  }
  for (double& c : inv_count) c = c > 0.0 ? 1.0 / c : 0.0;

  // Sum first, then scale, so the result matches the two-step version bit
  // for bit.
  Tensor out({num_targets, cols});
  for (std::size_t e = 0; e < src.size(); ++e) {
    const double* s = av.data() + src[e] * cols;
    double* d = out.data() + dst[e] * cols;
    for (std::size_t c = 0; c < cols; ++c) d[c] += s[c];
  }
  for (std::size_t n = 0; n < num_targets; ++n) {
    double* d = out.data() + n * cols;
    for (std::size_t c = 0; c < cols; ++c) d[c] *= inv_count[n];
  }
  std::vector<std::size_t> from(src.begin(), src.end());
  std::vector<std::size_t> to(dst.begin(), dst.end());
  return a.tape->record(std::move(out), {a.id},
                        [a = a.id, from = std::move(from), to = std::move(to),
                         inv_count = std::move(inv_count), cols](Tape& t, std::size_t self) {
                          const Tensor& g = t.grad(self);
                          double* dst = t.grad(a).data();
                          for (std::size_t e = 0; e < from.size(); ++e) {
                            const double* s = g.data() + to[e] * cols;
                            const double w = inv_count[to[e]];
                            double* d = dst + from[e] * cols;
                            for (std::size_t c = 0; c < cols; ++c) d[c] += w * s[c];
                          }
                        });
}

Tensor softmax_rows(const Tensor& logits) {
  Tensor out = logits;
  const std::size_t cols = logits.cols();
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    double* row = out.data() + r * cols;
    double max = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - max);
      total += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= total;
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Var softmax(Var a) {
  require_rank2("softmax", a.value());
  Tensor out = softmax_rows(a.value());
  return a.tape->record(std::move(out), {a.id}, [a = a.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& dst = t.grad(a);
    const std::size_t cols = y.cols();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < cols; ++c) dst(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  return a.tape->record(Tensor::scalar(total), {a.id}, [a = a.id](Tape& t, std::size_t self) {
    const double g = t.grad(self).item();
    for (double& d : t.grad(a).values()) d += g;
  });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  require_rank2("cross_entropy", z);
  if (z.rows() == 0) throw std::invalid_argument("cross_entropy: no rows");
  if (labels.size() != z.rows()) {
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for logits of shape " + z.shape_string());
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= z.cols()) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                              " outside 0.." + std::to_string(z.cols() - 1));
    }
  }
  Tensor probs = softmax_rows(z);
  const double n = static_cast<double>(z.rows());
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    double max = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - max);
    loss += (max + std::log(total)) - row[static_cast<std::size_t>(labels[r])];
  }
  std::vector<int> y(labels.begin(), labels.end());
  return logits.tape->record(
      Tensor::scalar(loss / n), {logits.id},
      [id = logits.id, probs = std::move(probs), y = std::move(y), n](Tape& t, std::size_t self) {
        const double g = t.grad(self).item() / n;
        Tensor& dst = t.grad(id);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
          for (std::size_t c = 0; c < probs.cols(); ++c) {
            double target = static_cast<int>(c) == y[r] ? 1.0 : 0.0;
            dst(r, c) += g * (probs(r, c) - target);
          }
        }
      });
}

}  // namespace siq::nn
