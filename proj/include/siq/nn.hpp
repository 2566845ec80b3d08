#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace siq::nn {

/// Dense row-major array of doubles. The differentiable primitives work on
/// rank-2 tensors; a scalar is 1x1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor identity(std::size_t n);
  static Tensor scalar(double value) { return Tensor({1, 1}, value); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double item() const;

  std::span<const double> row(std::size_t r) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

/// Throws std::invalid_argument naming both shapes.
[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b);

struct Parameter {
  Tensor value;
  Tensor first_moment;
  Tensor second_moment;
  std::int64_t step = 0;
};

/// Named trainable tensors with their Adam state, iterated in name order.
class ParamSet {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.contains(name); }
  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Parameter& parameter(const std::string& name) const;
  Parameter& parameter(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter> params_;
};

using Gradients = std::map<std::string, Tensor>;

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
};

/// Records primitive operations for reverse-mode differentiation. Node ids
/// are assigned in creation order, which is a topological order, so the
/// backward pass walks ids downwards and runs each rule once.
class Tape {
 public:
  using BackwardRule = std::function<void(Tape&, std::size_t)>;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; backward() reports its gradient by name.
  Var parameter(const ParamSet& params, const std::string& name);
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardRule rule);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor& grad(std::size_t id);
  /// Adds `contribution` to a node's gradient, taking it over when the
  /// node has none yet.
  void accumulate(std::size_t id, Tensor contribution);

  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and returns gradients for every parameter
  /// leaf. The loss must be 1x1.
  Gradients backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
    std::string param_name;
  };
  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// Adds a 1 x n row to every row of a.
Var add_bias(Var a, Var bias);
Var scale(Var a, double factor);
/// relu'(0) = 0.
Var relu(Var a);
/// Column-wise concatenation; all parts share the row count.
Var concat(std::span<const Var> parts);
Var row_gather(Var a, std::span<const std::size_t> rows);
/// out[s] = mean of rows i with segment[i] == s; empty segments give zero.
Var row_scatter_mean(Var a, std::span<const std::size_t> segment, std::size_t num_segments);
/// row_scatter_mean(row_gather(a, src), dst, num_targets) without the
/// per-edge intermediate.
Var neighbor_mean(Var a, std::span<const std::size_t> src, std::span<const std::size_t> dst,
                  std::size_t num_targets);
Var softmax(Var a);
Var sum(Var a);
/// Mean over rows of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);

Tensor softmax_rows(const Tensor& logits);
/// Row-wise argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& scores);

struct AdamOptions {
  double lr = 1e-4;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // false: weight_decay * param is added to the gradient (L2).
  bool decoupled_weight_decay = false;
};

/// One bias-corrected Adam update. Parameters without a gradient entry are
/// treated as having zero gradient.
void adam_step(ParamSet& params, const Gradients& grads, const AdamOptions& options);

/// Seeded generator; uniform() maps the top 53 bits of each draw to [0, 1).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// JSON checkpoint: {"schema": "siq.params/1", "params": {name: {"shape": [...],
/// "values": [...]}}}. Doubles are written in shortest round-trip form.
void save_params(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_params(const std::filesystem::path& path);
std::string params_to_json(const ParamSet& params);
ParamSet params_from_json(const std::string& text);

}  // namespace siq::nn
