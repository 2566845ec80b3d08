#include "siq/model.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

namespace siq::model {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::R2GCN: return "r2gcn";
    case Variant::RGCN_E2N: return "rgcn_e2n";
    case Variant::RGCN_NoE2N: return "rgcn_no_e2n";
  }
  return "r2gcn";
}

Variant parse_variant(std::string_view name) {
  if (name == "r2gcn") return Variant::R2GCN;
  if (name == "rgcn_e2n") return Variant::RGCN_E2N;
  if (name == "rgcn_no_e2n") return Variant::RGCN_NoE2N;
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

HeteroGraph make_model_input(const graph::SIQGraph& g, Variant variant) {
  using graph::Relation;
  HeteroGraph out;
  if (variant == Variant::RGCN_NoE2N) {
    out.type_names = {"S", "Q"};
    out.features = {g.student_features, g.question_features};
    out.target_type = 1;
    const auto& is = g.edges(Relation::InteractionToStudent);
    const auto& iq = g.edges(Relation::InteractionToQuestion);
    std::vector<std::size_t> student_of(g.num_interactions());
    std::vector<std::size_t> question_of(g.num_interactions());
    for (std::size_t e = 0; e < is.size(); ++e) student_of[is.src[e]] = is.dst[e];
    for (std::size_t e = 0; e < iq.size(); ++e) question_of[iq.src[e]] = iq.dst[e];
    RelationEdges sq{"S->Q", 0, 1, student_of, question_of};
    RelationEdges qs{"Q->S", 1, 0, question_of, student_of};
    out.relations = {std::move(sq), std::move(qs)};
    return out;
  }
  out.type_names = {"S", "I", "Q"};
  out.features = {g.student_features, g.interaction_features, g.question_features};
  out.target_type = 2;
  auto type_index = [](graph::NodeType t) -> std::size_t {
    switch (t) {
      case graph::NodeType::Student: return 0;
      case graph::NodeType::Interaction: return 1;
      case graph::NodeType::Question: return 2;
    }
    return 0;
  };
  for (Relation r : graph::kRelations) {
    const auto& edges = g.edges(r);
    out.relations.push_back(RelationEdges{std::string(graph::to_string(r)),
                                          type_index(graph::source_type(r)),
                                          type_index(graph::target_type(r)), edges.src, edges.dst});
  }
  return out;
}

void standardize_columns(nn::Tensor& features) {
  const std::size_t rows = features.rows();
  const std::size_t cols = features.cols();
  if (rows == 0) return;
  for (std::size_t c = 0; c < cols; ++c) {
    bool indicator = true;
    for (std::size_t r = 0; r < rows && indicator; ++r) {
      indicator = features(r, c) == 0.0 || features(r, c) == 1.0;
    }
    // One-hot columns stay 0/1; scaling would blow rare categories up.
    if (indicator) continue;
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += features(r, c);
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) var += (features(r, c) - mean) * (features(r, c) - mean);
    double sd = std::sqrt(var / static_cast<double>(rows));
    for (std::size_t r = 0; r < rows; ++r) {
      features(r, c) = sd > 1e-12 ? (features(r, c) - mean) / sd : 0.0;
    }
  }
}

nn::Var input_projection(nn::Var features, nn::Var weight, nn::Var bias) {
  return nn::relu(nn::add_bias(nn::matmul(features, weight), bias));
}

nn::Var message_pass(nn::Tape& tape, std::span<const RelationMessage> messages,
                     std::size_t num_targets, std::size_t hidden, AggregationOrder order) {
  std::optional<nn::Var> total;
  for (const RelationMessage& m : messages) {
    const RelationEdges& edges = *m.edges;
    const std::size_t num_sources = m.source_states.value().rows();
    bool transform_first = order == AggregationOrder::TransformFirst ||
                           (order == AggregationOrder::Auto && num_sources <= num_targets);
    nn::Var message;
    if (transform_first) {
      nn::Var transformed = nn::matmul(m.source_states, m.weight);
      message = nn::neighbor_mean(transformed, edges.src, edges.dst, num_targets);
    } else {
      nn::Var mean = nn::neighbor_mean(m.source_states, edges.src, edges.dst, num_targets);
      message = nn::matmul(mean, m.weight);
    }
    total = total ? nn::add(*total, message) : message;
  }
  if (!total) return tape.constant(nn::Tensor::zeros(num_targets, hidden));
  return *total;
}

nn::Var update(nn::Var message, nn::Var states, nn::Var self_weight, nn::Var bias) {
  return nn::relu(nn::add_bias(nn::add(message, nn::matmul(states, self_weight)), bias));
}

nn::Var readout(std::span<const nn::Var> parts, nn::Var hidden_weight, nn::Var hidden_bias,
                nn::Var out_weight, nn::Var out_bias) {
  nn::Var z = parts.size() == 1 ? parts.front() : nn::concat(parts);
  nn::Var hidden = nn::relu(nn::add_bias(nn::matmul(z, hidden_weight), hidden_bias));
  return nn::add_bias(nn::matmul(hidden, out_weight), out_bias);
}

R2GCN::R2GCN(ModelConfig config, std::vector<std::size_t> feature_dims,
             std::vector<std::string> type_names, std::vector<std::string> relation_names,
             std::size_t target_type)
    : config_(config),
      feature_dims_(std::move(feature_dims)),
      type_names_(std::move(type_names)),
      relation_names_(std::move(relation_names)),
      target_type_(target_type) {
  if (config_.layers < 1) throw std::invalid_argument("model needs at least one relational layer");
  if (config_.hidden == 0 || config_.readout_hidden == 0 || config_.num_classes == 0) {
    throw std::invalid_argument("model widths must be positive");
  }
  if (feature_dims_.size() != type_names_.size() || target_type_ >= type_names_.size()) {
    throw std::invalid_argument("inconsistent node type description");
  }
}

R2GCN R2GCN::for_graph(const HeteroGraph& graph, const ModelConfig& config) {
  std::vector<std::size_t> dims;
  for (const auto& f : graph.features) dims.push_back(f.cols());
  std::vector<std::string> relations;
  for (const auto& r : graph.relations) relations.push_back(r.name);
  return R2GCN(config, dims, graph.type_names, relations, graph.target_type);
}

std::size_t R2GCN::readout_input_dim() const {
  if (config_.variant == Variant::R2GCN) {
    return feature_dims_[target_type_] + (config_.layers + 1) * config_.hidden;
  }
  return config_.hidden;
}

std::string R2GCN::relation_weight(std::size_t layer, const std::string& relation) {
  return "layer" + std::to_string(layer) + ".rel." + relation;
}
std::string R2GCN::self_weight(std::size_t layer) { return "layer" + std::to_string(layer) + ".self"; }
std::string R2GCN::layer_bias(std::size_t layer) { return "layer" + std::to_string(layer) + ".bias"; }

nn::ParamSet R2GCN::init_params(std::uint64_t seed) const {
  nn::Rng rng(seed);
  nn::ParamSet params;
  const std::size_t h = config_.hidden;
  for (std::size_t t = 0; t < type_names_.size(); ++t) {
    params.add(input_weight(type_names_[t]), nn::glorot_uniform(feature_dims_[t], h, rng));
    params.add(input_bias(type_names_[t]), nn::Tensor::zeros(1, h));
  }
  for (std::size_t l = 0; l < config_.layers; ++l) {
    for (const auto& r : relation_names_) {
      params.add(relation_weight(l, r), nn::glorot_uniform(h, h, rng));
    }
    params.add(self_weight(l), nn::glorot_uniform(h, h, rng));
    params.add(layer_bias(l), nn::Tensor::zeros(1, h));
  }
  params.add("readout.hidden.weight",
             nn::glorot_uniform(readout_input_dim(), config_.readout_hidden, rng));
  params.add("readout.hidden.bias", nn::Tensor::zeros(1, config_.readout_hidden));
  params.add("readout.out.weight",
             nn::glorot_uniform(config_.readout_hidden, config_.num_classes, rng));
  params.add("readout.out.bias", nn::Tensor::zeros(1, config_.num_classes));
  return params;
}

nn::Var R2GCN::forward(nn::Tape& tape, const nn::ParamSet& params, const HeteroGraph& graph,
                       std::span<const std::size_t> target_rows, AggregationOrder order) const {
  const std::size_t types = graph.num_types();
  if (types != type_names_.size()) throw std::invalid_argument("graph has unexpected node types");
  for (std::size_t t = 0; t < types; ++t) {
    if (graph.features[t].cols() != feature_dims_[t]) {
      throw std::invalid_argument("node type " + type_names_[t] + " has feature dimension " +
                                  std::to_string(graph.features[t].cols()) + ", expected " +
                                  std::to_string(feature_dims_[t]));
    }
  }
  const std::size_t target = target_type_;

  std::vector<nn::Var> h(types);
  nn::Var target_features;
  for (std::size_t t = 0; t < types; ++t) {
    nn::Var f = tape.constant(graph.features[t]);
    if (t == target) target_features = f;
    h[t] = input_projection(f, tape.parameter(params, input_weight(type_names_[t])),
                            tape.parameter(params, input_bias(type_names_[t])));
  }

  const bool residual = config_.variant == Variant::R2GCN;
  std::vector<nn::Var> parts;
  if (residual) {
    parts.push_back(nn::row_gather(target_features, target_rows));
    parts.push_back(nn::row_gather(h[target], target_rows));
  }

  for (std::size_t l = 0; l < config_.layers; ++l) {
    const bool last = l + 1 == config_.layers;
    std::vector<nn::Var> rel_weight;
    for (const auto& r : graph.relations) {
      rel_weight.push_back(tape.parameter(params, relation_weight(l, r.name)));
    }
    nn::Var w0 = tape.parameter(params, self_weight(l));
    nn::Var b = tape.parameter(params, layer_bias(l));

    std::vector<nn::Var> next = h;
    for (std::size_t t = 0; t < types; ++t) {
      // Only target nodes feed the readout after the final layer.
      if (last && t != target) continue;
      std::vector<RelationMessage> messages;
      for (std::size_t r = 0; r < graph.relations.size(); ++r) {
        const auto& rel = graph.relations[r];
        if (rel.dst_type == t) messages.push_back({&rel, h[rel.src_type], rel_weight[r]});
      }
      nn::Var m = message_pass(tape, messages, graph.num_nodes(t), config_.hidden, order);
      next[t] = update(m, h[t], w0, b);
    }
    h = std::move(next);
    if (residual) parts.push_back(nn::row_gather(h[target], target_rows));
  }
  if (!residual) parts.push_back(nn::row_gather(h[target], target_rows));

  return readout(parts, tape.parameter(params, "readout.hidden.weight"),
                 tape.parameter(params, "readout.hidden.bias"),
                 tape.parameter(params, "readout.out.weight"),
                 tape.parameter(params, "readout.out.bias"));
}

}  // namespace siq::model
