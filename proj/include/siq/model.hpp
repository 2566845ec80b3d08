#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "siq/graph.hpp"
#include "siq/nn.hpp"

namespace siq::model {

enum class Variant { R2GCN, RGCN_E2N, RGCN_NoE2N };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  std::size_t layers = 3;
  std::size_t hidden = 128;
  std::size_t readout_hidden = 128;
  std::size_t num_classes = 4;
  Variant variant = Variant::R2GCN;
};

/// Directed typed edges from nodes of `src_type` to nodes of `dst_type`.
struct RelationEdges {
  std::string name;
  std::size_t src_type = 0;
  std::size_t dst_type = 0;
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
};

/// Model-facing heterogeneous graph: one feature matrix per node type.
struct HeteroGraph {
  std::vector<std::string> type_names;
  std::vector<nn::Tensor> features;
  std::vector<RelationEdges> relations;
  std::size_t target_type = 0;

  std::size_t num_types() const { return features.size(); }
  std::size_t num_nodes(std::size_t type) const { return features[type].rows(); }
};

/// SIQ graph with S/I/Q types and the four I<->Q, I<->S relations, or, for
/// the no-Edge2Node variant, S/Q types joined by featureless S<->Q edges.
/// The target type is Q.
HeteroGraph make_model_input(const graph::SIQGraph& graph, Variant variant);

/// Rescales every column to zero mean and unit variance; constant columns
/// become zero. Columns holding only 0 and 1 are left as they are.
void standardize_columns(nn::Tensor& features);

/// relu(features * weight + bias), one per node type.
nn::Var input_projection(nn::Var features, nn::Var weight, nn::Var bias);

enum class AggregationOrder { Auto, TransformFirst, AggregateFirst };

struct RelationMessage {
  const RelationEdges* edges = nullptr;
  nn::Var source_states;
  nn::Var weight;
};

/// M_i = sum over relations r of the mean over in-neighbours j under r of
/// h_j W_r. A relation without neighbours for node i contributes zero. Both
/// aggregation orders give the same value; Auto transforms on whichever
/// side has fewer nodes.
nn::Var message_pass(nn::Tape& tape, std::span<const RelationMessage> messages,
                     std::size_t num_targets, std::size_t hidden,
                     AggregationOrder order = AggregationOrder::Auto);

/// relu(M + h W_0 + b).
nn::Var update(nn::Var message, nn::Var states, nn::Var self_weight, nn::Var bias);

/// Two dense layers (relu between) over the column concatenation of parts.
nn::Var readout(std::span<const nn::Var> parts, nn::Var hidden_weight, nn::Var hidden_bias,
                nn::Var out_weight, nn::Var out_bias);

/// Architecture and parameter layout for a fixed graph schema. Parameters
/// live in a separate ParamSet so callers can snapshot them.
class R2GCN {
 public:
  R2GCN(ModelConfig config, std::vector<std::size_t> feature_dims,
        std::vector<std::string> type_names, std::vector<std::string> relation_names,
        std::size_t target_type);

  static R2GCN for_graph(const HeteroGraph& graph, const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::size_t readout_input_dim() const;

  /// Glorot-uniform weights and zero biases drawn in a fixed order.
  nn::ParamSet init_params(std::uint64_t seed) const;

  /// Logits (rows x num_classes) for the given target-type node rows.
  nn::Var forward(nn::Tape& tape, const nn::ParamSet& params, const HeteroGraph& graph,
                  std::span<const std::size_t> target_rows,
                  AggregationOrder order = AggregationOrder::Auto) const;

  static std::string input_weight(const std::string& type) { return "input." + type + ".weight"; }
  static std::string input_bias(const std::string& type) { return "input." + type + ".bias"; }
  static std::string relation_weight(std::size_t layer, const std::string& relation);
  static std::string self_weight(std::size_t layer);
  static std::string layer_bias(std::size_t layer);

 private:
  ModelConfig config_;
  std::vector<std::size_t> feature_dims_;
  std::vector<std::string> type_names_;
  std::vector<std::string> relation_names_;
  std::size_t target_type_;
};

}  // namespace siq::model
