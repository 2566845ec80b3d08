#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "siq/model.hpp"
#include "siq/train.hpp"

using namespace siq;
using namespace siq::model;
using nn::Tensor;
using nn::Var;

namespace {

RelationEdges edges(std::vector<std::size_t> src, std::vector<std::size_t> dst) {
  return RelationEdges{"r", 0, 0, std::move(src), std::move(dst)};
}

ModelConfig small(Variant v, std::size_t layers = 2, std::size_t hidden = 4) {
  ModelConfig c;
  c.layers = layers;
  c.hidden = hidden;
  c.readout_hidden = 5;
  c.variant = v;
  return c;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

}  // namespace

TEST_CASE("message: two neighbours under one identity relation") {
  nn::Tape tape;
  auto rel = edges({0, 1}, {0, 0});
  Var h = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var w = tape.constant(Tensor::identity(2));
  std::vector<RelationMessage> one{{&rel, h, w}};
  Tensor m = message_pass(tape, one, 2, 2).value();
  CHECK(m == Tensor::matrix(2, 2, {0.5, 0.5, 0, 0}));

  // A second relation contributing the same mean doubles the message.
  auto rel2 = edges({1, 0}, {0, 0});
  std::vector<RelationMessage> two{{&rel, h, w}, {&rel2, h, w}};
  CHECK(message_pass(tape, two, 2, 2).value() == Tensor::matrix(2, 2, {1, 1, 0, 0}));

  // No relations at all: zero message.
  CHECK(message_pass(tape, {}, 3, 2).value() == Tensor::zeros(3, 2));
}

TEST_CASE("message: both aggregation orders agree") {
  std::mt19937_64 rng(4);
  nn::Tape tape;
  auto rel = edges({0, 1, 2, 2, 4}, {1, 1, 0, 2, 1});
  Var h = tape.constant(siq::testing::random_tensor(5, 3, rng));
  Var w = tape.constant(siq::testing::random_tensor(3, 4, rng));
  std::vector<RelationMessage> msgs{{&rel, h, w}};
  Tensor a = message_pass(tape, msgs, 3, 4, AggregationOrder::TransformFirst).value();
  Tensor b = message_pass(tape, msgs, 3, 4, AggregationOrder::AggregateFirst).value();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a.values()[i] - b.values()[i]) < 1e-12);
}

TEST_CASE("update: hand fixtures") {
  nn::Tape tape;
  Var zero_m = tape.constant(Tensor::zeros(1, 2));
  Var h = tape.constant(Tensor::matrix(1, 2, {1, -1}));
  Var w0 = tape.constant(Tensor::identity(2));
  Var b = tape.constant(Tensor::zeros(1, 2));
  CHECK(update(zero_m, h, w0, b).value() == Tensor::matrix(1, 2, {1, 0}));

  Var z = tape.constant(Tensor::zeros(1, 2));
  CHECK(update(z, z, tape.constant(Tensor::zeros(2, 2)), b).value() == Tensor::zeros(1, 2));

  Var small_m = tape.constant(Tensor::matrix(1, 2, {0.3, -0.2}));
  Var small_h = tape.constant(Tensor::matrix(1, 2, {0.1, 0.4}));
  Var neg = tape.constant(Tensor::matrix(1, 2, {-10, -10}));
  CHECK(update(small_m, small_h, w0, neg).value() == Tensor::zeros(1, 2));
}

TEST_CASE("input projection") {
  nn::Tape tape;
  Var f = tape.constant(Tensor::zeros(2, 3));
  CHECK(input_projection(f, tape.constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6})),
                         tape.constant(Tensor::zeros(1, 2)))
            .value() == Tensor::zeros(2, 2));
  Tensor raw = Tensor::matrix(2, 2, {1.5, -2, 0, 3});
  CHECK(input_projection(tape.constant(raw), tape.constant(Tensor::identity(2)),
                         tape.constant(Tensor::zeros(1, 2)))
            .value() == Tensor::matrix(2, 2, {1.5, 0, 0, 3}));
}

TEST_CASE("readout dimensions") {
  R2GCN full(ModelConfig{}, {42, 20, 9}, {"S", "I", "Q"}, {"a", "b", "c", "d"}, 2);
  CHECK(full.readout_input_dim() == 9 + 4 * 128);
  CHECK(full.readout_input_dim() == 521);
  ModelConfig e2n;
  e2n.variant = Variant::RGCN_E2N;
  CHECK(R2GCN(e2n, {42, 20, 9}, {"S", "I", "Q"}, {"a", "b", "c", "d"}, 2).readout_input_dim() ==
        128);
  auto params = full.init_params(1);
  CHECK(params.value(R2GCN::input_weight("S")).shape() == std::vector<std::size_t>{42, 128});
  CHECK(params.value(R2GCN::input_weight("I")).shape() == std::vector<std::size_t>{20, 128});
  CHECK(params.value(R2GCN::input_weight("Q")).shape() == std::vector<std::size_t>{9, 128});
  CHECK(params.value("readout.hidden.weight").rows() == 521);
  CHECK_THROWS(R2GCN(ModelConfig{0}, {1}, {"Q"}, {}, 0));
}

TEST_CASE("forward: zero parameters give uniform predictions") {
  auto g = siq::testing::random_siq_graph(1, 4, 5, 8);
  auto input = make_model_input(g, Variant::R2GCN);
  auto m = R2GCN::for_graph(input, small(Variant::R2GCN));
  auto params = m.init_params(3);
  for (auto& [name, p] : params) {
    for (auto& v : p.value.values()) v = 0.0;
  }
  nn::Tape tape;
  Tensor probs = nn::softmax_rows(m.forward(tape, params, input, all_rows(5)).value());
  for (double p : probs.values()) CHECK(p == 0.25);
}

TEST_CASE("forward: feature dimension mismatch is rejected") {
  auto g = siq::testing::random_siq_graph(1, 4, 5, 8);
  auto input = make_model_input(g, Variant::R2GCN);
  auto m = R2GCN::for_graph(input, small(Variant::R2GCN));
  auto params = m.init_params(3);
  input.features[1] = Tensor::zeros(input.num_nodes(1), 7);
  nn::Tape tape;
  CHECK_THROWS_WITH(m.forward(tape, params, input, all_rows(5)), doctest::Contains("dimension"));
}

TEST_CASE("forward: an isolated question depends only on itself") {
  // q3 has no interactions.
  auto net = siq::testing::network({"a", "b"}, {"q0", "q1", "q2", "q3"},
                                   {{0, 0, 1}, {1, 1, 2}, {0, 2, 3}, {1, 0, 4}});
  std::mt19937_64 rng(2);
  auto g = graph::edge2node(net, siq::testing::random_tensor(2, 3, rng),
                            siq::testing::random_tensor(4, 3, rng));
  for (auto v : {Variant::R2GCN, Variant::RGCN_E2N, Variant::RGCN_NoE2N}) {
    auto input = make_model_input(g, v);
    auto m = R2GCN::for_graph(input, small(v, 3));
    auto params = m.init_params(5);
    std::vector<std::size_t> row{3};
    nn::Tape t1;
    Tensor before = m.forward(t1, params, input, row).value();
    auto changed = input;
    for (std::size_t t = 0; t < changed.num_types(); ++t) {
      for (std::size_t r = 0; r < changed.num_nodes(t); ++r) {
        if (t == changed.target_type && r == 3) continue;
        for (std::size_t c = 0; c < changed.features[t].cols(); ++c) changed.features[t](r, c) += 1.7;
      }
    }
    nn::Tape t2;
    CHECK(m.forward(t2, params, changed, row).value() == before);
  }
}

TEST_CASE("forward: permutation equivariance") {
  auto g = siq::testing::random_siq_graph(8, 5, 6, 12);
  for (auto v : {Variant::R2GCN, Variant::RGCN_E2N, Variant::RGCN_NoE2N}) {
    auto input = make_model_input(g, v);
    auto m = R2GCN::for_graph(input, small(v));
    auto params = m.init_params(7);
    const std::size_t q = input.target_type;
    const std::size_t n = input.num_nodes(q);
    std::vector<std::size_t> perm{4, 2, 5, 0, 1, 3};  // old -> new
    auto permuted = input;
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < input.features[q].cols(); ++c) {
        permuted.features[q](perm[r], c) = input.features[q](r, c);
      }
    }
    for (auto& rel : permuted.relations) {
      if (rel.src_type == q) for (auto& s : rel.src) s = perm[s];
      if (rel.dst_type == q) for (auto& d : rel.dst) d = perm[d];
    }
    nn::Tape t1, t2;
    Tensor a = m.forward(t1, params, input, all_rows(n)).value();
    Tensor b = m.forward(t2, params, permuted, all_rows(n)).value();
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(b(perm[r], c) == doctest::Approx(a(r, c)).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward: locality") {
  // Chain q0 - i0 - s0 - i1 - q1 - i2 - s1 - i3 - q2: q2 is 8 hops from q0.
  auto net = siq::testing::network({"s0", "s1"}, {"q0", "q1", "q2"},
                                   {{0, 0, 1}, {0, 1, 2}, {1, 1, 3}, {1, 2, 4}});
  std::mt19937_64 rng(6);
  auto g = graph::edge2node(net, siq::testing::random_tensor(2, 3, rng),
                            siq::testing::random_tensor(3, 3, rng));
  auto input = make_model_input(g, Variant::R2GCN);
  // Two layers reach at most 2 hops; the readout adds none.
  auto m = R2GCN::for_graph(input, small(Variant::R2GCN, 2));
  auto params = m.init_params(1);
  std::vector<std::size_t> row{0};
  nn::Tape t1;
  Tensor before = m.forward(t1, params, input, row).value();
  auto far = input;
  for (std::size_t c = 0; c < 3; ++c) far.features[2](2, c) += 5.0;  // q2
  for (std::size_t c = 0; c < 3; ++c) far.features[0](1, c) += 5.0;  // s1
  nn::Tape t2;
  CHECK(m.forward(t2, params, far, row).value() == before);
  auto near = input;
  for (std::size_t c = 0; c < 3; ++c) near.features[0](0, c) += 5.0;  // s0, 2 hops
  nn::Tape t3;
  CHECK_FALSE(m.forward(t3, params, near, row).value() == before);
}

TEST_CASE("forward: no-Edge2Node variant uses two relations") {
  auto g = siq::testing::random_siq_graph(2, 4, 5, 9);
  auto input = make_model_input(g, Variant::RGCN_NoE2N);
  CHECK(input.num_types() == 2);
  CHECK(input.relations.size() == 2);
  CHECK(input.relations[0].src.size() == 9);
  auto m = R2GCN::for_graph(input, small(Variant::RGCN_NoE2N));
  nn::Tape tape;
  CHECK(m.forward(tape, m.init_params(1), input, all_rows(5)).value().cols() == 4);
  CHECK(make_model_input(g, Variant::R2GCN).relations.size() == 4);
}

TEST_CASE("forward: dual routes agree end to end") {
  auto g = siq::testing::random_siq_graph(5, 6, 7, 15);
  auto input = make_model_input(g, Variant::R2GCN);
  auto m = R2GCN::for_graph(input, small(Variant::R2GCN, 3));
  auto params = m.init_params(2);
  nn::Tape a, b;
  Tensor x = m.forward(a, params, input, all_rows(7), AggregationOrder::TransformFirst).value();
  Tensor y = m.forward(b, params, input, all_rows(7), AggregationOrder::AggregateFirst).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x.values()[i] - y.values()[i]) < 1e-12);
}

TEST_CASE("message: tied weights and equal features give equal messages") {
  // Targets 0 and 1 both have two in-neighbours under relation A and one
  // under relation B; target 2 has a different profile.
  auto a = edges({0, 1, 2, 3, 0}, {0, 0, 1, 1, 2});
  auto b = edges({4, 0}, {0, 1});
  nn::Tape tape;
  Var h = tape.constant(Tensor({5, 3}, 0.7));
  std::mt19937_64 rng(3);
  Var w = tape.constant(siq::testing::random_tensor(3, 3, rng));
  std::vector<RelationMessage> msgs{{&a, h, w}, {&b, h, w}};
  Tensor m = message_pass(tape, msgs, 3, 3).value();
  for (std::size_t c = 0; c < 3; ++c) CHECK(m(0, c) == m(1, c));
}

TEST_CASE("end-to-end gradient on a small graph") {
  auto g = siq::testing::random_siq_graph(12, 5, 8, 14);
  for (auto v : {Variant::R2GCN, Variant::RGCN_E2N, Variant::RGCN_NoE2N}) {
    CAPTURE(to_string(v));
    auto input = make_model_input(g, v);
    auto m = R2GCN::for_graph(input, small(v, 2, 3));
    std::vector<std::size_t> rows{0, 2, 3, 5, 7};
    std::vector<int> labels{0, 3, 1, 2, 1};
    auto loss = [&](nn::Tape& t, const nn::ParamSet& p) {
      return nn::cross_entropy(m.forward(t, p, input, rows), labels);
    };
    CHECK(siq::testing::check_gradients(siq::testing::jitter(m.init_params(4), 9), loss).max_rel_error < 1e-3);
  }
}

TEST_CASE("standardize columns") {
  Tensor t = Tensor::matrix(3, 3, {1, 5, 0, 2, 5, 1, 3, 5, 0});
  standardize_columns(t);
  CHECK(t(0, 0) == doctest::Approx(-std::sqrt(1.5)));
  CHECK(t(1, 1) == 0.0);
  // Indicator columns are kept as they are.
  CHECK(t(1, 2) == 1.0);
  CHECK(t(0, 2) == 0.0);
}
