#include <numeric>
#include <random>

#include "doctest.h"
#include "hmtgin/mrgin.hpp"
#include "support.hpp"

using namespace hmtgin;
using testutil::max_abs_diff;
using testutil::random_graph;
using testutil::random_layers;
using testutil::random_tensor;

namespace {

std::vector<Tensor> values(const std::vector<Var>& vars) {
  std::vector<Tensor> out;
  for (const Var& v : vars) out.push_back(v.value());
  return out;
}

std::vector<Tensor> forward(const MultiRelationalGraph& g,
                            const std::vector<MrginLayerParams>& layers) {
  Tape tape(false);
  return values(mrgin_forward(tape, g, layers, testutil::constants(g)));
}

double worst_diff(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) worst = std::max(worst, max_abs_diff(a[t], b[t]));
  return worst;
}

}  // namespace

TEST_CASE("vectorized layer equals the double-loop oracle on a 20-node graph") {
  std::mt19937_64 rng(20);
  const MultiRelationalGraph g = random_graph(rng, 3, 2, 20, 4, 25);
  const auto layers = random_layers(g.schema(), 4, 5, 1, 1, rng);
  CHECK(worst_diff(forward(g, layers), testutil::naive_mrgin(g, layers, g.all_features())) <
        1e-10);
}

TEST_CASE("oracle agreement across random graphs and depths") {
  std::mt19937_64 rng(100);
  std::uniform_int_distribution<std::size_t> types(1, 4), rels(1, 2), depth(1, 2), mlp(1, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const MultiRelationalGraph g = random_graph(rng, types(rng), rels(rng), 50, 3, 60);
    const auto layers = random_layers(g.schema(), 3, 4, depth(rng), mlp(rng), rng);
    worst = std::max(worst, worst_diff(forward(g, layers),
                                       testutil::naive_mrgin(g, layers, g.all_features())));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("all-zero inputs give all-zero outputs") {
  std::mt19937_64 rng(1);
  MultiRelationalGraph g = random_graph(rng, 2, 2, 10, 3);
  std::vector<Tensor> zeros;
  for (const Tensor& f : g.all_features()) zeros.push_back(Tensor::zeros_like(f));
  g = MultiRelationalGraph(g.schema(), zeros, g.all_edges());
  auto layers = random_layers(g.schema(), 3, 4, 1, 1, rng);
  for (auto& p : layers[0].mlp) p.bias.mutable_value().fill(0.0);
  layers[0].bn_beta.mutable_value().fill(0.0);
  for (const Tensor& out : forward(g, layers)) {
    for (double x : out.data()) CHECK(x == 0.0);
  }
}

TEST_CASE("permuting nodes within a type permutes output rows") {
  std::mt19937_64 rng(33);
  const MultiRelationalGraph g = random_graph(rng, 2, 2, 30, 3, 30);
  const auto layers = random_layers(g.schema(), 3, 4, 2, 1, rng);
  const std::size_t n = g.node_count(0);
  std::vector<std::size_t> perm(n);  // old index -> new index
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<Tensor> features = g.all_features();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < features[0].cols(); ++c) {
      features[0].at(perm[i], c) = g.features(0).at(i, c);
    }
  }
  std::vector<EdgeList> edges = g.all_edges();
  for (std::size_t r = 0; r < edges.size(); ++r) {
    const EdgeType& et = g.schema().edge_type(r);
    for (auto& [s, d] : edges[r]) {
      if (et.src_type == 0) s = perm[s];
      if (et.dst_type == 0) d = perm[d];
    }
  }
  const MultiRelationalGraph p(g.schema(), features, edges);
  const auto a = forward(g, layers);
  const auto b = forward(p, layers);
  double worst = max_abs_diff(a[1], b[1]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < a[0].cols(); ++c) {
      worst = std::max(worst, std::fabs(a[0].at(i, c) - b[0].at(perm[i], c)));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("a node outside the receptive field leaves an embedding unchanged") {
  // Two disconnected relations over four types. Batch statistics are per
  // type, so the changed node shares no type batch with the observed node.
  Schema s;
  for (const char* t : {"a", "b", "c", "d"}) s.add_node_type(t);
  s.add_edge_type("ab", "a", "b");
  s.add_edge_type("cd", "c", "d");
  std::mt19937_64 rng(6);
  std::vector<Tensor> f;
  for (int t = 0; t < 4; ++t) f.push_back(random_tensor(Shape{4, 3}, rng));
  std::vector<EdgeList> e(4);
  e[0] = {{0, 0}, {1, 2}, {3, 3}};
  e[2] = {{0, 1}, {2, 1}, {3, 0}};
  const auto g = MultiRelationalGraph::with_reverses(s, f, e);
  const auto layers = random_layers(g.schema(), 3, 4, 1, 1, rng);
  const auto before = forward(g, layers);

  f[0].at(2, 1) += 5.0;
  const auto after = forward(MultiRelationalGraph::with_reverses(s, f, e), layers);
  CHECK(after[2] == before[2]);
  CHECK(after[3] == before[3]);
  CHECK(max_abs_diff(after[0], before[0]) > 0.0);
}

TEST_CASE("moving an edge to another relation changes its destination") {
  Schema s;
  s.add_node_type("u");
  s.add_node_type("v");
  s.add_edge_type("r1", "u", "v");
  s.add_edge_type("r2", "u", "v");
  std::mt19937_64 rng(12);
  std::vector<Tensor> f = {random_tensor(Shape{3, 3}, rng), random_tensor(Shape{3, 3}, rng)};
  std::vector<EdgeList> e1(4), e2(4);
  e1[0] = {{0, 0}, {1, 1}};
  e1[2] = {{2, 2}};
  e2[0] = {{1, 1}};
  e2[2] = {{0, 0}, {2, 2}};
  const auto layers = random_layers(s, 3, 4, 1, 1, rng);
  const auto a = forward(MultiRelationalGraph::with_reverses(s, f, e1), layers);
  const auto b = forward(MultiRelationalGraph::with_reverses(s, f, e2), layers);
  double row0 = 0.0;
  for (std::size_t c = 0; c < 4; ++c) row0 = std::max(row0, std::fabs(a[1].at(0, c) - b[1].at(0, c)));
  CHECK(row0 > 1e-6);
}

TEST_CASE("embeddings are features concatenated with the layer output") {
  std::mt19937_64 rng(15);
  const MultiRelationalGraph g = random_graph(rng, 3, 2, 20, 4);
  const auto layers = random_layers(g.schema(), 4, 6, 1, 1, rng);
  Tape tape(false);
  const GeneratedEmbeddings emb = generate_embeddings(tape, g, layers);
  const auto out = forward(g, layers);
  CHECK(emb.width == 10);
  for (std::size_t t = 0; t < g.schema().num_node_types(); ++t) {
    const Tensor& e = emb.of(t).value();
    REQUIRE(e.cols() == 10);
    double diff = 0.0;
    for (std::size_t i = 0; i < e.rows(); ++i) {
      for (std::size_t c = 0; c < 4; ++c) diff += std::fabs(e.at(i, c) - g.features(t).at(i, c));
      for (std::size_t c = 0; c < 6; ++c) diff += std::fabs(e.at(i, 4 + c) - out[t].at(i, c));
    }
    CHECK(diff == 0.0);
  }
}

TEST_CASE("default dimensions give 32-wide embeddings") {
  std::mt19937_64 rng(2);
  const MultiRelationalGraph g = random_graph(rng, 2, 1, 10, 16);
  const auto layers = random_layers(g.schema(), 16, 16, 1, 1, rng);
  Tape tape(false);
  CHECK(generate_embeddings(tape, g, layers).width == 32);
  CHECK_THROWS(generate_embeddings(tape, g, {}));
}

TEST_CASE("width mismatches are reported") {
  std::mt19937_64 rng(3);
  const MultiRelationalGraph g = random_graph(rng, 2, 1, 10, 3);
  const auto wrong_in = random_layers(g.schema(), 5, 4, 1, 1, rng);
  Tape tape(false);
  CHECK_THROWS_AS(mrgin_forward(tape, g, wrong_in, testutil::constants(g)), ShapeError);
  auto missing_rel = random_layers(g.schema(), 3, 4, 1, 1, rng);
  missing_rel[0].relation_weights.pop_back();
  CHECK_THROWS_AS(mrgin_forward(tape, g, missing_rel, testutil::constants(g)), ShapeError);
}

TEST_CASE("embedding gradients agree with central differences") {
  std::mt19937_64 rng(44);
  const MultiRelationalGraph g = random_graph(rng, 3, 2, 20, 3, 20);
  auto layers = random_layers(g.schema(), 3, 4, 1, 2, rng);
  layers[0].epsilon.set_requires_grad(true);
  std::vector<Tensor> readout;
  for (std::size_t t = 0; t < g.schema().num_node_types(); ++t) {
    readout.push_back(random_tensor(Shape{g.node_count(t), 7}, rng));
  }
  auto loss = [&](Tape& tape) {
    const GeneratedEmbeddings emb = generate_embeddings(tape, g, layers);
    Var total = Var::constant(Tensor::scalar(0.0));
    for (std::size_t t = 0; t < readout.size(); ++t) {
      total = tape.add(total, tape.sum(tape.mul(emb.of(t), Var::constant(readout[t]))));
    }
    return total;
  };
  auto value = [&] {
    Tape t(false);
    return loss(t).value().item();
  };
  Tape tape;
  tape.backward(loss(tape));
  std::vector<Var> params = layers[0].relation_weights;
  params.push_back(layers[0].self_weight);
  params.push_back(layers[0].epsilon);
  for (const auto& p : layers[0].mlp) {
    params.push_back(p.weight);
    params.push_back(p.bias);
  }
  params.push_back(layers[0].bn_gamma);
  params.push_back(layers[0].bn_beta);
  for (const Var& p : params) {
    CHECK(testutil::max_rel_error(p.grad(), testutil::numeric_gradient(p, value)) < 1e-5);
  }
}

TEST_CASE("dropout only acts in training mode") {
  std::mt19937_64 rng(9);
  const MultiRelationalGraph g = random_graph(rng, 2, 1, 20, 3, 20);
  auto layers = random_layers(g.schema(), 3, 4, 1, 1, rng);
  layers[0].dropout = 0.5;
  const auto plain = forward(g, layers);
  std::mt19937_64 drop_rng(1);
  Tape tape(false);
  const auto dropped = values(mrgin_forward(tape, g, layers, testutil::constants(g),
                                            ForwardMode{true, &drop_rng}));
  std::size_t zeros = 0;
  for (double x : dropped[0].data()) zeros += x == 0.0;
  CHECK(zeros > 0);
  CHECK_THROWS(mrgin_forward(tape, g, layers, testutil::constants(g), ForwardMode{true, nullptr}));
  CHECK(forward(g, layers) == plain);
}
