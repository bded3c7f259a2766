#include "hmtgin/mrgin.hpp"

#include <cmath>
#include <stdexcept>

namespace hmtgin {

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(Shape{rows, cols});
  for (double& x : t.data()) x = dist(rng);
  return t;
}

Var dropout(Tape& tape, const Var& x, double rate, std::mt19937_64& rng) {
  Tensor mask(x.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (double& m : mask.data()) m = keep(rng) ? scale : 0.0;
  return tape.mul(x, Var::constant(std::move(mask)));
}

Var layer_forward_type(Tape& tape, const MultiRelationalGraph& g,
                       const MrginLayerParams& layer,
                       std::span<const Var> transformed_by_relation,
                       const Var& self_term, std::size_t node_type) {
  Var pre = self_term;
  const Schema& schema = g.schema();
  for (std::size_t r = 0; r < schema.num_edge_types(); ++r) {
    const EdgeType& et = schema.edge_type(r);
    if (et.dst_type != node_type || g.edges(r).empty()) continue;
    std::vector<std::size_t> src, dst;
    src.reserve(g.edges(r).size());
    dst.reserve(g.edges(r).size());
    for (const auto& [s, d] : g.edges(r)) {
      src.push_back(s);
      dst.push_back(d);
    }
    Var messages = tape.gather_rows(transformed_by_relation[r], src);
    pre = tape.scatter_add_rows(pre, dst, messages);
  }
  Var h = tape.leaky_relu(pre, layer.slope);
  for (std::size_t m = 0; m < layer.mlp.size(); ++m) {
    if (m > 0) h = tape.leaky_relu(h, layer.slope);
    h = tape.add(tape.matmul(h, tape.transpose(layer.mlp[m].weight)),
                 layer.mlp[m].bias);
  }
  h = tape.batch_norm(h, layer.bn_gamma, layer.bn_beta, kBatchNormEps);
  return tape.leaky_relu(h, layer.slope);
}

}  // namespace

std::size_t MrginLayerParams::in_dim() const {
  return self_weight.value().cols();
}

std::size_t MrginLayerParams::out_dim() const {
  return self_weight.value().rows();
}

MrginLayerParams init_mrgin_layer(const Schema& schema, std::size_t in_dim,
                                  std::size_t out_dim, std::size_t mlp_layers,
                                  bool epsilon_trainable, double epsilon_value,
                                  std::mt19937_64& rng) {
  MrginLayerParams layer;
  for (std::size_t r = 0; r < schema.num_edge_types(); ++r) {
    layer.relation_weights.push_back(
        Var::parameter(uniform_matrix(out_dim, in_dim, rng)));
  }
  layer.self_weight = Var::parameter(uniform_matrix(out_dim, in_dim, rng));
  layer.epsilon = Var::constant(Tensor::scalar(epsilon_value));
  layer.epsilon.set_requires_grad(epsilon_trainable);
  for (std::size_t m = 0; m < mlp_layers; ++m) {
    layer.mlp.push_back(LinearParams{
        Var::parameter(uniform_matrix(out_dim, out_dim, rng)),
        Var::parameter(Tensor(Shape{out_dim}))});
  }
  layer.bn_gamma = Var::parameter(Tensor(Shape{out_dim}, 1.0));
  layer.bn_beta = Var::parameter(Tensor(Shape{out_dim}, 0.0));
  return layer;
}

std::vector<Var> mrgin_forward(Tape& tape, const MultiRelationalGraph& g,
                               std::span<const MrginLayerParams> layers,
                               std::span<const Var> h0,
                               const ForwardMode& mode) {
  const Schema& schema = g.schema();
  if (h0.size() != schema.num_node_types()) {
    throw ShapeError("mrgin_forward: expected " +
                     std::to_string(schema.num_node_types()) +
                     " feature matrices, got " + std::to_string(h0.size()));
  }
  std::vector<Var> h(h0.begin(), h0.end());
  for (const MrginLayerParams& layer : layers) {
    if (layer.relation_weights.size() != schema.num_edge_types()) {
      throw ShapeError("mrgin_forward: layer has " +
                       std::to_string(layer.relation_weights.size()) +
                       " relation matrices for " +
                       std::to_string(schema.num_edge_types()) + " edge types");
    }
    const std::size_t d_in = layer.in_dim();
    const std::size_t d_out = layer.out_dim();
    for (std::size_t t = 0; t < h.size(); ++t) {
      if (h[t].value().cols() != d_in) {
        throw ShapeError("mrgin_forward: node type '" + schema.node_type_name(t) +
                         "' has width " + std::to_string(h[t].value().cols()) +
                         ", layer expects " + std::to_string(d_in));
      }
    }

    // W_r h_j for every source node of every relation, computed once.
    std::vector<Var> transformed(schema.num_edge_types());
    for (std::size_t r = 0; r < schema.num_edge_types(); ++r) {
      if (g.edges(r).empty()) continue;
      const Var& w = layer.relation_weights[r];
      if (w.value().rows() != d_out || w.value().cols() != d_in) {
        throw ShapeError("mrgin_forward: relation matrix for '" +
                         schema.edge_type(r).name + "' has shape " +
                         shape_string(w.shape()));
      }
      transformed[r] = tape.matmul(h[schema.edge_type(r).src_type],
                                   tape.transpose(w));
    }
    const Var self_t = tape.transpose(layer.self_weight);
    const Var self_scale =
        tape.add(layer.epsilon, Var::constant(Tensor::scalar(1.0)));

    std::vector<Var> next(h.size());
    for (std::size_t t = 0; t < h.size(); ++t) {
      if (g.node_count(t) == 0) {
        next[t] = Var::constant(Tensor(Shape{0, d_out}));
        continue;
      }
      Var self_term = tape.mul(tape.matmul(h[t], self_t), self_scale);
      next[t] = layer_forward_type(tape, g, layer, transformed, self_term, t);
      if (mode.training && layer.dropout > 0.0) {
        if (mode.dropout_rng == nullptr) {
          throw std::invalid_argument("dropout requires a random generator");
        }
        next[t] = dropout(tape, next[t], layer.dropout, *mode.dropout_rng);
      }
    }
    h = std::move(next);
  }
  return h;
}

GeneratedEmbeddings generate_embeddings(Tape& tape,
                                        const MultiRelationalGraph& g,
                                        std::span<const MrginLayerParams> layers,
                                        const ForwardMode& mode) {
  if (layers.empty()) {
    throw std::invalid_argument("generate_embeddings needs at least one layer");
  }
  std::vector<Var> h0;
  for (std::size_t t = 0; t < g.schema().num_node_types(); ++t) {
    h0.push_back(Var::constant(g.features(t)));
  }
  std::vector<Var> out = mrgin_forward(tape, g, layers, h0, mode);
  GeneratedEmbeddings emb;
  emb.width = layers.front().in_dim() + layers.back().out_dim();
  for (std::size_t t = 0; t < out.size(); ++t) {
    const Var parts[] = {h0[t], out[t]};
    emb.per_type.push_back(tape.concat(parts, 1));
  }
  return emb;
}

}  // namespace hmtgin
