#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hmtgin/autodiff.hpp"
#include "hmtgin/graph.hpp"
#include "hmtgin/mrgin.hpp"

namespace testutil {

using namespace hmtgin;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = normal(rng);
  return t;
}

// Node types t0..t{types-1}; each forward edge type gets random endpoints and
// random distinct edges. Reverses are materialized.
inline MultiRelationalGraph random_graph(std::mt19937_64& rng, std::size_t types,
                                         std::size_t edge_types,
                                         std::size_t max_nodes, std::size_t dim,
                                         std::size_t max_edges = 40) {
  Schema schema;
  for (std::size_t t = 0; t < types; ++t) schema.add_node_type("t" + std::to_string(t));
  std::uniform_int_distribution<std::size_t> pick_type(0, types - 1);
  std::vector<std::pair<std::size_t, std::size_t>> ends;
  std::vector<std::size_t> forward;
  for (std::size_t r = 0; r < edge_types; ++r) {
    const std::size_t s = pick_type(rng), d = pick_type(rng);
    forward.push_back(schema.add_edge_type("e" + std::to_string(r), "t" + std::to_string(s),
                                           "t" + std::to_string(d)));
    ends.push_back({s, d});
  }
  const std::size_t per_type = std::max<std::size_t>(1, max_nodes / types);
  std::uniform_int_distribution<std::size_t> count(1, per_type);
  std::vector<std::size_t> counts;
  std::vector<Tensor> features;
  for (std::size_t t = 0; t < types; ++t) {
    counts.push_back(count(rng));
    features.push_back(random_tensor(Shape{counts.back(), dim}, rng));
  }
  std::vector<EdgeList> edges(schema.num_edge_types());
  for (std::size_t r = 0; r < edge_types; ++r) {
    const auto [s, d] = ends[r];
    std::uniform_int_distribution<std::size_t> src(0, counts[s] - 1), dst(0, counts[d] - 1);
    std::uniform_int_distribution<std::size_t> how_many(0, max_edges);
    EdgeList list;
    const std::size_t n = how_many(rng);
    for (std::size_t k = 0; k < n; ++k) list.push_back({src(rng), dst(rng)});
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    edges[forward[r]] = std::move(list);
  }
  return MultiRelationalGraph::with_reverses(std::move(schema), std::move(features),
                                             std::move(edges));
}

inline GeneratedEmbeddings constant_embeddings(std::vector<Tensor> per_type) {
  GeneratedEmbeddings emb;
  emb.width = per_type.empty() ? 0 : per_type.front().cols();
  for (Tensor& t : per_type) emb.per_type.push_back(Var::constant(std::move(t)));
  return emb;
}

// Central-difference derivative of f with respect to every entry of x.
inline Tensor numeric_gradient(Var x, const std::function<double()>& f,
                               double step = 1e-5) {
  Tensor g = Tensor::zeros_like(x.value());
  for (std::size_t i = 0; i < g.numel(); ++i) {
    const double keep = x.value()[i];
    x.mutable_value()[i] = keep + step;
    const double up = f();
    x.mutable_value()[i] = keep - step;
    const double down = f();
    x.mutable_value()[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double max_rel_error(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double scale = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    worst = std::max(worst, std::fabs(a[i] - b[i]));
  }
  return worst;
}

inline double leaky(double x, double slope = 0.01) { return x > 0.0 ? x : slope * x; }

// The layer rule written node by node and edge by edge, long double accumulators.
inline std::vector<Tensor> naive_mrgin(const MultiRelationalGraph& g,
                                       const std::vector<MrginLayerParams>& layers,
                                       std::vector<Tensor> h) {
  const Schema& s = g.schema();
  for (const MrginLayerParams& layer : layers) {
    const Tensor& w0 = layer.self_weight.value();
    const std::size_t dout = w0.rows(), din = w0.cols();
    const double eps = layer.epsilon.value()[0];
    std::vector<Tensor> next;
    for (std::size_t t = 0; t < s.num_node_types(); ++t) {
      const std::size_t n = g.node_count(t);
      Tensor pre(Shape{n, dout});
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t o = 0; o < dout; ++o) {
          long double acc = 0.0L;
          for (std::size_t c = 0; c < din; ++c) {
            acc += (1.0L + eps) * w0.at(o, c) * h[t].at(i, c);
          }
          for (std::size_t r = 0; r < s.num_edge_types(); ++r) {
            if (s.edge_type(r).dst_type != t) continue;
            const Tensor& wr = layer.relation_weights[r].value();
            const Tensor& hs = h[s.edge_type(r).src_type];
            for (const auto& [src, dst] : g.edges(r)) {
              if (dst != i) continue;
              for (std::size_t c = 0; c < din; ++c) acc += wr.at(o, c) * hs.at(src, c);
            }
          }
          pre.at(i, o) = leaky(static_cast<double>(acc), layer.slope);
        }
      }
      Tensor cur = pre;
      for (std::size_t m = 0; m < layer.mlp.size(); ++m) {
        const Tensor& w = layer.mlp[m].weight.value();
        const Tensor& b = layer.mlp[m].bias.value();
        Tensor out(Shape{n, w.rows()});
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t o = 0; o < w.rows(); ++o) {
            long double acc = b[o];
            for (std::size_t c = 0; c < w.cols(); ++c) {
              const double x = m > 0 ? leaky(cur.at(i, c), layer.slope) : cur.at(i, c);
              acc += w.at(o, c) * x;
            }
            out.at(i, o) = static_cast<double>(acc);
          }
        }
        cur = std::move(out);
      }
      const Tensor& gamma = layer.bn_gamma.value();
      const Tensor& beta = layer.bn_beta.value();
      for (std::size_t c = 0; c < cur.cols() && n > 0; ++c) {
        long double mean = 0.0L, var = 0.0L;
        for (std::size_t i = 0; i < n; ++i) mean += cur.at(i, c);
        mean /= n;
        for (std::size_t i = 0; i < n; ++i) var += (cur.at(i, c) - mean) * (cur.at(i, c) - mean);
        var /= n;
        for (std::size_t i = 0; i < n; ++i) {
          const long double z = (cur.at(i, c) - mean) / std::sqrt(var + kBatchNormEps);
          cur.at(i, c) = leaky(static_cast<double>(gamma[c] * z + beta[c]), layer.slope);
        }
      }
      next.push_back(std::move(cur));
    }
    h = std::move(next);
  }
  return h;
}

// Layer with non-trivial BN affine parameters so the oracle exercises them.
inline std::vector<MrginLayerParams> random_layers(const Schema& schema, std::size_t din,
                                                   std::size_t dout, std::size_t count,
                                                   std::size_t mlp_layers,
                                                   std::mt19937_64& rng) {
  std::vector<MrginLayerParams> layers;
  std::size_t in = din;
  for (std::size_t l = 0; l < count; ++l) {
    MrginLayerParams layer = init_mrgin_layer(schema, in, dout, mlp_layers, false, 0.0, rng);
    layer.epsilon.mutable_value()[0] = 0.3;
    for (LinearParams& p : layer.mlp) p.bias.mutable_value() = random_tensor(Shape{dout}, rng, 0.2);
    layer.bn_gamma.mutable_value() = random_tensor(Shape{dout}, rng, 0.5);
    layer.bn_beta.mutable_value() = random_tensor(Shape{dout}, rng, 0.5);
    layers.push_back(std::move(layer));
    in = dout;
  }
  return layers;
}

inline std::vector<Var> constants(const MultiRelationalGraph& g) {
  std::vector<Var> out;
  for (const Tensor& f : g.all_features()) out.push_back(Var::constant(f));
  return out;
}

}  // namespace testutil
