#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "hmtgin/autodiff.hpp"
#include "hmtgin/graph.hpp"

namespace hmtgin {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.01;

struct LinearParams {
  Var weight;  // [out x in]
  Var bias;    // [out]
};

// One MRGIN layer:
//   h_i' = act(BN(MLP(act(sum_r sum_{j in N_i^r} W_r h_j + (1 + eps) W_0 h_i))))
// W_0, the MLP and the BN affine parameters are shared by all node types;
// BN statistics are computed per node type.
struct MrginLayerParams {
  std::vector<Var> relation_weights;  // one [out x in] per edge type
  Var self_weight;                    // [out x in]
  Var epsilon;                        // scalar
  std::vector<LinearParams> mlp;      // affine layers, act between them
  Var bn_gamma;                       // [out]
  Var bn_beta;                        // [out]
  double slope = kLeakySlope;
  double dropout = 0.0;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
};

MrginLayerParams init_mrgin_layer(const Schema& schema, std::size_t in_dim,
                                  std::size_t out_dim, std::size_t mlp_layers,
                                  bool epsilon_trainable, double epsilon_value,
                                  std::mt19937_64& rng);

struct ForwardMode {
  bool training = false;
  std::mt19937_64* dropout_rng = nullptr;  // required when training with dropout
};

// Final-layer representation of every node, one matrix per node type.
std::vector<Var> mrgin_forward(Tape& tape, const MultiRelationalGraph& g,
                               std::span<const MrginLayerParams> layers,
                               std::span<const Var> h0,
                               const ForwardMode& mode = {});

// Initial features concatenated with the final MRGIN output, per node type.
struct GeneratedEmbeddings {
  std::vector<Var> per_type;
  std::size_t width = 0;

  const Var& of(std::size_t node_type) const { return per_type.at(node_type); }
};

GeneratedEmbeddings generate_embeddings(Tape& tape,
                                        const MultiRelationalGraph& g,
                                        std::span<const MrginLayerParams> layers,
                                        const ForwardMode& mode = {});

}  // namespace hmtgin
