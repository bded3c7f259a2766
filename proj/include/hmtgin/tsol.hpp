#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "hmtgin/autodiff.hpp"
#include "hmtgin/graph.hpp"
#include "hmtgin/mrgin.hpp"

namespace hmtgin {

inline constexpr double kDefaultPositiveWeight = 2.0;

// DistMult head: D_t kept as its diagonal.
struct LinkTaskParams {
  Var diagonal;  // [k]
  double positive_weight = kDefaultPositiveWeight;
};

struct RankTaskParams {
  Var weight;  // [2k]
  Var bias;    // scalar
  double slope = kLeakySlope;
};

struct ClfTaskParams {
  Var weight;  // [K x k]
  Var bias;    // [K]

  std::size_t classes() const { return weight.value().rows(); }
};

LinkTaskParams init_link_params(std::size_t width, std::mt19937_64& rng);
RankTaskParams init_rank_params(std::size_t width, std::mt19937_64& rng);
ClfTaskParams init_clf_params(std::size_t width, std::size_t classes,
                              std::mt19937_64& rng);

struct LinkPair {
  GlobalNodeId src;
  GlobalNodeId dst;

  friend auto operator<=>(const LinkPair&, const LinkPair&) = default;
};

struct RankSample {
  GlobalNodeId question;
  std::vector<GlobalNodeId> answers;
  std::size_t accepted = 0;  // position in answers
};

inline constexpr std::size_t kMinAnswers = 8;

// h_i^T diag(D) h_j.
double link_score(std::span<const double> hi, std::span<const double> hj,
                  std::span<const double> diagonal);

// Scores for a batch of pairs sharing endpoint types; [n].
Var link_scores(Tape& tape, std::span<const LinkPair> pairs,
                const GeneratedEmbeddings& emb, const LinkTaskParams& params);

// Weighted binary cross-entropy over positives and sampled negatives.
Var link_loss(Tape& tape, std::span<const LinkPair> positives,
              std::span<const LinkPair> negatives,
              const GeneratedEmbeddings& emb, const LinkTaskParams& params);

// act(w^T [h_q ; h_a] + b) for every answer of every sample, flattened in
// sample order; [sum |A_i|].
Var rank_scores(Tape& tape, std::span<const RankSample> samples,
                const GeneratedEmbeddings& emb, const RankTaskParams& params);
std::vector<double> rank_scores(const RankSample& sample,
                                const GeneratedEmbeddings& emb,
                                const RankTaskParams& params);

// Mean over samples of -(1/|A|) sum_{j != y} log f(R_y - R_j).
Var rank_loss(Tape& tape, std::span<const RankSample> samples,
              const GeneratedEmbeddings& emb, const RankTaskParams& params);

// [n x K] logits W h + b.
Var clf_logits(Tape& tape, std::span<const GlobalNodeId> nodes,
               const GeneratedEmbeddings& emb, const ClfTaskParams& params);
Var clf_loss(Tape& tape, std::span<const GlobalNodeId> nodes,
             std::span<const std::size_t> labels,
             const GeneratedEmbeddings& emb, const ClfTaskParams& params);

// Rows of `nodes` (all of one type) gathered from the embeddings.
Var gather_embeddings(Tape& tape, std::span<const GlobalNodeId> nodes,
                      const GeneratedEmbeddings& emb);

}  // namespace hmtgin
