#include "hmtgin/tsol.hpp"

#include <cmath>
#include <stdexcept>

namespace hmtgin {

LinkTaskParams init_link_params(std::size_t width, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor d(Shape{width});
  for (double& x : d.data()) x = normal(rng);
  return LinkTaskParams{Var::parameter(std::move(d)), kDefaultPositiveWeight};
}

RankTaskParams init_rank_params(std::size_t width, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * width));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w(Shape{2 * width});
  for (double& x : w.data()) x = dist(rng);
  return RankTaskParams{Var::parameter(std::move(w)),
                        Var::parameter(Tensor::scalar(0.0)), kLeakySlope};
}

ClfTaskParams init_clf_params(std::size_t width, std::size_t classes,
                              std::mt19937_64& rng) {
  if (classes < 2) throw std::invalid_argument("classifier needs K >= 2");
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w(Shape{classes, width});
  for (double& x : w.data()) x = dist(rng);
  return ClfTaskParams{Var::parameter(std::move(w)),
                       Var::parameter(Tensor(Shape{classes}))};
}

double link_score(std::span<const double> hi, std::span<const double> hj,
                  std::span<const double> diagonal) {
  if (hi.size() != diagonal.size() || hj.size() != diagonal.size()) {
    throw ShapeError("link_score: widths " + std::to_string(hi.size()) + ", " +
                     std::to_string(hj.size()) + " and diagonal " +
                     std::to_string(diagonal.size()));
  }
  double s = 0.0;
  for (std::size_t d = 0; d < diagonal.size(); ++d) s += hi[d] * diagonal[d] * hj[d];
  return s;
}

Var gather_embeddings(Tape& tape, std::span<const GlobalNodeId> nodes,
                      const GeneratedEmbeddings& emb) {
  if (nodes.empty()) throw std::invalid_argument("no nodes to gather");
  const std::size_t type = nodes.front().node_type;
  std::vector<std::size_t> idx;
  idx.reserve(nodes.size());
  for (const GlobalNodeId& n : nodes) {
    if (n.node_type != type) {
      throw std::invalid_argument("gather_embeddings: mixed node types");
    }
    idx.push_back(n.local_index);
  }
  return tape.gather_rows(emb.of(type), idx);
}

Var link_scores(Tape& tape, std::span<const LinkPair> pairs,
                const GeneratedEmbeddings& emb, const LinkTaskParams& params) {
  if (params.diagonal.value().numel() != emb.width) {
    throw ShapeError("link head width " +
                     std::to_string(params.diagonal.value().numel()) +
                     " does not match embedding width " +
                     std::to_string(emb.width));
  }
  std::vector<GlobalNodeId> src, dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const LinkPair& p : pairs) {
    src.push_back(p.src);
    dst.push_back(p.dst);
  }
  Var hi = gather_embeddings(tape, src, emb);
  Var hj = gather_embeddings(tape, dst, emb);
  return tape.sum_rows(tape.mul(tape.mul(hi, params.diagonal), hj));
}

Var link_loss(Tape& tape, std::span<const LinkPair> positives,
              std::span<const LinkPair> negatives,
              const GeneratedEmbeddings& emb, const LinkTaskParams& params) {
  const std::size_t n = positives.size() + negatives.size();
  if (n == 0) throw std::invalid_argument("link_loss: no pairs");
  std::vector<LinkPair> pairs(positives.begin(), positives.end());
  pairs.insert(pairs.end(), negatives.begin(), negatives.end());
  Var s = link_scores(tape, pairs, emb, params);

  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor pos_coef(Shape{n}), neg_coef(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    if (i < positives.size()) {
      pos_coef[i] = params.positive_weight * inv_n;
    } else {
      neg_coef[i] = inv_n;
    }
  }
  Var log_p = tape.log_sigmoid(s);
  Var log_not_p = tape.log_sigmoid(tape.scale(s, -1.0));
  Var total =
      tape.add(tape.sum(tape.mul(log_p, Var::constant(std::move(pos_coef)))),
               tape.sum(tape.mul(log_not_p, Var::constant(std::move(neg_coef)))));
  return tape.scale(total, -1.0);
}

Var rank_scores(Tape& tape, std::span<const RankSample> samples,
                const GeneratedEmbeddings& emb, const RankTaskParams& params) {
  if (params.weight.value().numel() != 2 * emb.width) {
    throw ShapeError("rank head width " +
                     std::to_string(params.weight.value().numel()) +
                     " does not match 2k = " + std::to_string(2 * emb.width));
  }
  std::vector<GlobalNodeId> questions, answers;
  for (const RankSample& s : samples) {
    for (const GlobalNodeId& a : s.answers) {
      questions.push_back(s.question);
      answers.push_back(a);
    }
  }
  if (answers.empty()) throw std::invalid_argument("rank_scores: no answers");
  const Var pair[] = {gather_embeddings(tape, questions, emb),
                      gather_embeddings(tape, answers, emb)};
  Var m = tape.concat(pair, 1);
  Var w = tape.reshape(params.weight, Shape{2 * emb.width, 1});
  Var z = tape.reshape(tape.matmul(m, w), Shape{answers.size()});
  return tape.leaky_relu(tape.add(z, params.bias), params.slope);
}

std::vector<double> rank_scores(const RankSample& sample,
                                const GeneratedEmbeddings& emb,
                                const RankTaskParams& params) {
  Tape tape(false);
  Var r = rank_scores(tape, std::span<const RankSample>(&sample, 1), emb, params);
  return std::vector<double>(r.value().data().begin(), r.value().data().end());
}

Var rank_loss(Tape& tape, std::span<const RankSample> samples,
              const GeneratedEmbeddings& emb, const RankTaskParams& params) {
  if (samples.empty()) throw std::invalid_argument("rank_loss: no samples");
  Var r = rank_scores(tape, samples, emb, params);

  std::vector<std::size_t> winner, other;
  std::vector<double> weights;
  std::size_t offset = 0;
  const double inv_samples = 1.0 / static_cast<double>(samples.size());
  for (const RankSample& s : samples) {
    if (s.accepted >= s.answers.size()) {
      throw std::out_of_range("rank sample label outside its answer list");
    }
    const double w = inv_samples / static_cast<double>(s.answers.size());
    for (std::size_t j = 0; j < s.answers.size(); ++j) {
      if (j == s.accepted) continue;
      winner.push_back(offset + s.accepted);
      other.push_back(offset + j);
      weights.push_back(w);
    }
    offset += s.answers.size();
  }
  if (winner.empty()) return Var::constant(Tensor::scalar(0.0));
  Var diff = tape.sub(tape.gather_rows(r, winner), tape.gather_rows(r, other));
  Var terms = tape.mul(tape.log_sigmoid(diff),
                       Var::constant(Tensor::vector(std::move(weights))));
  return tape.scale(tape.sum(terms), -1.0);
}

Var clf_logits(Tape& tape, std::span<const GlobalNodeId> nodes,
               const GeneratedEmbeddings& emb, const ClfTaskParams& params) {
  if (params.weight.value().cols() != emb.width) {
    throw ShapeError("classifier width " +
                     std::to_string(params.weight.value().cols()) +
                     " does not match embedding width " +
                     std::to_string(emb.width));
  }
  Var h = gather_embeddings(tape, nodes, emb);
  return tape.add(tape.matmul(h, tape.transpose(params.weight)), params.bias);
}

Var clf_loss(Tape& tape, std::span<const GlobalNodeId> nodes,
             std::span<const std::size_t> labels,
             const GeneratedEmbeddings& emb, const ClfTaskParams& params) {
  return tape.softmax_cross_entropy(clf_logits(tape, nodes, emb, params),
                                    labels);
}

}  // namespace hmtgin
