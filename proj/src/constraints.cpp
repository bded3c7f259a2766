#include "hmtgin/constraints.hpp"

#include <algorithm>
#include <stdexcept>

namespace hmtgin {

namespace {

void require_nonempty(const ConstraintSampleList& list) {
  if (list.empty()) throw std::invalid_argument("constraint sample list is empty");
}

// Scalar logit of every row of an [n x K] logit matrix.
std::vector<double> row_scalars(const Tensor& logits) {
  std::vector<double> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) out[r] = logit_scalar(logits.row(r));
  return out;
}

}  // namespace

ConstraintSampleList constraint_samples_from(std::span<const RankSample> samples) {
  ConstraintSampleList out;
  out.reserve(samples.size());
  for (const RankSample& s : samples) out.push_back({s.question, s.answers});
  return out;
}

double logit_scalar(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("empty logit vector");
  return *std::max_element(logits.begin(), logits.end());
}

std::vector<std::size_t> max_positions(std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("max_positions of nothing");
  const double best = *std::max_element(values.begin(), values.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == best) out.push_back(i);
  }
  return out;
}

ConstraintSelection select_by_answer_logits(const ConstraintSampleList& list,
                                            const GeneratedEmbeddings& emb,
                                            const ClfTaskParams& answer_clf) {
  require_nonempty(list);
  ConstraintSelection selection;
  selection.reserve(list.size());
  Tape tape(false);
  for (const ConstraintSample& s : list) {
    const Var logits = clf_logits(tape, s.answers, emb, answer_clf);
    selection.push_back(max_positions(row_scalars(logits.value())));
  }
  return selection;
}

ConstraintSelection select_by_owner_logits(const ConstraintSampleList& list,
                                           const GeneratedEmbeddings& emb,
                                           const ClfTaskParams& user_clf,
                                           const MultiRelationalGraph& g,
                                           std::size_t owner_edge_type) {
  require_nonempty(list);
  ConstraintSelection selection;
  selection.reserve(list.size());
  Tape tape(false);
  for (const ConstraintSample& s : list) {
    std::vector<GlobalNodeId> owners;
    owners.reserve(s.answers.size());
    for (const GlobalNodeId& a : s.answers) {
      const auto who = g.neighbors(a, owner_edge_type);
      if (who.size() != 1) {
        throw std::invalid_argument(
            "answer " + std::to_string(a.local_index) + " has " +
            std::to_string(who.size()) + " owners, expected exactly one");
      }
      owners.push_back(who.front());
    }
    const Var logits = clf_logits(tape, owners, emb, user_clf);
    const std::vector<double> scalars = row_scalars(logits.value());
    // Answers share a maximum whenever their owners do, including the case of
    // one owner holding several answers.
    selection.push_back(max_positions(scalars));
  }
  return selection;
}

Var selected_rank_loss(Tape& tape, const ConstraintSampleList& list,
                       const ConstraintSelection& selection,
                       const GeneratedEmbeddings& emb,
                       const RankTaskParams& ranker) {
  require_nonempty(list);
  if (selection.size() != list.size()) {
    throw std::invalid_argument("selection does not match the sample list");
  }
  std::vector<RankSample> chosen;
  std::vector<double> weights;
  const double inv_samples = 1.0 / static_cast<double>(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& picks = selection[i];
    if (picks.empty()) throw std::invalid_argument("empty constraint selection");
    RankSample rs{list[i].question, {}, 0};
    for (std::size_t p : picks) {
      rs.answers.push_back(list[i].answers.at(p));
      weights.push_back(inv_samples / static_cast<double>(picks.size()));
    }
    chosen.push_back(std::move(rs));
  }
  Var r = rank_scores(tape, chosen, emb, ranker);
  Var terms = tape.mul(tape.log_sigmoid(r),
                       Var::constant(Tensor::vector(std::move(weights))));
  return tape.scale(tape.sum(terms), -1.0);
}

Var constraint1_loss(Tape& tape, const ConstraintSampleList& list,
                     const GeneratedEmbeddings& emb,
                     const ClfTaskParams& answer_clf,
                     const RankTaskParams& ranker) {
  return selected_rank_loss(tape, list,
                            select_by_answer_logits(list, emb, answer_clf), emb,
                            ranker);
}

Var constraint2_loss(Tape& tape, const ConstraintSampleList& list,
                     const GeneratedEmbeddings& emb,
                     const ClfTaskParams& user_clf, const RankTaskParams& ranker,
                     const MultiRelationalGraph& g,
                     std::size_t owner_edge_type) {
  return selected_rank_loss(
      tape, list,
      select_by_owner_logits(list, emb, user_clf, g, owner_edge_type), emb,
      ranker);
}

}  // namespace hmtgin
