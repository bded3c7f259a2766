#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "hmtgin/autodiff.hpp"
#include "hmtgin/graph.hpp"
#include "hmtgin/mrgin.hpp"
#include "hmtgin/tsol.hpp"

namespace hmtgin {

struct ConstraintSample {
  GlobalNodeId question;
  std::vector<GlobalNodeId> answers;
};

using ConstraintSampleList = std::vector<ConstraintSample>;

ConstraintSampleList constraint_samples_from(std::span<const RankSample> samples);

// Per sample, the answer positions chosen by the arg-max step. Selection is a
// plain value: no gradient flows through it.
using ConstraintSelection = std::vector<std::vector<std::size_t>>;

// A logit vector reduced to one comparable number: its largest coordinate.
double logit_scalar(std::span<const double> logits);

// Every position attaining the maximum (exact equality).
std::vector<std::size_t> max_positions(std::span<const double> values);

ConstraintSelection select_by_answer_logits(const ConstraintSampleList& list,
                                            const GeneratedEmbeddings& emb,
                                            const ClfTaskParams& answer_clf);

// owner_edge_type runs user -> answer; each answer needs exactly one owner.
ConstraintSelection select_by_owner_logits(const ConstraintSampleList& list,
                                           const GeneratedEmbeddings& emb,
                                           const ClfTaskParams& user_clf,
                                           const MultiRelationalGraph& g,
                                           std::size_t owner_edge_type);

// Mean over samples of -(1/|R'|) sum log f(R'[j]) for the selected answers.
Var selected_rank_loss(Tape& tape, const ConstraintSampleList& list,
                       const ConstraintSelection& selection,
                       const GeneratedEmbeddings& emb,
                       const RankTaskParams& ranker);

// C1: answers with the highest answer-score logit should rank highly.
Var constraint1_loss(Tape& tape, const ConstraintSampleList& list,
                     const GeneratedEmbeddings& emb,
                     const ClfTaskParams& answer_clf,
                     const RankTaskParams& ranker);

// C2: answers whose owner has the highest reputation logit should rank highly.
Var constraint2_loss(Tape& tape, const ConstraintSampleList& list,
                     const GeneratedEmbeddings& emb,
                     const ClfTaskParams& user_clf, const RankTaskParams& ranker,
                     const MultiRelationalGraph& g,
                     std::size_t owner_edge_type);

}  // namespace hmtgin
