#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmtgin/config.hpp"
#include "hmtgin/constraints.hpp"
#include "hmtgin/metrics.hpp"
#include "hmtgin/model.hpp"
#include "hmtgin/tasks.hpp"

namespace hmtgin {

// Non-finite loss or gradient during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  std::size_t epochs = 135;
  double lr0 = 0.01;
  std::size_t lr_halving_period = 50;
  std::map<std::string, double> alpha;  // overrides of default_alpha()
  double beta1 = 1.0;                   // C1 coefficient
  double beta2 = 1.0;                   // C2 coefficient
  AdamConfig adam;
  std::uint64_t seed = 1;
  std::filesystem::path checkpoint_dir;  // empty: keep checkpoints in memory
  ModelConfig model;

  void validate() const;
  double alpha_for(const std::string& task) const;
};

// 7 for duplicate detection and answer-score classification, 1 otherwise.
double default_alpha(const std::string& task);

// Keys: epochs, lr0, lr_halving_period, alpha.<task>, beta1, beta2 (constraint
// coefficients), adam_beta1, adam_beta2, adam_eps, hidden_dim, num_layers,
// mlp_layers, dropout, epsilon_trainable, positive_weight, seed,
// checkpoint_dir. Unknown keys throw ConfigError.
TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::filesystem::path& path);

// lr0 * 0.5^floor(epoch / period), epoch counted from 0.
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

// (1/T) sum alpha_t L_t + sum beta_i C_i.
Var total_loss(Tape& tape, std::span<const Var> task_losses,
               std::span<const Var> constraint_losses,
               std::span<const double> alphas, std::span<const double> betas);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;

  static AdamState for_parameters(std::span<const NamedParameter> params);
};

// One bias-corrected Adam update from the gradients stored on params.
void adam_step(std::span<const NamedParameter> params, AdamState& state,
               double lr, const AdamConfig& cfg = {});

// How the constraint terms attach to the task list.
struct ConstraintBinding {
  std::size_t ranking_task = 0;
  std::optional<std::size_t> answer_clf_task;  // C1
  std::optional<std::size_t> user_clf_task;    // C2
  std::size_t owner_edge_type = 0;
  ConstraintSampleList samples;  // ranking TRAINING samples
};

// Present when a ranking task exists and at least one constraint can attach.
std::optional<ConstraintBinding> bind_constraints(const MultiRelationalGraph& g,
                                                  std::span<const TaskSpec> tasks);

struct LossTerms {
  std::vector<std::string> task_names;
  std::vector<Var> task_losses;
  std::vector<std::string> constraint_names;
  std::vector<Var> constraint_losses;
  Var total;
};

// Constraint selections frozen in advance, so that a finite-difference check
// sees a smooth objective.
using FixedSelections = std::array<ConstraintSelection, 2>;

class Objective {
 public:
  Objective(const MultiRelationalGraph& g, std::span<const TaskSpec> tasks,
            const TrainConfig& cfg);

  LossTerms evaluate(Tape& tape, const Model& model, const GeneratedEmbeddings& emb,
                     const FixedSelections* fixed = nullptr) const;
  FixedSelections selections(const Model& model,
                             const GeneratedEmbeddings& emb) const;

  std::vector<std::string> task_names() const;
  std::vector<std::string> constraint_names() const;

 private:
  const MultiRelationalGraph& g_;
  std::span<const TaskSpec> tasks_;
  std::vector<double> alphas_;
  double beta1_;
  double beta2_;
  std::optional<ConstraintBinding> binding_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  std::vector<double> task_losses;
  std::vector<double> constraint_losses;
  double total = 0.0;
  double dev_average = 0.0;
};

struct CheckpointRecord {
  std::size_t epoch = 0;
  double dev_average = 0.0;
};

struct TrainHistory {
  std::vector<std::string> task_names;
  std::vector<std::string> constraint_names;
  std::vector<EpochRecord> epochs;
  std::vector<CheckpointRecord> checkpoints;

  // Header line then `epoch,<L_t...>,<C_i...>,L',dev_avg` rows.
  std::string csv() const;
};

struct TrainResult {
  TrainHistory history;
  Checkpoint best;  // empty if dev never improved
  Checkpoint final_state;
};

// Full-batch joint training. With cfg.checkpoint_dir set, best.ckpt is
// rewritten at each strict dev improvement and checkpoints.log appended.
TrainResult train(const MultiRelationalGraph& g, Model& model,
                  std::span<const TaskSpec> tasks, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

// Dev average over tasks that have dev examples.
double dev_average(const GeneratedEmbeddings& emb, const Model& model,
                   std::span<const TaskSpec> tasks);

}  // namespace hmtgin
