#include "hmtgin/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "hmtgin/config.hpp"

namespace hmtgin {

double default_alpha(const std::string& task) {
  return (task == "dqd" || task == "asc") ? 7.0 : 1.0;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
  if (lr_halving_period == 0) throw ConfigError("lr_halving_period must be positive");
  for (const auto& [task, a] : alpha) {
    if (!(a >= 0.0)) throw ConfigError("alpha." + task + " must be >= 0");
  }
  if (!(beta1 >= 0.0) || !(beta2 >= 0.0)) {
    throw ConfigError("constraint coefficients must be >= 0");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) ||
      !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ConfigError("adam_beta1/adam_beta2 must lie in [0, 1), adam_eps > 0");
  }
  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

double TrainConfig::alpha_for(const std::string& task) const {
  const auto it = alpha.find(task);
  return it == alpha.end() ? default_alpha(task) : it->second;
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  for (const KeyValue& kv : parse_key_values(text)) {
    const std::string& k = kv.key;
    if (k == "epochs") cfg.epochs = value_as_count(kv);
    else if (k == "lr0") cfg.lr0 = value_as_real(kv);
    else if (k == "lr_halving_period") cfg.lr_halving_period = value_as_count(kv);
    else if (k.rfind("alpha.", 0) == 0 && k.size() > 6) cfg.alpha[k.substr(6)] = value_as_real(kv);
    else if (k == "beta1") cfg.beta1 = value_as_real(kv);
    else if (k == "beta2") cfg.beta2 = value_as_real(kv);
    else if (k == "adam_beta1") cfg.adam.beta1 = value_as_real(kv);
    else if (k == "adam_beta2") cfg.adam.beta2 = value_as_real(kv);
    else if (k == "adam_eps") cfg.adam.eps = value_as_real(kv);
    else if (k == "hidden_dim") cfg.model.hidden_dim = value_as_count(kv);
    else if (k == "num_layers") cfg.model.num_layers = value_as_count(kv);
    else if (k == "mlp_layers") cfg.model.mlp_layers = value_as_count(kv);
    else if (k == "dropout") cfg.model.dropout = value_as_real(kv);
    else if (k == "epsilon_trainable") cfg.model.epsilon_trainable = value_as_bool(kv);
    else if (k == "positive_weight") cfg.model.positive_weight = value_as_real(kv);
    else if (k == "seed") cfg.seed = value_as_seed(kv);
    else if (k == "checkpoint_dir") cfg.checkpoint_dir = kv.value;
    else {
      throw ConfigError("line " + std::to_string(kv.line) + ": unknown config key '" +
                        k + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  return parse_train_config(read_text_file(path));
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  return cfg.lr0 * std::ldexp(1.0, -static_cast<int>(epoch / cfg.lr_halving_period));
}

Var total_loss(Tape& tape, std::span<const Var> task_losses,
               std::span<const Var> constraint_losses,
               std::span<const double> alphas, std::span<const double> betas) {
  if (task_losses.size() != alphas.size() || constraint_losses.size() != betas.size()) {
    throw std::invalid_argument("total_loss: coefficient count mismatch");
  }
  if (task_losses.empty()) throw std::invalid_argument("total_loss: no task losses");
  Var sum = tape.scale(task_losses[0], alphas[0]);
  for (std::size_t t = 1; t < task_losses.size(); ++t) {
    sum = tape.add(sum, tape.scale(task_losses[t], alphas[t]));
  }
  Var total = tape.scale(sum, 1.0 / static_cast<double>(task_losses.size()));
  for (std::size_t i = 0; i < constraint_losses.size(); ++i) {
    total = tape.add(total, tape.scale(constraint_losses[i], betas[i]));
  }
  return total;
}

// ---------------------------------------------------------------------------

AdamState AdamState::for_parameters(std::span<const NamedParameter> params) {
  AdamState s;
  for (const NamedParameter& p : params) {
    s.m.push_back(Tensor::zeros_like(p.var.value()));
    s.v.push_back(Tensor::zeros_like(p.var.value()));
  }
  return s;
}

void adam_step(std::span<const NamedParameter> params, AdamState& state, double lr,
               const AdamConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match parameters");
  }
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads.push_back(params[i].var.grad());
    const Tensor& g = grads.back();
    if (g.shape() != state.m[i].shape()) {
      throw std::invalid_argument("adam_step: state shape mismatch for " +
                                  params[i].name);
    }
    for (std::size_t j = 0; j < g.numel(); ++j) {
      if (!std::isfinite(g[j])) {
        throw NumericError("non-finite gradient in parameter '" + params[i].name +
                           "' at coordinate " + std::to_string(j));
      }
    }
  }
  ++state.step;
  const double step = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, step);
  const double c2 = 1.0 - std::pow(cfg.beta2, step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var var = params[i].var;
    Tensor& w = var.mutable_value();
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t j = 0; j < g.numel(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------------------

std::optional<ConstraintBinding> bind_constraints(const MultiRelationalGraph& g,
                                                  std::span<const TaskSpec> tasks) {
  const Schema& schema = g.schema();
  ConstraintBinding b;
  bool have_ranking = false;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].kind == TaskKind::kRanking) {
      b.ranking_task = t;
      have_ranking = true;
      break;
    }
  }
  if (!have_ranking) return std::nullopt;
  const TaskSpec& ranking = tasks[b.ranking_task];
  for (std::size_t i : ranking.split.train) {
    const RankSample& s = ranking.rank_samples[i];
    b.samples.push_back({s.question, s.answers});
  }
  if (b.samples.empty()) return std::nullopt;

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].kind != TaskKind::kClassification) continue;
    if (tasks[t].node_type == ranking.answer_type) {
      if (!b.answer_clf_task) b.answer_clf_task = t;
      continue;
    }
    if (b.user_clf_task) continue;
    // An owner relation: forward edges from this node type into answers.
    for (std::size_t r = 0; r < schema.num_edge_types(); ++r) {
      const EdgeType& et = schema.edge_type(r);
      if (et.is_reverse) continue;
      if (schema.node_type_name(et.src_type) == tasks[t].node_type &&
          schema.node_type_name(et.dst_type) == ranking.answer_type) {
        bool one_owner = true;
        for (const ConstraintSample& s : b.samples) {
          for (const GlobalNodeId& a : s.answers) {
            if (g.in_neighbor_indices(r, a.local_index).size() != 1) one_owner = false;
          }
        }
        if (!one_owner) continue;
        b.user_clf_task = t;
        b.owner_edge_type = r;
        break;
      }
    }
  }
  if (!b.answer_clf_task && !b.user_clf_task) return std::nullopt;
  return b;
}

Objective::Objective(const MultiRelationalGraph& g, std::span<const TaskSpec> tasks,
                     const TrainConfig& cfg)
    : g_(g), tasks_(tasks), beta1_(cfg.beta1), beta2_(cfg.beta2),
      binding_(bind_constraints(g, tasks)) {
  for (const TaskSpec& t : tasks) alphas_.push_back(cfg.alpha_for(t.name));
}

std::vector<std::string> Objective::task_names() const {
  std::vector<std::string> out;
  for (const TaskSpec& t : tasks_) out.push_back(t.name);
  return out;
}

std::vector<std::string> Objective::constraint_names() const {
  std::vector<std::string> out;
  if (binding_ && binding_->answer_clf_task) out.push_back("c1");
  if (binding_ && binding_->user_clf_task) out.push_back("c2");
  return out;
}

FixedSelections Objective::selections(const Model& model,
                                      const GeneratedEmbeddings& emb) const {
  FixedSelections out;
  if (!binding_) return out;
  const ConstraintBinding& b = *binding_;
  if (b.answer_clf_task) {
    const auto& clf =
        std::get<ClfTaskParams>(model.head(tasks_[*b.answer_clf_task].name).params);
    out[0] = select_by_answer_logits(b.samples, emb, clf);
  }
  if (b.user_clf_task) {
    const auto& clf =
        std::get<ClfTaskParams>(model.head(tasks_[*b.user_clf_task].name).params);
    out[1] = select_by_owner_logits(b.samples, emb, clf, g_, b.owner_edge_type);
  }
  return out;
}

namespace {

std::vector<LinkPair> link_pairs(const TaskSpec& task, bool positive) {
  std::vector<LinkPair> out;
  for (std::size_t i : task.split.train) {
    if (task.link_examples[i].positive == positive) {
      out.push_back(task.link_examples[i].pair);
    }
  }
  return out;
}

Var task_loss(Tape& tape, const TaskSpec& task, const TaskHead& head,
              const GeneratedEmbeddings& emb) {
  switch (task.kind) {
    case TaskKind::kLink:
      return link_loss(tape, link_pairs(task, true), link_pairs(task, false), emb,
                       std::get<LinkTaskParams>(head.params));
    case TaskKind::kRanking: {
      std::vector<RankSample> samples;
      for (std::size_t i : task.split.train) samples.push_back(task.rank_samples[i]);
      return rank_loss(tape, samples, emb, std::get<RankTaskParams>(head.params));
    }
    case TaskKind::kClassification: {
      std::vector<GlobalNodeId> nodes;
      std::vector<std::size_t> labels;
      for (std::size_t i : task.split.train) {
        nodes.push_back(task.clf_examples[i].node);
        labels.push_back(task.clf_examples[i].label);
      }
      return clf_loss(tape, nodes, labels, emb, std::get<ClfTaskParams>(head.params));
    }
  }
  throw std::logic_error("unknown task kind");
}

}  // namespace

LossTerms Objective::evaluate(Tape& tape, const Model& model,
                              const GeneratedEmbeddings& emb,
                              const FixedSelections* fixed) const {
  LossTerms out;
  for (const TaskSpec& task : tasks_) {
    if (task.split.train.empty()) {
      throw TaskDataError("task " + task.name + " has no training examples");
    }
    out.task_names.push_back(task.name);
    out.task_losses.push_back(task_loss(tape, task, model.head(task.name), emb));
  }
  std::vector<double> betas;
  if (binding_) {
    const ConstraintBinding& b = *binding_;
    const FixedSelections chosen = fixed ? *fixed : selections(model, emb);
    const auto& ranker =
        std::get<RankTaskParams>(model.head(tasks_[b.ranking_task].name).params);
    if (b.answer_clf_task) {
      out.constraint_names.push_back("c1");
      out.constraint_losses.push_back(
          selected_rank_loss(tape, b.samples, chosen[0], emb, ranker));
      betas.push_back(beta1_);
    }
    if (b.user_clf_task) {
      out.constraint_names.push_back("c2");
      out.constraint_losses.push_back(
          selected_rank_loss(tape, b.samples, chosen[1], emb, ranker));
      betas.push_back(beta2_);
    }
  }
  out.total = total_loss(tape, out.task_losses, out.constraint_losses, alphas_, betas);
  return out;
}

// ---------------------------------------------------------------------------

std::string TrainHistory::csv() const {
  std::string out = "epoch";
  for (const std::string& t : task_names) out += "," + t;
  for (const std::string& c : constraint_names) out += "," + c;
  out += ",L',dev_avg\n";
  for (const EpochRecord& e : epochs) {
    out += std::to_string(e.epoch);
    for (double v : e.task_losses) out += "," + format_real(v);
    for (double v : e.constraint_losses) out += "," + format_real(v);
    out += "," + format_real(e.total) + "," + format_real(e.dev_average) + "\n";
  }
  return out;
}

double dev_average(const GeneratedEmbeddings& emb, const Model& model,
                   std::span<const TaskSpec> tasks) {
  MetricReport report;
  for (const TaskSpec& task : tasks) {
    if (task.split.dev.empty()) continue;
    report.tasks.push_back(
        evaluate_task(task, model.head(task.name), emb, SplitName::kDev));
  }
  return report.average();
}

TrainResult train(const MultiRelationalGraph& g, Model& model,
                  std::span<const TaskSpec> tasks, const TrainConfig& cfg,
                  std::ostream* log) {
  cfg.validate();
  const Objective objective(g, tasks, cfg);
  const std::vector<NamedParameter> params = model.trainable_parameters();
  AdamState adam = AdamState::for_parameters(params);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  result.history.task_names = objective.task_names();
  result.history.constraint_names = objective.constraint_names();

  const bool persist = !cfg.checkpoint_dir.empty();
  std::ofstream ckpt_log;
  if (persist) {
    std::filesystem::create_directories(cfg.checkpoint_dir);
    ckpt_log.open(cfg.checkpoint_dir / "checkpoints.log", std::ios::trunc);
  }

  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    const ForwardMode mode{true, &dropout_rng};
    const GeneratedEmbeddings emb = forward_embeddings(tape, g, model, mode);
    for (std::size_t t = 0; t < emb.per_type.size(); ++t) {
      if (!emb.of(t).value().all_finite()) {
        throw NumericError("non-finite embedding for node type '" +
                           g.schema().node_type_name(t) + "' at epoch " +
                           std::to_string(epoch + 1));
      }
    }
    const LossTerms terms = objective.evaluate(tape, model, emb);

    EpochRecord rec;
    rec.epoch = epoch + 1;
    auto check = [&](const std::string& name, double v) {
      if (!std::isfinite(v)) {
        throw NumericError("non-finite loss term '" + name + "' at epoch " +
                           std::to_string(epoch + 1));
      }
      return v;
    };
    for (std::size_t t = 0; t < terms.task_losses.size(); ++t) {
      rec.task_losses.push_back(
          check(terms.task_names[t], terms.task_losses[t].value().item()));
    }
    for (std::size_t i = 0; i < terms.constraint_losses.size(); ++i) {
      rec.constraint_losses.push_back(
          check(terms.constraint_names[i], terms.constraint_losses[i].value().item()));
    }
    rec.total = check("L'", terms.total.value().item());

    for (const NamedParameter& p : params) p.var.node()->grad = Tensor();
    tape.backward(terms.total);
    adam_step(params, adam, learning_rate(cfg, epoch), cfg.adam);

    rec.dev_average = dev_average(extract_embeddings(g, model), model, tasks);
    if (rec.dev_average > best) {
      best = rec.dev_average;
      result.best = snapshot(model);
      result.history.checkpoints.push_back({rec.epoch, rec.dev_average});
      if (persist) {
        save_checkpoint(result.best, cfg.checkpoint_dir / "best.ckpt");
        ckpt_log << "epoch=" << rec.epoch << " dev_avg=" << format_real(best) << "\n";
        ckpt_log.flush();
      }
    }
    if (log) {
      *log << "epoch " << rec.epoch << " L'=" << format_real(rec.total)
           << " dev_avg=" << format_real(rec.dev_average) << "\n";
    }
    result.history.epochs.push_back(std::move(rec));
  }
  result.final_state = snapshot(model);
  if (persist) save_checkpoint(result.final_state, cfg.checkpoint_dir / "final.ckpt");
  return result;
}

}  // namespace hmtgin
