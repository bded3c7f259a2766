#include "hmtgin/gradcheck.hpp"

#include <cstdio>

namespace hmtgin {

const GroupCheck* GradCheckSummary::worst() const {
  const GroupCheck* out = nullptr;
  for (const GroupCheck& r : rows) {
    if (!out || r.max_rel_error > out->max_rel_error) out = &r;
  }
  return out;
}

std::string GradCheckSummary::table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-6s %-28s %12s %6s\n", "term", "parameter",
                "max_rel_err", "index");
  out += buf;
  for (const GroupCheck& r : rows) {
    std::snprintf(buf, sizeof buf, "%-6s %-28s %12.3e %6zu%s\n", r.term.c_str(),
                  r.parameter.c_str(), r.max_rel_error, r.worst_index,
                  r.max_rel_error <= tolerance ? "" : "  FAIL");
    out += buf;
  }
  return out;
}

GradCheckSummary run_gradcheck(const MultiRelationalGraph& g,
                               std::span<const TaskSpec> tasks,
                               const TrainConfig& cfg, double step,
                               double tolerance) {
  TrainConfig check_cfg = cfg;
  check_cfg.model.dropout = 0.0;
  const Model model = init_model(g, tasks, check_cfg.model, check_cfg.seed);
  const Objective objective(g, tasks, check_cfg);
  const FixedSelections fixed =
      objective.selections(model, extract_embeddings(g, model));
  const std::vector<NamedParameter> params = model.trainable_parameters();

  std::vector<std::string> terms = objective.task_names();
  for (const std::string& c : objective.constraint_names()) terms.push_back(c);
  terms.push_back("total");

  GradCheckSummary summary;
  summary.tolerance = tolerance;
  for (std::size_t k = 0; k < terms.size(); ++k) {
    auto f = [&](Tape& tape) {
      const GeneratedEmbeddings emb = forward_embeddings(tape, g, model);
      const LossTerms lt = objective.evaluate(tape, model, emb, &fixed);
      const std::size_t t = lt.task_losses.size();
      if (k < t) return lt.task_losses[k];
      if (k < t + lt.constraint_losses.size()) return lt.constraint_losses[k - t];
      return lt.total;
    };
    const GradCheckReport report = grad_check(f, params, step, tolerance);
    for (const GradCheckEntry& e : report.entries) {
      summary.rows.push_back(
          {terms[k], e.name, e.max_rel_error, e.worst_index, e.analytic, e.numeric});
      if (!(e.max_rel_error <= tolerance)) summary.passed = false;
    }
  }
  return summary;
}

}  // namespace hmtgin
