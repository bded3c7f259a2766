#include "hmtgin/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>
#include <stdexcept>

namespace hmtgin {

BinaryScores binary_accuracy_f1(std::span<const bool> predictions,
                                std::span<const bool> labels) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("binary_accuracy_f1: length mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("binary_accuracy_f1: empty input");
  std::size_t tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
    if (predictions[i] && labels[i]) ++tp;
    if (predictions[i] && !labels[i]) ++fp;
    if (!predictions[i] && labels[i]) ++fn;
  }
  BinaryScores out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  const std::size_t denom = 2 * tp + fp + fn;
  out.f1 = tp == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
  return out;
}

double macro_f1(std::span<const std::size_t> predictions,
                std::span<const std::size_t> labels, std::size_t classes) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("macro_f1: length mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("macro_f1: empty input");
  if (classes == 0) throw std::invalid_argument("macro_f1: K must be positive");
  std::vector<std::size_t> tp(classes), fp(classes), fn(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] >= classes || labels[i] >= classes) {
      throw std::out_of_range("macro_f1: class index outside [0, K)");
    }
    if (predictions[i] == labels[i]) {
      ++tp[labels[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[labels[i]];
    }
  }
  double total = 0.0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (tp[k] == 0) continue;
    total += static_cast<double>(2 * tp[k]) /
             static_cast<double>(2 * tp[k] + fp[k] + fn[k]);
  }
  return total / static_cast<double>(classes);
}

RankScores hr_ndcg_at_3(std::size_t rank) {
  if (rank < 1) throw std::invalid_argument("hr_ndcg_at_3: rank must be >= 1");
  if (rank > 3) return {0.0, 0.0};
  return {1.0, 1.0 / std::log2(static_cast<double>(rank) + 1.0)};
}

std::size_t pessimistic_rank(std::span<const double> scores, std::size_t accepted) {
  if (accepted >= scores.size()) {
    throw std::out_of_range("pessimistic_rank: accepted index out of range");
  }
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (j != accepted && scores[j] >= scores[accepted]) ++rank;
  }
  return rank;
}

// ---------------------------------------------------------------------------

double MetricReport::average() const {
  double total = 0.0;
  std::size_t n = 0;
  for (const TaskMetrics& t : tasks) {
    for (const MetricValue& v : t.values) {
      total += v.value;
      ++n;
    }
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

const TaskMetrics& MetricReport::task(const std::string& name) const {
  for (const TaskMetrics& t : tasks) {
    if (t.task == name) return t;
  }
  throw std::out_of_range("report has no task '" + name + "'");
}

double MetricReport::value(const std::string& task_name,
                           const std::string& metric) const {
  for (const MetricValue& v : task(task_name).values) {
    if (v.name == metric) return v.value;
  }
  throw std::out_of_range("task '" + task_name + "' has no metric '" + metric + "'");
}

std::string MetricReport::table() const {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-8s %-10s %8s %8s\n", "task", "metric", "value",
                "samples");
  out += buf;
  for (const TaskMetrics& t : tasks) {
    for (const MetricValue& v : t.values) {
      std::snprintf(buf, sizeof buf, "%-8s %-10s %8.4f %8zu\n", t.task.c_str(),
                    v.name.c_str(), v.value, t.samples);
      out += buf;
    }
  }
  std::snprintf(buf, sizeof buf, "%-8s %-10s %8.4f\n", "all", "average", average());
  out += buf;
  return out;
}

std::string MetricReport::machine_lines() const {
  std::string out;
  for (const TaskMetrics& t : tasks) {
    for (const MetricValue& v : t.values) {
      out += "metric=" + t.task + "." + v.name + " value=" + format_real(v.value) + "\n";
    }
  }
  return out;
}

std::vector<MetricLine> parse_metric_lines(const std::string& text) {
  std::vector<MetricLine> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("metric=", 0) != 0) continue;
    std::istringstream fields(line);
    std::string key, value;
    if (!(fields >> key >> value) || value.rfind("value=", 0) != 0) {
      throw std::invalid_argument("malformed metric line: '" + line + "'");
    }
    const std::string id = key.substr(7);
    const auto dot = id.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == id.size()) {
      throw std::invalid_argument("metric id needs <task>.<name>: '" + id + "'");
    }
    out.push_back({id.substr(0, dot), id.substr(dot + 1), parse_real(value.substr(6))});
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

TaskMetrics evaluate_link(const TaskSpec& task, const LinkTaskParams& params,
                          const GeneratedEmbeddings& emb,
                          const std::vector<std::size_t>& idx) {
  const std::size_t n = idx.size();
  std::vector<LinkPair> pairs;
  auto labels = std::make_unique<bool[]>(n);
  for (std::size_t k = 0; k < n; ++k) {
    pairs.push_back(task.link_examples[idx[k]].pair);
    labels[k] = task.link_examples[idx[k]].positive;
  }
  Tape tape(false);
  const Var s = link_scores(tape, pairs, emb, params);
  auto predicted = std::make_unique<bool[]>(n);
  for (std::size_t k = 0; k < n; ++k) predicted[k] = sigmoid(s.value()[k]) > 0.5;
  const std::span<const bool> p(predicted.get(), n);
  const std::span<const bool> l(labels.get(), n);
  const BinaryScores scores = binary_accuracy_f1(p, l);
  return {task.name, idx.size(), {{"accuracy", scores.accuracy}, {"f1", scores.f1}}};
}

TaskMetrics evaluate_ranking(const TaskSpec& task, const RankTaskParams& params,
                             const GeneratedEmbeddings& emb,
                             const std::vector<std::size_t>& idx) {
  double hr = 0.0, ndcg = 0.0;
  for (std::size_t i : idx) {
    const RankSample& s = task.rank_samples[i];
    const std::vector<double> r = rank_scores(s, emb, params);
    const RankScores m = hr_ndcg_at_3(pessimistic_rank(r, s.accepted));
    hr += m.hr3;
    ndcg += m.ndcg3;
  }
  const double n = static_cast<double>(idx.size());
  return {task.name, idx.size(), {{"hr3", hr / n}, {"ndcg3", ndcg / n}}};
}

TaskMetrics evaluate_classification(const TaskSpec& task,
                                    const ClfTaskParams& params,
                                    const GeneratedEmbeddings& emb,
                                    const std::vector<std::size_t>& idx) {
  std::vector<GlobalNodeId> nodes;
  std::vector<std::size_t> labels;
  for (std::size_t i : idx) {
    nodes.push_back(task.clf_examples[i].node);
    labels.push_back(task.clf_examples[i].label);
  }
  Tape tape(false);
  const Var logits = clf_logits(tape, nodes, emb, params);
  std::vector<std::size_t> predicted(nodes.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto row = logits.value().row(i);
    predicted[i] = static_cast<std::size_t>(
        std::max_element(row.begin(), row.end()) - row.begin());
    if (predicted[i] == labels[i]) ++correct;
  }
  const double accuracy =
      static_cast<double>(correct) / static_cast<double>(nodes.size());
  return {task.name,
          idx.size(),
          {{"accuracy", accuracy},
           {"macro_f1", macro_f1(predicted, labels, params.classes())}}};
}

}  // namespace

TaskMetrics evaluate_task(const TaskSpec& task, const TaskHead& head,
                          const GeneratedEmbeddings& emb, SplitName split) {
  const std::vector<std::size_t>& idx = task.split.get(split);
  if (idx.empty()) {
    throw TaskDataError("task " + task.name + " has no " + to_string(split) +
                        " examples");
  }
  switch (task.kind) {
    case TaskKind::kLink:
      return evaluate_link(task, std::get<LinkTaskParams>(head.params), emb, idx);
    case TaskKind::kRanking:
      return evaluate_ranking(task, std::get<RankTaskParams>(head.params), emb, idx);
    case TaskKind::kClassification:
      return evaluate_classification(task, std::get<ClfTaskParams>(head.params), emb,
                                     idx);
  }
  throw std::logic_error("unknown task kind");
}

MetricReport evaluate_with_embeddings(const GeneratedEmbeddings& emb,
                                      const Model& model,
                                      std::span<const TaskSpec> tasks,
                                      SplitName split) {
  MetricReport report;
  report.split = to_string(split);
  for (const TaskSpec& task : tasks) {
    report.tasks.push_back(evaluate_task(task, model.head(task.name), emb, split));
  }
  return report;
}

MetricReport evaluate_all(const MultiRelationalGraph& g, const Model& model,
                          std::span<const TaskSpec> tasks, SplitName split) {
  return evaluate_with_embeddings(extract_embeddings(g, model), model, tasks, split);
}

}  // namespace hmtgin
