#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hmtgin/model.hpp"
#include "hmtgin/tasks.hpp"

namespace hmtgin {

struct BinaryScores {
  double accuracy = 0.0;
  double f1 = 0.0;
};

BinaryScores binary_accuracy_f1(std::span<const bool> predictions,
                                std::span<const bool> labels);

// Unweighted mean of per-class F1 over all K classes; a class with no
// predictions and no labels scores 0.
double macro_f1(std::span<const std::size_t> predictions,
                std::span<const std::size_t> labels, std::size_t classes);

struct RankScores {
  double hr3 = 0.0;
  double ndcg3 = 0.0;
};

RankScores hr_ndcg_at_3(std::size_t rank);

// 1 + number of other entries scoring at least as high as scores[accepted].
std::size_t pessimistic_rank(std::span<const double> scores, std::size_t accepted);

struct MetricValue {
  std::string name;
  double value = 0.0;
};

struct TaskMetrics {
  std::string task;
  std::size_t samples = 0;
  std::vector<MetricValue> values;
};

struct MetricReport {
  std::string split;
  std::uint64_t seed = 0;
  std::vector<TaskMetrics> tasks;

  // Unweighted mean over every metric of every task.
  double average() const;
  const TaskMetrics& task(const std::string& name) const;
  double value(const std::string& task, const std::string& metric) const;

  std::string table() const;
  std::string machine_lines() const;
};

struct MetricLine {
  std::string task;
  std::string name;
  double value = 0.0;
};

// Parses `metric=<task>.<name> value=<float>` lines; other lines are ignored.
std::vector<MetricLine> parse_metric_lines(const std::string& text);

// Metrics for one task from precomputed embeddings.
TaskMetrics evaluate_task(const TaskSpec& task, const TaskHead& head,
                          const GeneratedEmbeddings& emb, SplitName split);

MetricReport evaluate_with_embeddings(const GeneratedEmbeddings& emb,
                                      const Model& model,
                                      std::span<const TaskSpec> tasks,
                                      SplitName split);

MetricReport evaluate_all(const MultiRelationalGraph& g, const Model& model,
                          std::span<const TaskSpec> tasks, SplitName split);

}  // namespace hmtgin
