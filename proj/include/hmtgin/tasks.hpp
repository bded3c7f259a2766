#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hmtgin/constraints.hpp"
#include "hmtgin/graph.hpp"
#include "hmtgin/tsol.hpp"

namespace hmtgin {

class TaskDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TaskKind { kLink, kRanking, kClassification };

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& text);

enum class SplitName { kTrain, kDev, kTest };

std::string to_string(SplitName split);
std::optional<SplitName> parse_split_name(const std::string& text);

// Indices into a task's example list.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;

  const std::vector<std::size_t>& get(SplitName which) const;
};

struct LinkExample {
  LinkPair pair;
  bool positive = false;
};

struct ClfExample {
  GlobalNodeId node;
  std::size_t label = 0;
};

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::kLink;

  std::string edge_type;      // link: target relation
  std::string question_type;  // ranking
  std::string answer_type;    // ranking
  std::string node_type;      // classification
  std::size_t classes = 0;    // classification

  std::vector<LinkExample> link_examples;
  std::vector<RankSample> rank_samples;
  std::vector<ClfExample> clf_examples;

  Split split;

  std::size_t num_examples() const;
};

// Exactly ratio * |E_r| distinct non-edges of edge_type with type-correct
// endpoints. For relations within one node type, self pairs and reversed
// existing pairs are excluded and pairs are drawn with src < dst.
std::vector<LinkPair> negative_sample(const MultiRelationalGraph& g,
                                      std::size_t edge_type, std::size_t ratio,
                                      std::uint64_t seed);

struct BucketResult {
  std::vector<std::size_t> labels;
  std::vector<double> thresholds;  // value >= thresholds[k] => label > k
  bool degenerate = false;         // fewer than K distinct classes possible
};

// Quantile thresholds from `reference`, applied to `values`.
BucketResult bucket_with_reference(std::span<const double> values,
                                   std::span<const double> reference,
                                   std::size_t classes);
BucketResult bucket_labels(std::span<const double> values, std::size_t classes);

struct RankingSampleReport {
  std::vector<RankSample> samples;
  std::size_t too_few_answers = 0;
  std::size_t no_accepted = 0;
};

// One sample per question with >= kMinAnswers answers (in-neighbours under
// answer_to) whose accepted answer is known. accepted_flags is indexed by
// answer local index.
RankingSampleReport build_ranking_samples(const MultiRelationalGraph& g,
                                          std::span<const double> accepted_flags,
                                          std::size_t answer_to_edge_type);

// Shuffled 8:1:1 split: floor(0.8 n) / floor(0.1 n) / rest.
Split split_indices(std::size_t n, std::uint64_t seed);

// split_indices for n >= 10; smaller universes go entirely to train.
Split split_or_train_only(std::size_t n, std::uint64_t seed);

// --- task dataset files ---
void save_task(const TaskSpec& task, const MultiRelationalGraph& g,
               const std::filesystem::path& path);
std::string serialize_task(const TaskSpec& task, const MultiRelationalGraph& g);
TaskSpec parse_task(const std::string& text, const MultiRelationalGraph& g);
TaskSpec load_task(const std::filesystem::path& path,
                   const MultiRelationalGraph& g);

// A directory of <name>.task files plus an "index" file listing names in
// training order.
void save_task_dir(std::span<const TaskSpec> tasks, const MultiRelationalGraph& g,
                   const std::filesystem::path& dir);
std::vector<TaskSpec> load_task_dir(const std::filesystem::path& dir,
                                    const MultiRelationalGraph& g);

// Validates every node reference against the graph.
void validate_task(const TaskSpec& task, const MultiRelationalGraph& g);

}  // namespace hmtgin
