#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hmtgin/autodiff.hpp"
#include "hmtgin/graph.hpp"
#include "hmtgin/mrgin.hpp"
#include "hmtgin/tasks.hpp"
#include "hmtgin/tsol.hpp"

namespace hmtgin {

struct ModelConfig {
  std::size_t hidden_dim = 16;
  std::size_t num_layers = 1;
  std::size_t mlp_layers = 1;
  double dropout = 0.0;
  bool epsilon_trainable = false;
  double epsilon_value = 0.0;
  double positive_weight = kDefaultPositiveWeight;

  void validate() const;
};

using HeadParams = std::variant<LinkTaskParams, RankTaskParams, ClfTaskParams>;

struct TaskHead {
  std::string task;
  HeadParams params;
};

// Shared MRGIN backbone plus one head per task, in task order.
struct Model {
  std::vector<MrginLayerParams> layers;
  std::vector<TaskHead> heads;
  std::vector<std::string> relation_names;  // edge type names, schema order

  // Fixed registry order: layers first, then heads in task order.
  std::vector<NamedParameter> parameters() const;
  // The subset that receives gradients.
  std::vector<NamedParameter> trainable_parameters() const;

  const TaskHead& head(const std::string& task) const;
  std::size_t embedding_width(std::size_t input_dim) const;
};

// Every node type must share one feature width.
std::size_t uniform_feature_dim(const MultiRelationalGraph& g);

Model init_model(const MultiRelationalGraph& g, std::span<const TaskSpec> tasks,
                 const ModelConfig& cfg, std::uint64_t seed);

GeneratedEmbeddings forward_embeddings(Tape& tape, const MultiRelationalGraph& g,
                                       const Model& model,
                                       const ForwardMode& mode = {});

// Full-batch inference forward: batch statistics, no dropout, no tape.
GeneratedEmbeddings extract_embeddings(const MultiRelationalGraph& g,
                                       const Model& model);

// --- checkpoints ---

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

using Checkpoint = std::vector<NamedTensor>;

Checkpoint snapshot(const Model& model);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(const std::string& text);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values into an existing model; names and shapes must match exactly.
void restore(Model& model, const Checkpoint& ckpt);

// Rebuilds the architecture implied by the tensor names and shapes, then
// restores the values. Throws CheckpointError when the checkpoint does not
// fit the graph schema or the task list.
Model model_from_checkpoint(const Checkpoint& ckpt, const MultiRelationalGraph& g,
                            std::span<const TaskSpec> tasks);

}  // namespace hmtgin
