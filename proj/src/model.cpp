#include "hmtgin/model.hpp"

#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace hmtgin {

void ModelConfig::validate() const {
  if (hidden_dim == 0) throw std::invalid_argument("hidden_dim must be positive");
  if (num_layers == 0) throw std::invalid_argument("num_layers must be at least 1");
  if (mlp_layers == 0) throw std::invalid_argument("mlp_layers must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw std::invalid_argument("dropout must lie in [0, 1)");
  }
  if (!(positive_weight > 0.0)) {
    throw std::invalid_argument("positive_weight must be positive");
  }
}

namespace {

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }
std::string head_prefix(const std::string& task) { return "head." + task + "."; }

}  // namespace

std::vector<NamedParameter> Model::parameters() const {
  std::vector<NamedParameter> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const MrginLayerParams& layer = layers[l];
    const std::string p = layer_prefix(l);
    for (std::size_t r = 0; r < layer.relation_weights.size(); ++r) {
      const std::string rel =
          r < relation_names.size() ? relation_names[r] : std::to_string(r);
      out.push_back({p + "W_r." + rel, layer.relation_weights[r]});
    }
    out.push_back({p + "W_0", layer.self_weight});
    out.push_back({p + "epsilon", layer.epsilon});
    for (std::size_t m = 0; m < layer.mlp.size(); ++m) {
      const std::string mp = p + "mlp" + std::to_string(m) + ".";
      out.push_back({mp + "weight", layer.mlp[m].weight});
      out.push_back({mp + "bias", layer.mlp[m].bias});
    }
    out.push_back({p + "bn.gamma", layer.bn_gamma});
    out.push_back({p + "bn.beta", layer.bn_beta});
  }
  for (const TaskHead& h : heads) {
    const std::string p = head_prefix(h.task);
    if (const auto* link = std::get_if<LinkTaskParams>(&h.params)) {
      out.push_back({p + "D", link->diagonal});
    } else if (const auto* rank = std::get_if<RankTaskParams>(&h.params)) {
      out.push_back({p + "w", rank->weight});
      out.push_back({p + "b", rank->bias});
    } else {
      const auto& clf = std::get<ClfTaskParams>(h.params);
      out.push_back({p + "W", clf.weight});
      out.push_back({p + "b", clf.bias});
    }
  }
  return out;
}

std::vector<NamedParameter> Model::trainable_parameters() const {
  std::vector<NamedParameter> out;
  for (NamedParameter& p : parameters()) {
    if (p.var.requires_grad()) out.push_back(std::move(p));
  }
  return out;
}

const TaskHead& Model::head(const std::string& task) const {
  for (const TaskHead& h : heads) {
    if (h.task == task) return h;
  }
  throw std::out_of_range("model has no head for task '" + task + "'");
}

std::size_t Model::embedding_width(std::size_t input_dim) const {
  return input_dim + (layers.empty() ? 0 : layers.back().out_dim());
}

std::size_t uniform_feature_dim(const MultiRelationalGraph& g) {
  const Schema& s = g.schema();
  if (s.num_node_types() == 0) throw GraphError("graph has no node types");
  const std::size_t d = g.feature_dim(0);
  for (std::size_t t = 1; t < s.num_node_types(); ++t) {
    if (g.feature_dim(t) != d) {
      throw GraphError("node type '" + s.node_type_name(t) + "' has feature width " +
                       std::to_string(g.feature_dim(t)) + ", expected " +
                       std::to_string(d));
    }
  }
  return d;
}

Model init_model(const MultiRelationalGraph& g, std::span<const TaskSpec> tasks,
                 const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d0 = uniform_feature_dim(g);
  Model model;
  for (const EdgeType& et : g.schema().edge_types()) {
    model.relation_names.push_back(et.name);
  }
  std::size_t in = d0;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    MrginLayerParams layer =
        init_mrgin_layer(g.schema(), in, cfg.hidden_dim, cfg.mlp_layers,
                         cfg.epsilon_trainable, cfg.epsilon_value, rng);
    layer.dropout = cfg.dropout;
    model.layers.push_back(std::move(layer));
    in = cfg.hidden_dim;
  }
  const std::size_t k = model.embedding_width(d0);
  for (const TaskSpec& task : tasks) {
    switch (task.kind) {
      case TaskKind::kLink: {
        LinkTaskParams p = init_link_params(k, rng);
        p.positive_weight = cfg.positive_weight;
        model.heads.push_back({task.name, p});
        break;
      }
      case TaskKind::kRanking:
        model.heads.push_back({task.name, init_rank_params(k, rng)});
        break;
      case TaskKind::kClassification:
        model.heads.push_back({task.name, init_clf_params(k, task.classes, rng)});
        break;
    }
  }
  return model;
}

GeneratedEmbeddings forward_embeddings(Tape& tape, const MultiRelationalGraph& g,
                                       const Model& model, const ForwardMode& mode) {
  return generate_embeddings(tape, g, model.layers, mode);
}

GeneratedEmbeddings extract_embeddings(const MultiRelationalGraph& g,
                                       const Model& model) {
  Tape tape(false);
  return generate_embeddings(tape, g, model.layers, ForwardMode{});
}

// ---------------------------------------------------------------------------

Checkpoint snapshot(const Model& model) {
  Checkpoint out;
  for (const NamedParameter& p : model.parameters()) {
    out.push_back({p.name, p.var.value()});
  }
  return out;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  for (const NamedTensor& t : ckpt) {
    const Shape& shape = t.value.shape();
    out += "tensor " + t.name + " " + std::to_string(shape.size());
    for (std::size_t e : shape) out += " " + std::to_string(e);
    out += "\n";
    const std::size_t per_line = shape.size() == 2 ? shape[1] : t.value.numel();
    const auto data = t.value.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      out += format_real(data[i]);
      out += (per_line == 0 || (i + 1) % per_line == 0) ? "\n" : " ";
    }
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& text) {
  Checkpoint out;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string word;
  while (in >> word) {
    if (word != "tensor") {
      throw CheckpointError("checkpoint: expected 'tensor', got '" + word + "'");
    }
    std::string name;
    std::size_t rank = 0;
    if (!(in >> name >> rank) || rank > 2) {
      throw CheckpointError("checkpoint: malformed tensor header");
    }
    if (!seen.insert(name).second) {
      throw CheckpointError("checkpoint: repeated tensor '" + name + "'");
    }
    Shape shape(rank);
    for (std::size_t& e : shape) {
      if (!(in >> e)) throw CheckpointError("checkpoint: bad extents for " + name);
    }
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) {
      std::string token;
      if (!(in >> token)) throw CheckpointError("checkpoint: truncated " + name);
      try {
        v = parse_real(token);
      } catch (const std::invalid_argument&) {
        throw CheckpointError("checkpoint: bad value '" + token + "' in " + name);
      }
    }
    out.push_back({name, Tensor(std::move(shape), std::move(values))});
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << serialize_checkpoint(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_checkpoint(ss.str());
}

void restore(Model& model, const Checkpoint& ckpt) {
  std::vector<NamedParameter> params = model.parameters();
  if (params.size() != ckpt.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(ckpt.size()) +
                          " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ckpt[i].name) {
      throw CheckpointError("checkpoint tensor " + std::to_string(i) + " is '" +
                            ckpt[i].name + "', model expects '" + params[i].name + "'");
    }
    if (params[i].var.shape() != ckpt[i].value.shape()) {
      throw CheckpointError("checkpoint tensor '" + ckpt[i].name + "' has shape " +
                            shape_string(ckpt[i].value.shape()) + ", model expects " +
                            shape_string(params[i].var.shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].var.mutable_value() = ckpt[i].value;
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt, const MultiRelationalGraph& g,
                            std::span<const TaskSpec> tasks) {
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const NamedTensor& t : ckpt) {
      if (t.name == name) return &t.value;
    }
    return nullptr;
  };
  ModelConfig cfg;
  cfg.num_layers = 0;
  while (find(layer_prefix(cfg.num_layers) + "W_0")) ++cfg.num_layers;
  if (cfg.num_layers == 0) throw CheckpointError("checkpoint has no MRGIN layer");
  cfg.hidden_dim = find("layer0.W_0")->rows();
  cfg.mlp_layers = 0;
  while (find("layer0.mlp" + std::to_string(cfg.mlp_layers) + ".weight")) {
    ++cfg.mlp_layers;
  }
  if (cfg.mlp_layers == 0) throw CheckpointError("checkpoint layer has no MLP");
  if (const Tensor* eps = find("layer0.epsilon"); eps && eps->numel() == 1) {
    cfg.epsilon_value = (*eps)[0];
  }
  Model model;
  try {
    model = init_model(g, tasks, cfg, 0);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint does not fit graph: ") + e.what());
  }
  restore(model, ckpt);
  return model;
}

}  // namespace hmtgin
