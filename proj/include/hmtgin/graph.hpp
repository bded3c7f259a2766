#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hmtgin/tensor.hpp"

namespace hmtgin {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by load_graph; what() carries the 1-based line number.
class GraphParseError : public GraphError {
 public:
  GraphParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct EdgeType {
  std::string name;
  std::size_t src_type = 0;
  std::size_t dst_type = 0;
  bool is_reverse = false;
  std::size_t reverse = 0;  // index of the paired type

  friend bool operator==(const EdgeType&, const EdgeType&) = default;
};

// Node and edge type registry. Adding a forward edge type also adds its
// reverse, named "rev_<name>", immediately after it.
class Schema {
 public:
  static constexpr const char* kReversePrefix = "rev_";

  std::size_t add_node_type(const std::string& name);
  std::size_t add_edge_type(const std::string& name,
                            const std::string& src_type,
                            const std::string& dst_type);

  std::size_t num_node_types() const { return node_types_.size(); }
  std::size_t num_edge_types() const { return edge_types_.size(); }
  const std::string& node_type_name(std::size_t t) const {
    return node_types_.at(t);
  }
  const EdgeType& edge_type(std::size_t r) const { return edge_types_.at(r); }
  const std::vector<std::string>& node_types() const { return node_types_; }
  const std::vector<EdgeType>& edge_types() const { return edge_types_; }

  std::optional<std::size_t> find_node_type(const std::string& name) const;
  std::optional<std::size_t> find_edge_type(const std::string& name) const;
  std::size_t node_type_index(const std::string& name) const;
  std::size_t edge_type_index(const std::string& name) const;

  friend bool operator==(const Schema&, const Schema&) = default;

 private:
  std::vector<std::string> node_types_;
  std::vector<EdgeType> edge_types_;
};

struct GlobalNodeId {
  std::size_t node_type = 0;
  std::size_t local_index = 0;

  friend auto operator<=>(const GlobalNodeId&, const GlobalNodeId&) = default;
};

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

// Immutable typed multigraph with per-type dense features. Edge lists are
// kept sorted by (source, destination); a CSR index keyed by destination
// serves in-neighbour queries.
class MultiRelationalGraph {
 public:
  MultiRelationalGraph() = default;

  // `edges` is indexed like schema.edge_types(). Index ranges are checked
  // here (dangling indices throw); semantic invariants are reported by
  // violations().
  MultiRelationalGraph(Schema schema, std::vector<Tensor> features,
                       std::vector<EdgeList> edges);

  // Same, but only forward types are read from `edges`; reverse lists are
  // derived.
  static MultiRelationalGraph with_reverses(Schema schema,
                                            std::vector<Tensor> features,
                                            std::vector<EdgeList> edges);

  const Schema& schema() const { return schema_; }
  std::size_t node_count(std::size_t type) const;
  std::size_t total_nodes() const;
  std::size_t feature_dim(std::size_t type) const;
  const Tensor& features(std::size_t type) const { return features_.at(type); }
  const std::vector<Tensor>& all_features() const { return features_; }
  const EdgeList& edges(std::size_t edge_type) const {
    return edges_.at(edge_type);
  }
  const std::vector<EdgeList>& all_edges() const { return edges_; }

  bool has_edge(std::size_t edge_type, std::size_t src, std::size_t dst) const;

  // Sources j of every edge (j -> node) of edge_type, ascending.
  std::vector<GlobalNodeId> neighbors(GlobalNodeId node,
                                      std::size_t edge_type) const;
  std::span<const std::size_t> in_neighbor_indices(std::size_t edge_type,
                                                   std::size_t dst) const;

  // Empty when every invariant holds.
  std::vector<std::string> violations() const;

  // Copy with some forward edges removed (their reverses go too).
  MultiRelationalGraph without_edges(std::size_t forward_type,
                                     const EdgeList& removed) const;

 private:
  struct Csr {
    std::vector<std::size_t> offsets;
    std::vector<std::size_t> sources;
  };

  Schema schema_;
  std::vector<Tensor> features_;
  std::vector<EdgeList> edges_;
  std::vector<Csr> by_destination_;
};

MultiRelationalGraph load_graph(const std::filesystem::path& path);
MultiRelationalGraph parse_graph(const std::string& text);
void save_graph(const MultiRelationalGraph& g, const std::filesystem::path& path);
std::string serialize_graph(const MultiRelationalGraph& g);

// %.17g, the round-trip float format shared by every text artifact.
std::string format_real(double value);
double parse_real(const std::string& token);

}  // namespace hmtgin
