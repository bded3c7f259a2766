#include "hmtgin/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hmtgin {

GraphParseError::GraphParseError(std::size_t line, const std::string& message)
    : GraphError("line " + std::to_string(line) + ": " + message), line_(line) {}

std::size_t Schema::add_node_type(const std::string& name) {
  if (find_node_type(name)) {
    throw GraphError("duplicate node type '" + name + "'");
  }
  node_types_.push_back(name);
  return node_types_.size() - 1;
}

std::size_t Schema::add_edge_type(const std::string& name,
                                  const std::string& src_type,
                                  const std::string& dst_type) {
  const std::string rev_name = kReversePrefix + name;
  if (find_edge_type(name) || find_edge_type(rev_name)) {
    throw GraphError("duplicate edge type '" + name + "'");
  }
  if (name.rfind(kReversePrefix, 0) == 0) {
    throw GraphError("edge type '" + name + "' uses the reserved prefix " +
                     kReversePrefix);
  }
  const auto src = find_node_type(src_type);
  const auto dst = find_node_type(dst_type);
  if (!src || !dst) {
    throw GraphError("edge type '" + name + "' references unknown node type '" +
                     (src ? dst_type : src_type) + "'");
  }
  const std::size_t fwd = edge_types_.size();
  edge_types_.push_back(EdgeType{name, *src, *dst, false, fwd + 1});
  edge_types_.push_back(EdgeType{rev_name, *dst, *src, true, fwd});
  return fwd;
}

std::optional<std::size_t> Schema::find_node_type(const std::string& name) const {
  const auto it = std::find(node_types_.begin(), node_types_.end(), name);
  if (it == node_types_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - node_types_.begin());
}

std::optional<std::size_t> Schema::find_edge_type(const std::string& name) const {
  const auto it =
      std::find_if(edge_types_.begin(), edge_types_.end(),
                   [&](const EdgeType& e) { return e.name == name; });
  if (it == edge_types_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - edge_types_.begin());
}

std::size_t Schema::node_type_index(const std::string& name) const {
  if (auto t = find_node_type(name)) return *t;
  throw GraphError("unknown node type '" + name + "'");
}

std::size_t Schema::edge_type_index(const std::string& name) const {
  if (auto r = find_edge_type(name)) return *r;
  throw GraphError("unknown edge type '" + name + "'");
}

MultiRelationalGraph::MultiRelationalGraph(Schema schema,
                                           std::vector<Tensor> features,
                                           std::vector<EdgeList> edges)
    : schema_(std::move(schema)),
      features_(std::move(features)),
      edges_(std::move(edges)) {
  if (features_.size() != schema_.num_node_types()) {
    throw GraphError("expected feature matrices for " +
                     std::to_string(schema_.num_node_types()) +
                     " node types, got " + std::to_string(features_.size()));
  }
  for (std::size_t t = 0; t < features_.size(); ++t) {
    if (features_[t].rank() != 2) {
      throw GraphError("features of node type '" + schema_.node_type_name(t) +
                       "' must be a matrix, got " +
                       shape_string(features_[t].shape()));
    }
  }
  edges_.resize(schema_.num_edge_types());
  by_destination_.resize(schema_.num_edge_types());
  for (std::size_t r = 0; r < edges_.size(); ++r) {
    const EdgeType& et = schema_.edge_type(r);
    const std::size_t ns = node_count(et.src_type);
    const std::size_t nd = node_count(et.dst_type);
    for (const auto& [s, d] : edges_[r]) {
      if (s >= ns || d >= nd) {
        throw GraphError("dangling edge (" + std::to_string(s) + ", " +
                         std::to_string(d) + ") in edge type '" + et.name +
                         "': node counts are " + std::to_string(ns) + " and " +
                         std::to_string(nd));
      }
    }
    std::sort(edges_[r].begin(), edges_[r].end());

    Csr& csr = by_destination_[r];
    csr.offsets.assign(nd + 1, 0);
    for (const auto& e : edges_[r]) ++csr.offsets[e.second + 1];
    for (std::size_t i = 0; i < nd; ++i) csr.offsets[i + 1] += csr.offsets[i];
    csr.sources.resize(edges_[r].size());
    std::vector<std::size_t> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
    // Edges are sorted by source, so each destination's sources come out
    // ascending.
    for (const auto& [s, d] : edges_[r]) csr.sources[cursor[d]++] = s;
  }
}

MultiRelationalGraph MultiRelationalGraph::with_reverses(
    Schema schema, std::vector<Tensor> features, std::vector<EdgeList> edges) {
  edges.resize(schema.num_edge_types());
  for (std::size_t r = 0; r < schema.num_edge_types(); ++r) {
    const EdgeType& et = schema.edge_type(r);
    if (!et.is_reverse) continue;
    EdgeList rev;
    rev.reserve(edges[et.reverse].size());
    for (const auto& [s, d] : edges[et.reverse]) rev.emplace_back(d, s);
    edges[r] = std::move(rev);
  }
  return MultiRelationalGraph(std::move(schema), std::move(features),
                              std::move(edges));
}

std::size_t MultiRelationalGraph::node_count(std::size_t type) const {
  return features_.at(type).rows();
}

std::size_t MultiRelationalGraph::total_nodes() const {
  std::size_t n = 0;
  for (const auto& f : features_) n += f.rows();
  return n;
}

std::size_t MultiRelationalGraph::feature_dim(std::size_t type) const {
  return features_.at(type).cols();
}

bool MultiRelationalGraph::has_edge(std::size_t edge_type, std::size_t src,
                                    std::size_t dst) const {
  const EdgeList& list = edges_.at(edge_type);
  return std::binary_search(list.begin(), list.end(), std::make_pair(src, dst));
}

std::span<const std::size_t> MultiRelationalGraph::in_neighbor_indices(
    std::size_t edge_type, std::size_t dst) const {
  const Csr& csr = by_destination_.at(edge_type);
  return std::span<const std::size_t>(csr.sources)
      .subspan(csr.offsets.at(dst), csr.offsets.at(dst + 1) - csr.offsets[dst]);
}

std::vector<GlobalNodeId> MultiRelationalGraph::neighbors(
    GlobalNodeId node, std::size_t edge_type) const {
  const EdgeType& et = schema_.edge_type(edge_type);
  if (et.dst_type != node.node_type) {
    throw GraphError("neighbors: edge type '" + et.name + "' ends at node type '" +
                     schema_.node_type_name(et.dst_type) + "', not '" +
                     schema_.node_type_name(node.node_type) + "'");
  }
  if (node.local_index >= node_count(node.node_type)) {
    throw GraphError("neighbors: node index " +
                     std::to_string(node.local_index) + " out of range");
  }
  std::vector<GlobalNodeId> out;
  for (std::size_t s : in_neighbor_indices(edge_type, node.local_index)) {
    out.push_back(GlobalNodeId{et.src_type, s});
  }
  return out;
}

std::vector<std::string> MultiRelationalGraph::violations() const {
  std::vector<std::string> out;
  for (std::size_t r = 0; r < edges_.size(); ++r) {
    const EdgeType& et = schema_.edge_type(r);
    const EdgeList& list = edges_[r];
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i] == list[i - 1]) {
        out.push_back("duplicate edge (" + std::to_string(list[i].first) + ", " +
                      std::to_string(list[i].second) + ") in '" + et.name + "'");
      }
    }
    const EdgeType& rt = schema_.edge_type(et.reverse);
    if (rt.reverse != r || rt.src_type != et.dst_type ||
        rt.dst_type != et.src_type || rt.is_reverse == et.is_reverse) {
      out.push_back("edge type '" + et.name + "' has no well-formed reverse");
      continue;
    }
    for (const auto& [s, d] : list) {
      if (!has_edge(et.reverse, d, s)) {
        out.push_back("edge (" + std::to_string(s) + ", " + std::to_string(d) +
                      ") of '" + et.name + "' has no reverse in '" + rt.name +
                      "'");
      }
    }
  }
  return out;
}

MultiRelationalGraph MultiRelationalGraph::without_edges(
    std::size_t forward_type, const EdgeList& removed) const {
  if (schema_.edge_type(forward_type).is_reverse) {
    throw GraphError("without_edges expects a forward edge type");
  }
  EdgeList drop = removed;
  std::sort(drop.begin(), drop.end());
  std::vector<EdgeList> edges = edges_;
  EdgeList kept;
  std::set_difference(edges[forward_type].begin(), edges[forward_type].end(),
                      drop.begin(), drop.end(), std::back_inserter(kept));
  edges[forward_type] = std::move(kept);
  return with_reverses(schema_, features_, std::move(edges));
}

// ---------------------------------------------------------------------------
// Text format

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_real(const std::string& token) {
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw std::invalid_argument("not a real number: '" + token + "'");
  }
  return value;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == ' ') {
      ++i;
      continue;
    }
    const std::size_t j = line.find(' ', i);
    out.push_back(line.substr(i, j == std::string::npos ? std::string::npos
                                                         : j - i));
    i = j == std::string::npos ? line.size() : j;
  }
  return out;
}

class LineReader {
 public:
  explicit LineReader(const std::string& text) {
    std::size_t start = 0;
    while (start < text.size()) {
      const std::size_t nl = text.find('\n', start);
      if (nl == std::string::npos) {
        lines_.push_back(text.substr(start));
        break;
      }
      lines_.push_back(text.substr(start, nl - start));
      start = nl + 1;
    }
  }

  bool done() const { return pos_ >= lines_.size(); }
  std::size_t line_number() const { return pos_; }  // of the last line read
  const std::string& peek() const { return lines_[pos_]; }
  const std::string& next() {
    if (done()) throw GraphParseError(pos_ + 1, "unexpected end of file");
    return lines_[pos_++];
  }

 private:
  std::vector<std::string> lines_;
  std::size_t pos_ = 0;
};

std::size_t parse_index(const std::string& token, std::size_t line) {
  std::size_t value = 0;
  const auto res =
      std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw GraphParseError(line, "expected a non-negative integer, got '" +
                                    token + "'");
  }
  return value;
}

}  // namespace

MultiRelationalGraph parse_graph(const std::string& text) {
  LineReader in(text);
  if (in.done() || in.next() != "MRGRAPH 1") {
    throw GraphParseError(1, "expected header 'MRGRAPH 1'");
  }

  Schema schema;
  std::vector<std::pair<std::size_t, std::size_t>> dims;  // (count, d_init)
  while (!in.done() && in.peek().rfind("nodetype ", 0) == 0) {
    const auto tok = split_ws(in.next());
    const std::size_t ln = in.line_number();
    if (tok.size() != 4) throw GraphParseError(ln, "malformed nodetype line");
    try {
      schema.add_node_type(tok[1]);
    } catch (const GraphError& e) {
      throw GraphParseError(ln, std::string("schema violation: ") + e.what());
    }
    dims.emplace_back(parse_index(tok[2], ln), parse_index(tok[3], ln));
  }

  while (!in.done() && in.peek().rfind("edgetype ", 0) == 0) {
    const auto tok = split_ws(in.next());
    std::size_t ln = in.line_number();
    if (tok.size() != 5) throw GraphParseError(ln, "malformed edgetype line");
    if (tok[4] != "explicit") {
      throw GraphParseError(ln, "schema violation: reverse type '" + tok[1] +
                                    "' without a preceding forward type");
    }
    try {
      schema.add_edge_type(tok[1], tok[2], tok[3]);
    } catch (const GraphError& e) {
      throw GraphParseError(ln, std::string("schema violation: ") + e.what());
    }
    const std::string expected = std::string("edgetype ") +
                                 Schema::kReversePrefix + tok[1] + " " + tok[3] +
                                 " " + tok[2] + " implicit_reverse";
    if (in.done() || in.next() != expected) {
      throw GraphParseError(in.line_number(),
                            "schema violation: forward type '" + tok[1] +
                                "' must be followed by '" + expected + "'");
    }
  }

  std::vector<Tensor> features;
  for (std::size_t t = 0; t < schema.num_node_types(); ++t) {
    const std::string header = "features " + schema.node_type_name(t);
    if (in.done() || in.next() != header) {
      throw GraphParseError(in.line_number() + (in.done() ? 1 : 0),
                            "expected '" + header + "'");
    }
    const auto [count, dim] = dims[t];
    Tensor f(Shape{count, dim});
    for (std::size_t i = 0; i < count; ++i) {
      const auto tok = split_ws(in.next());
      const std::size_t ln = in.line_number();
      if (tok.size() != dim) {
        throw GraphParseError(ln, "expected " + std::to_string(dim) +
                                      " feature values, got " +
                                      std::to_string(tok.size()));
      }
      for (std::size_t c = 0; c < dim; ++c) {
        try {
          f[i * dim + c] = parse_real(tok[c]);
        } catch (const std::invalid_argument& e) {
          throw GraphParseError(ln, e.what());
        }
      }
    }
    features.push_back(std::move(f));
  }

  std::vector<EdgeList> edges(schema.num_edge_types());
  for (std::size_t r = 0; r < schema.num_edge_types(); ++r) {
    const EdgeType& et = schema.edge_type(r);
    if (et.is_reverse) continue;
    const std::string header = "edges " + et.name;
    if (in.done() || in.next() != header) {
      throw GraphParseError(in.line_number() + (in.done() ? 1 : 0),
                            "expected '" + header + "'");
    }
    const std::size_t ns = dims[et.src_type].first;
    const std::size_t nd = dims[et.dst_type].first;
    while (true) {
      const std::string& line = in.next();
      const std::size_t ln = in.line_number();
      if (line == "end") break;
      const auto tok = split_ws(line);
      if (tok.size() != 2) throw GraphParseError(ln, "malformed edge line");
      const std::size_t s = parse_index(tok[0], ln);
      const std::size_t d = parse_index(tok[1], ln);
      if (s >= ns || d >= nd) {
        throw GraphParseError(
            ln, "dangling edge index: (" + tok[0] + ", " + tok[1] + ") in '" +
                    et.name + "' but " + schema.node_type_name(et.src_type) +
                    " has " + std::to_string(ns) + " nodes and " +
                    schema.node_type_name(et.dst_type) + " has " +
                    std::to_string(nd));
      }
      edges[r].emplace_back(s, d);
    }
    auto sorted = edges[r];
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) {
      throw GraphParseError(in.line_number(),
                            "schema violation: duplicate edge (" +
                                std::to_string(dup->first) + ", " +
                                std::to_string(dup->second) + ") in '" +
                                et.name + "'");
    }
  }
  if (!in.done()) {
    throw GraphParseError(in.line_number() + 1, "trailing content");
  }
  return MultiRelationalGraph::with_reverses(std::move(schema),
                                             std::move(features),
                                             std::move(edges));
}

MultiRelationalGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw GraphError("cannot open graph file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_graph(ss.str());
}

std::string serialize_graph(const MultiRelationalGraph& g) {
  const auto problems = g.violations();
  if (!problems.empty()) {
    throw GraphError("refusing to serialize invalid graph: " + problems.front());
  }
  const Schema& schema = g.schema();
  std::string out = "MRGRAPH 1\n";
  for (std::size_t t = 0; t < schema.num_node_types(); ++t) {
    out += "nodetype " + schema.node_type_name(t) + " " +
           std::to_string(g.node_count(t)) + " " +
           std::to_string(g.feature_dim(t)) + "\n";
  }
  for (const EdgeType& et : schema.edge_types()) {
    out += "edgetype " + et.name + " " + schema.node_type_name(et.src_type) +
           " " + schema.node_type_name(et.dst_type) +
           (et.is_reverse ? " implicit_reverse\n" : " explicit\n");
  }
  for (std::size_t t = 0; t < schema.num_node_types(); ++t) {
    out += "features " + schema.node_type_name(t) + "\n";
    const Tensor& f = g.features(t);
    for (std::size_t i = 0; i < f.rows(); ++i) {
      const auto row = f.row(i);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c > 0) out += ' ';
        out += format_real(row[c]);
      }
      out += '\n';
    }
  }
  for (std::size_t r = 0; r < schema.num_edge_types(); ++r) {
    const EdgeType& et = schema.edge_type(r);
    if (et.is_reverse) continue;
    out += "edges " + et.name + "\n";
    for (const auto& [s, d] : g.edges(r)) {
      out += std::to_string(s) + " " + std::to_string(d) + "\n";
    }
    out += "end\n";
  }
  return out;
}

void save_graph(const MultiRelationalGraph& g, const std::filesystem::path& path) {
  const std::string text = serialize_graph(g);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw GraphError("cannot write graph file " + path.string());
  out << text;
  if (!out) throw GraphError("write failed for " + path.string());
}

}  // namespace hmtgin
