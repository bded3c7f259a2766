#include "hmtgin/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace hmtgin {

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kLink:
      return "link";
    case TaskKind::kRanking:
      return "ranking";
    case TaskKind::kClassification:
      return "classification";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& text) {
  if (text == "link") return TaskKind::kLink;
  if (text == "ranking") return TaskKind::kRanking;
  if (text == "classification") return TaskKind::kClassification;
  throw TaskDataError("unknown task kind '" + text + "'");
}

std::string to_string(SplitName split) {
  switch (split) {
    case SplitName::kTrain:
      return "train";
    case SplitName::kDev:
      return "dev";
    case SplitName::kTest:
      return "test";
  }
  return "?";
}

std::optional<SplitName> parse_split_name(const std::string& text) {
  if (text == "train") return SplitName::kTrain;
  if (text == "dev") return SplitName::kDev;
  if (text == "test") return SplitName::kTest;
  return std::nullopt;
}

const std::vector<std::size_t>& Split::get(SplitName which) const {
  switch (which) {
    case SplitName::kTrain:
      return train;
    case SplitName::kDev:
      return dev;
    case SplitName::kTest:
      return test;
  }
  return train;
}

std::size_t TaskSpec::num_examples() const {
  switch (kind) {
    case TaskKind::kLink:
      return link_examples.size();
    case TaskKind::kRanking:
      return rank_samples.size();
    case TaskKind::kClassification:
      return clf_examples.size();
  }
  return 0;
}

// ---------------------------------------------------------------------------

std::vector<LinkPair> negative_sample(const MultiRelationalGraph& g,
                                      std::size_t edge_type, std::size_t ratio,
                                      std::uint64_t seed) {
  const EdgeType& et = g.schema().edge_type(edge_type);
  const std::size_t ns = g.node_count(et.src_type);
  const std::size_t nd = g.node_count(et.dst_type);
  const EdgeList& edges = g.edges(edge_type);
  const bool same_type = et.src_type == et.dst_type;
  const std::size_t wanted = ratio * edges.size();

  std::size_t available = 0;
  if (same_type) {
    std::set<std::pair<std::size_t, std::size_t>> linked;
    for (const auto& [s, d] : edges) {
      if (s != d) linked.emplace(std::min(s, d), std::max(s, d));
    }
    available = ns * (ns - (ns > 0 ? 1 : 0)) / 2 - linked.size();
  } else {
    available = ns * nd - edges.size();
  }
  if (available < wanted) {
    throw TaskDataError("insufficient non-edges for '" + et.name + "': need " +
                        std::to_string(wanted) + ", have " +
                        std::to_string(available));
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_src(0, ns == 0 ? 0 : ns - 1);
  std::uniform_int_distribution<std::size_t> pick_dst(0, nd == 0 ? 0 : nd - 1);
  std::set<std::pair<std::size_t, std::size_t>> chosen;
  std::vector<LinkPair> out;
  out.reserve(wanted);
  while (out.size() < wanted) {
    std::size_t s = pick_src(rng);
    std::size_t d = pick_dst(rng);
    if (same_type) {
      if (s == d) continue;
      if (s > d) std::swap(s, d);
      if (g.has_edge(edge_type, d, s)) continue;
    }
    if (g.has_edge(edge_type, s, d)) continue;
    if (!chosen.emplace(s, d).second) continue;
    out.push_back(LinkPair{{et.src_type, s}, {et.dst_type, d}});
  }
  return out;
}

BucketResult bucket_with_reference(std::span<const double> values,
                                   std::span<const double> reference,
                                   std::size_t classes) {
  if (classes < 2) throw std::invalid_argument("bucketing needs K >= 2");
  if (reference.empty()) throw std::invalid_argument("empty bucketing reference");
  std::vector<double> sorted(reference.begin(), reference.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  BucketResult result;
  for (std::size_t k = 1; k < classes; ++k) {
    const double t = sorted[k * n / classes];
    // A threshold at the minimum would leave class 0 empty.
    if (t == sorted.front()) continue;
    if (!result.thresholds.empty() && result.thresholds.back() == t) continue;
    result.thresholds.push_back(t);
  }
  result.degenerate = result.thresholds.size() + 1 < classes;
  result.labels.reserve(values.size());
  for (double v : values) {
    const auto it = std::upper_bound(result.thresholds.begin(),
                                     result.thresholds.end(), v);
    result.labels.push_back(static_cast<std::size_t>(it - result.thresholds.begin()));
  }
  return result;
}

BucketResult bucket_labels(std::span<const double> values, std::size_t classes) {
  return bucket_with_reference(values, values, classes);
}

RankingSampleReport build_ranking_samples(const MultiRelationalGraph& g,
                                          std::span<const double> accepted_flags,
                                          std::size_t answer_to_edge_type) {
  const EdgeType& et = g.schema().edge_type(answer_to_edge_type);
  if (accepted_flags.size() != g.node_count(et.src_type)) {
    throw TaskDataError("acceptance table has " +
                        std::to_string(accepted_flags.size()) +
                        " entries for " +
                        std::to_string(g.node_count(et.src_type)) + " answers");
  }
  RankingSampleReport report;
  for (std::size_t q = 0; q < g.node_count(et.dst_type); ++q) {
    const auto answers = g.in_neighbor_indices(answer_to_edge_type, q);
    if (answers.size() < kMinAnswers) {
      ++report.too_few_answers;
      continue;
    }
    std::optional<std::size_t> accepted;
    for (std::size_t j = 0; j < answers.size(); ++j) {
      if (accepted_flags[answers[j]] != 0.0) {
        accepted = j;
        break;
      }
    }
    if (!accepted) {
      ++report.no_accepted;
      continue;
    }
    RankSample s;
    s.question = {et.dst_type, q};
    for (std::size_t a : answers) s.answers.push_back({et.src_type, a});
    s.accepted = *accepted;
    report.samples.push_back(std::move(s));
  }
  return report;
}

Split split_indices(std::size_t n, std::uint64_t seed) {
  if (n < 10) {
    throw TaskDataError("cannot split " + std::to_string(n) +
                        " examples 8:1:1 (need at least 10)");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_train = 8 * n / 10;
  const std::size_t n_dev = n / 10;
  Split s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.dev.assign(perm.begin() + n_train, perm.begin() + n_train + n_dev);
  s.test.assign(perm.begin() + n_train + n_dev, perm.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.dev.begin(), s.dev.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

Split split_or_train_only(std::size_t n, std::uint64_t seed) {
  if (n >= 10) return split_indices(n, seed);
  Split s;
  s.train.resize(n);
  std::iota(s.train.begin(), s.train.end(), 0);
  return s;
}

// ---------------------------------------------------------------------------
// Task files

namespace {

std::vector<std::string> tokens(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string t;
  while (ss >> t) out.push_back(t);
  return out;
}

std::size_t to_index(const std::string& token, std::size_t line) {
  std::size_t v = 0;
  const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw TaskDataError("line " + std::to_string(line) +
                        ": expected a non-negative integer, got '" + token + "'");
  }
  return v;
}

void check_node(const MultiRelationalGraph& g, const GlobalNodeId& n,
                const std::string& context) {
  if (n.node_type >= g.schema().num_node_types() ||
      n.local_index >= g.node_count(n.node_type)) {
    throw TaskDataError(context + ": node " + std::to_string(n.local_index) +
                        " out of range");
  }
}

}  // namespace

void validate_task(const TaskSpec& task, const MultiRelationalGraph& g) {
  const std::string ctx = "task '" + task.name + "'";
  const std::size_t n = task.num_examples();
  std::vector<int> seen(n, 0);
  for (SplitName which : {SplitName::kTrain, SplitName::kDev, SplitName::kTest}) {
    for (std::size_t i : task.split.get(which)) {
      if (i >= n) throw TaskDataError(ctx + ": split index out of range");
      if (seen[i]++) throw TaskDataError(ctx + ": splits overlap");
    }
  }
  switch (task.kind) {
    case TaskKind::kLink: {
      const std::size_t r = g.schema().edge_type_index(task.edge_type);
      const EdgeType& et = g.schema().edge_type(r);
      for (const LinkExample& e : task.link_examples) {
        if (e.pair.src.node_type != et.src_type ||
            e.pair.dst.node_type != et.dst_type) {
          throw TaskDataError(ctx + ": pair endpoint types do not match '" +
                              et.name + "'");
        }
        check_node(g, e.pair.src, ctx);
        check_node(g, e.pair.dst, ctx);
      }
      break;
    }
    case TaskKind::kRanking:
      for (const RankSample& s : task.rank_samples) {
        check_node(g, s.question, ctx);
        for (const auto& a : s.answers) check_node(g, a, ctx);
        if (s.answers.size() < kMinAnswers || s.accepted >= s.answers.size()) {
          throw TaskDataError(ctx + ": malformed ranking sample");
        }
      }
      break;
    case TaskKind::kClassification:
      if (task.classes < 2) throw TaskDataError(ctx + ": needs K >= 2");
      for (const ClfExample& e : task.clf_examples) {
        check_node(g, e.node, ctx);
        if (e.label >= task.classes) {
          throw TaskDataError(ctx + ": label outside [0, K)");
        }
      }
      break;
  }
}

std::string serialize_task(const TaskSpec& task, const MultiRelationalGraph& g) {
  const Schema& schema = g.schema();
  std::string out = "task " + task.name + " " + to_string(task.kind) + "\n";
  switch (task.kind) {
    case TaskKind::kLink:
      out += "target " + task.edge_type + "\n";
      break;
    case TaskKind::kRanking:
      out += "target " + task.question_type + " " + task.answer_type + "\n";
      break;
    case TaskKind::kClassification:
      out += "target " + task.node_type + " " + std::to_string(task.classes) +
             "\n";
      break;
  }
  for (SplitName which : {SplitName::kTrain, SplitName::kDev, SplitName::kTest}) {
    out += "split " + to_string(which) + "\n";
    for (std::size_t i : task.split.get(which)) {
      switch (task.kind) {
        case TaskKind::kLink: {
          const LinkExample& e = task.link_examples.at(i);
          out += (e.positive ? "pos " : "neg ") +
                 schema.node_type_name(e.pair.src.node_type) + " " +
                 std::to_string(e.pair.src.local_index) + " " +
                 schema.node_type_name(e.pair.dst.node_type) + " " +
                 std::to_string(e.pair.dst.local_index) + "\n";
          break;
        }
        case TaskKind::kRanking: {
          const RankSample& s = task.rank_samples.at(i);
          out += "sample " + std::to_string(s.question.local_index);
          for (const auto& a : s.answers) out += " " + std::to_string(a.local_index);
          out += " | " + std::to_string(s.accepted) + "\n";
          break;
        }
        case TaskKind::kClassification: {
          const ClfExample& e = task.clf_examples.at(i);
          out += "label " + schema.node_type_name(e.node.node_type) + " " +
                 std::to_string(e.node.local_index) + " " +
                 std::to_string(e.label) + "\n";
          break;
        }
      }
    }
  }
  return out;
}

TaskSpec parse_task(const std::string& text, const MultiRelationalGraph& g) {
  const Schema& schema = g.schema();
  std::istringstream in(text);
  std::string line;
  std::size_t ln = 0;
  auto fail = [&](const std::string& msg) -> TaskDataError {
    return TaskDataError("line " + std::to_string(ln) + ": " + msg);
  };
  auto node_type = [&](const std::string& name) {
    const auto t = schema.find_node_type(name);
    if (!t) throw fail("unknown node type '" + name + "'");
    return *t;
  };

  TaskSpec task;
  if (!std::getline(in, line)) throw TaskDataError("empty task file");
  ++ln;
  auto head = tokens(line);
  if (head.size() != 3 || head[0] != "task") throw fail("expected 'task <name> <kind>'");
  task.name = head[1];
  task.kind = parse_task_kind(head[2]);

  if (!std::getline(in, line)) throw fail("missing target line");
  ++ln;
  auto target = tokens(line);
  if (target.empty() || target[0] != "target") throw fail("expected target line");
  switch (task.kind) {
    case TaskKind::kLink:
      if (target.size() != 2) throw fail("link target takes one edge type");
      if (!schema.find_edge_type(target[1])) {
        throw fail("unknown edge type '" + target[1] + "'");
      }
      task.edge_type = target[1];
      break;
    case TaskKind::kRanking:
      if (target.size() != 3) throw fail("ranking target takes two node types");
      node_type(target[1]);
      node_type(target[2]);
      task.question_type = target[1];
      task.answer_type = target[2];
      break;
    case TaskKind::kClassification:
      if (target.size() != 3) throw fail("classification target takes type and K");
      node_type(target[1]);
      task.node_type = target[1];
      task.classes = to_index(target[2], ln);
      break;
  }

  std::optional<SplitName> current;
  std::set<SplitName> seen_splits;
  while (std::getline(in, line)) {
    ++ln;
    const auto tok = tokens(line);
    if (tok.empty()) throw fail("blank line");
    if (tok[0] == "split") {
      if (tok.size() != 2) throw fail("malformed split line");
      current = parse_split_name(tok[1]);
      if (!current) throw fail("unknown split '" + tok[1] + "'");
      if (!seen_splits.insert(*current).second) throw fail("repeated split section");
      continue;
    }
    if (!current) throw fail("record outside a split section");
    std::vector<std::size_t>& bucket =
        *current == SplitName::kTrain ? task.split.train
        : *current == SplitName::kDev ? task.split.dev
                                      : task.split.test;
    if (task.kind == TaskKind::kLink && (tok[0] == "pos" || tok[0] == "neg")) {
      if (tok.size() != 5) throw fail("malformed pair line");
      LinkExample e;
      e.positive = tok[0] == "pos";
      e.pair.src = {node_type(tok[1]), to_index(tok[2], ln)};
      e.pair.dst = {node_type(tok[3]), to_index(tok[4], ln)};
      bucket.push_back(task.link_examples.size());
      task.link_examples.push_back(e);
    } else if (task.kind == TaskKind::kRanking && tok[0] == "sample") {
      if (tok.size() < 5 || tok[tok.size() - 2] != "|") {
        throw fail("expected 'sample q a1 ... | y'");
      }
      RankSample s;
      const std::size_t qt = node_type(task.question_type);
      const std::size_t at = node_type(task.answer_type);
      s.question = {qt, to_index(tok[1], ln)};
      for (std::size_t i = 2; i + 2 < tok.size(); ++i) {
        s.answers.push_back({at, to_index(tok[i], ln)});
      }
      s.accepted = to_index(tok.back(), ln);
      bucket.push_back(task.rank_samples.size());
      task.rank_samples.push_back(std::move(s));
    } else if (task.kind == TaskKind::kClassification && tok[0] == "label") {
      if (tok.size() != 4) throw fail("malformed label line");
      ClfExample e;
      e.node = {node_type(tok[1]), to_index(tok[2], ln)};
      e.label = to_index(tok[3], ln);
      bucket.push_back(task.clf_examples.size());
      task.clf_examples.push_back(e);
    } else {
      throw fail("unexpected record '" + tok[0] + "' for a " +
                 to_string(task.kind) + " task");
    }
  }
  validate_task(task, g);
  return task;
}

void save_task(const TaskSpec& task, const MultiRelationalGraph& g,
               const std::filesystem::path& path) {
  const std::string text = serialize_task(task, g);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TaskDataError("cannot write " + path.string());
  out << text;
}

TaskSpec load_task(const std::filesystem::path& path,
                   const MultiRelationalGraph& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TaskDataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_task(ss.str(), g);
  } catch (const TaskDataError& e) {
    throw TaskDataError(path.string() + ": " + e.what());
  }
}

void save_task_dir(std::span<const TaskSpec> tasks, const MultiRelationalGraph& g,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index", std::ios::binary | std::ios::trunc);
  if (!index) throw TaskDataError("cannot write task index in " + dir.string());
  for (const TaskSpec& t : tasks) {
    save_task(t, g, dir / (t.name + ".task"));
    index << t.name << "\n";
  }
}

std::vector<TaskSpec> load_task_dir(const std::filesystem::path& dir,
                                    const MultiRelationalGraph& g) {
  std::ifstream index(dir / "index");
  if (!index) throw TaskDataError("missing task index in " + dir.string());
  std::vector<TaskSpec> tasks;
  std::string name;
  while (std::getline(index, name)) {
    if (name.empty()) continue;
    tasks.push_back(load_task(dir / (name + ".task"), g));
    if (tasks.back().name != name) {
      throw TaskDataError("task file " + name + ".task declares task '" +
                          tasks.back().name + "'");
    }
  }
  return tasks;
}

}  // namespace hmtgin
