#include "hmtgin/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "hmtgin/config.hpp"

namespace hmtgin {

Schema cqa::make_schema() {
  Schema s;
  s.add_node_type(kQuestion);
  s.add_node_type(kAnswer);
  s.add_node_type(kUser);
  s.add_node_type(kTag);
  s.add_edge_type(kAsks, kUser, kQuestion);
  s.add_edge_type(kOwnerOf, kUser, kAnswer);
  s.add_edge_type(kAnswerTo, kAnswer, kQuestion);
  s.add_edge_type(kTaggedWith, kQuestion, kTag);
  s.add_edge_type(kCommentOn, kUser, kQuestion);
  s.add_edge_type(kDuplicate, kQuestion, kQuestion);
  return s;
}

// ---------------------------------------------------------------------------
// Spec

namespace {

struct SpecField {
  const char* key;
  std::function<void(SyntheticSpec&, const KeyValue&)> set;
  std::function<std::string(const SyntheticSpec&)> get;
};

template <typename T>
SpecField count_field(const char* key, T SyntheticSpec::*member) {
  return {key,
          [member](SyntheticSpec& s, const KeyValue& kv) {
            s.*member = value_as_count(kv);
          },
          [member](const SyntheticSpec& s) { return std::to_string(s.*member); }};
}

SpecField real_field(const char* key, double SyntheticSpec::*member) {
  return {key,
          [member](SyntheticSpec& s, const KeyValue& kv) {
            s.*member = value_as_real(kv);
          },
          [member](const SyntheticSpec& s) { return format_real(s.*member); }};
}

const std::vector<SpecField>& spec_fields() {
  static const std::vector<SpecField> fields = {
      count_field("questions", &SyntheticSpec::questions),
      count_field("answered_questions", &SyntheticSpec::answered_questions),
      count_field("answers_min", &SyntheticSpec::answers_min),
      count_field("answers_max", &SyntheticSpec::answers_max),
      count_field("users", &SyntheticSpec::users),
      count_field("tags", &SyntheticSpec::tags),
      count_field("max_tags_per_question", &SyntheticSpec::max_tags_per_question),
      count_field("duplicate_pairs", &SyntheticSpec::duplicate_pairs),
      count_field("comments_per_question", &SyntheticSpec::comments_per_question),
      count_field("feature_dim", &SyntheticSpec::feature_dim),
      real_field("feature_noise", &SyntheticSpec::feature_noise),
      real_field("tag_signal", &SyntheticSpec::tag_signal),
      real_field("duplicate_noise", &SyntheticSpec::duplicate_noise),
      real_field("score_signal", &SyntheticSpec::score_signal),
      real_field("answer_topic_signal", &SyntheticSpec::answer_topic_signal),
      real_field("reputation_signal", &SyntheticSpec::reputation_signal),
      real_field("acceptance_score_weight",
                 &SyntheticSpec::acceptance_score_weight),
      real_field("acceptance_reputation_weight",
                 &SyntheticSpec::acceptance_reputation_weight),
      real_field("acceptance_noise", &SyntheticSpec::acceptance_noise),
      {"seed",
       [](SyntheticSpec& s, const KeyValue& kv) { s.seed = value_as_seed(kv); },
       [](const SyntheticSpec& s) { return std::to_string(s.seed); }},
  };
  return fields;
}

}  // namespace

std::size_t SyntheticSpec::answer_count_upper_bound() const {
  return answered_questions * answers_max;
}

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& msg) { throw SyntheticSpecError(msg); };
  if (answers_min < kMinAnswers) {
    fail("answers_min must be at least " + std::to_string(kMinAnswers) +
         ", got " + std::to_string(answers_min));
  }
  if (answers_max < answers_min) fail("answers_max is below answers_min");
  if (questions == 0) fail("questions must be positive");
  if (answered_questions > questions) fail("answered_questions exceeds questions");
  if (users == 0) fail("users must be positive");
  if (tags == 0) fail("tags must be positive");
  if (max_tags_per_question == 0 || max_tags_per_question > tags) {
    fail("max_tags_per_question must lie in [1, tags]");
  }
  if (2 * duplicate_pairs > questions) fail("too many duplicate pairs");
  if (feature_dim == 0) fail("feature_dim must be positive");
  for (double v : {feature_noise, tag_signal, duplicate_noise, score_signal,
                   reputation_signal, acceptance_noise}) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail("signal strengths must be >= 0");
  }
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec spec;
  for (const KeyValue& kv : parse_key_values(text)) {
    const auto& fields = spec_fields();
    const auto it = std::find_if(fields.begin(), fields.end(),
                                 [&](const SpecField& f) { return kv.key == f.key; });
    if (it == fields.end()) {
      throw SyntheticSpecError("line " + std::to_string(kv.line) +
                               ": unknown spec key '" + kv.key + "'");
    }
    try {
      it->set(spec, kv);
    } catch (const ConfigError& e) {
      throw SyntheticSpecError(e.what());
    }
  }
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  try {
    return parse_synthetic_spec(read_text_file(path));
  } catch (const ConfigError& e) {
    throw SyntheticSpecError(e.what());
  }
}

std::string serialize_synthetic_spec(const SyntheticSpec& spec) {
  std::string out;
  for (const SpecField& f : spec_fields()) {
    out += std::string(f.key) + " = " + f.get(spec) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ground truth

const AttributeTable& GroundTruth::get(const std::string& node_type,
                                       const std::string& name) const {
  for (const AttributeTable& t : tables) {
    if (t.node_type == node_type && t.name == name) return t;
  }
  throw TaskDataError("no ground-truth attribute " + node_type + "." + name);
}

std::string serialize_ground_truth(const GroundTruth& truth) {
  std::string out;
  for (const AttributeTable& t : truth.tables) {
    out += "attribute " + t.node_type + " " + t.name + " " +
           std::to_string(t.values.size()) + "\n";
    for (double v : t.values) out += format_real(v) + "\n";
  }
  return out;
}

GroundTruth parse_ground_truth(const std::string& text) {
  GroundTruth truth;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream head(line);
    std::string word, type, name;
    std::size_t count = 0;
    if (!(head >> word >> type >> name >> count) || word != "attribute") {
      throw TaskDataError("malformed ground-truth header: '" + line + "'");
    }
    AttributeTable t{type, name, {}};
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::getline(in, line)) throw TaskDataError("truncated ground truth");
      t.values.push_back(parse_real(line));
    }
    truth.tables.push_back(std::move(t));
  }
  return truth;
}

// ---------------------------------------------------------------------------
// Generator

namespace {

std::vector<double> random_unit(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  double norm = 0.0;
  do {
    for (double& x : v) x = normal(rng);
    norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  } while (norm < 1e-8);
  for (double& x : v) x /= norm;
  return v;
}

// Orthonormal tag directions while there is room, random unit vectors after
// that.
std::vector<std::vector<double>> tag_directions(std::size_t tags, std::size_t d,
                                                std::mt19937_64& rng) {
  std::vector<std::vector<double>> dirs;
  for (std::size_t t = 0; t < tags; ++t) {
    std::vector<double> v = random_unit(d, rng);
    if (t < d) {
      for (const auto& u : dirs) {
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += u[c] * v[c];
        for (std::size_t c = 0; c < d; ++c) v[c] -= dot * u[c];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      for (double& x : v) x /= norm;
    }
    dirs.push_back(std::move(v));
  }
  return dirs;
}

void add_noise(std::span<double> row, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : row) x += scale * normal(rng);
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = spec.feature_dim;
  Schema schema = cqa::make_schema();
  const std::size_t tq = schema.node_type_index(cqa::kQuestion);
  const std::size_t ta = schema.node_type_index(cqa::kAnswer);
  const std::size_t tu = schema.node_type_index(cqa::kUser);
  const std::size_t tt = schema.node_type_index(cqa::kTag);

  const auto tag_dir = tag_directions(spec.tags, d, rng);
  const auto score_dir = random_unit(d, rng);
  const auto reputation_dir = random_unit(d, rng);

  // Tags.
  Tensor tag_features(Shape{spec.tags, d});
  for (std::size_t t = 0; t < spec.tags; ++t) {
    auto row = tag_features.row(t);
    for (std::size_t c = 0; c < d; ++c) row[c] = spec.tag_signal * tag_dir[t][c];
    add_noise(row, spec.feature_noise, rng);
  }

  // Questions and their tags.
  std::vector<std::vector<std::size_t>> question_tags(spec.questions);
  std::uniform_int_distribution<std::size_t> n_tags(1, spec.max_tags_per_question);
  std::vector<std::size_t> tag_pool(spec.tags);
  std::iota(tag_pool.begin(), tag_pool.end(), 0);
  for (auto& qt : question_tags) {
    std::shuffle(tag_pool.begin(), tag_pool.end(), rng);
    qt.assign(tag_pool.begin(), tag_pool.begin() + n_tags(rng));
    std::sort(qt.begin(), qt.end());
  }

  std::vector<std::size_t> qperm(spec.questions);
  std::iota(qperm.begin(), qperm.end(), 0);
  std::shuffle(qperm.begin(), qperm.end(), rng);
  EdgeList duplicates;
  for (std::size_t p = 0; p < spec.duplicate_pairs; ++p) {
    const std::size_t a = std::min(qperm[2 * p], qperm[2 * p + 1]);
    const std::size_t b = std::max(qperm[2 * p], qperm[2 * p + 1]);
    duplicates.emplace_back(a, b);
    question_tags[b] = question_tags[a];
  }

  Tensor question_features(Shape{spec.questions, d});
  for (std::size_t q = 0; q < spec.questions; ++q) {
    auto row = question_features.row(q);
    const double w = spec.tag_signal / static_cast<double>(question_tags[q].size());
    for (std::size_t t : question_tags[q])
      for (std::size_t c = 0; c < d; ++c) row[c] += w * tag_dir[t][c];
    add_noise(row, spec.feature_noise, rng);
  }
  for (const auto& [a, b] : duplicates) {
    auto src = question_features.row(a);
    auto dst = question_features.row(b);
    std::copy(src.begin(), src.end(), dst.begin());
    add_noise(dst, spec.duplicate_noise, rng);
  }

  // Users.
  std::vector<double> reputation(spec.users);
  Tensor user_features(Shape{spec.users, d});
  for (std::size_t u = 0; u < spec.users; ++u) {
    reputation[u] = normal(rng);
    auto row = user_features.row(u);
    for (std::size_t c = 0; c < d; ++c)
      row[c] = spec.reputation_signal * reputation[u] * reputation_dir[c];
    add_noise(row, spec.feature_noise, rng);
  }

  // Answers: the first answered_questions of a shuffled question order.
  std::shuffle(qperm.begin(), qperm.end(), rng);
  std::vector<std::size_t> answered(qperm.begin(),
                                    qperm.begin() + spec.answered_questions);
  std::sort(answered.begin(), answered.end());
  std::uniform_int_distribution<std::size_t> n_answers(spec.answers_min,
                                                       spec.answers_max);
  std::uniform_int_distribution<std::size_t> pick_user(0, spec.users - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<double> score, accepted;
  EdgeList owner_of, answer_to;
  std::vector<std::vector<double>> answer_rows;
  for (std::size_t q : answered) {
    const std::size_t count = n_answers(rng);
    const std::size_t first = score.size();
    double best_utility = -INFINITY;
    std::size_t best = first;
    for (std::size_t j = 0; j < count; ++j) {
      const std::size_t a = score.size();
      const std::size_t u = pick_user(rng);
      const double s = normal(rng);
      score.push_back(s);
      accepted.push_back(0.0);
      owner_of.emplace_back(u, a);
      answer_to.emplace_back(a, q);
      std::vector<double> row(d);
      for (std::size_t c = 0; c < d; ++c) row[c] = spec.score_signal * s * score_dir[c];
      const double tw =
          spec.answer_topic_signal / static_cast<double>(question_tags[q].size());
      for (std::size_t t : question_tags[q])
        for (std::size_t c = 0; c < d; ++c) row[c] += tw * tag_dir[t][c];
      add_noise(row, spec.feature_noise, rng);
      answer_rows.push_back(std::move(row));

      const double gumbel = -std::log(-std::log(std::max(unit(rng), 1e-300)));
      const double utility = spec.acceptance_score_weight * s +
                             spec.acceptance_reputation_weight * reputation[u] +
                             spec.acceptance_noise * gumbel;
      if (utility > best_utility) {
        best_utility = utility;
        best = a;
      }
    }
    accepted[best] = 1.0;
  }
  Tensor answer_features(Shape{score.size(), d});
  for (std::size_t a = 0; a < score.size(); ++a) {
    std::copy(answer_rows[a].begin(), answer_rows[a].end(),
              answer_features.row(a).begin());
  }

  EdgeList asks, tagged_with, comment_on;
  for (std::size_t q = 0; q < spec.questions; ++q) {
    asks.emplace_back(pick_user(rng), q);
    for (std::size_t t : question_tags[q]) tagged_with.emplace_back(q, t);
    std::set<std::size_t> commenters;
    for (std::size_t c = 0; c < spec.comments_per_question && c < spec.users; ++c) {
      std::size_t u = pick_user(rng);
      while (commenters.count(u)) u = pick_user(rng);
      commenters.insert(u);
      comment_on.emplace_back(u, q);
    }
  }

  std::vector<Tensor> features(schema.num_node_types());
  features[tq] = std::move(question_features);
  features[ta] = std::move(answer_features);
  features[tu] = std::move(user_features);
  features[tt] = std::move(tag_features);

  std::vector<EdgeList> edges(schema.num_edge_types());
  edges[schema.edge_type_index(cqa::kAsks)] = std::move(asks);
  edges[schema.edge_type_index(cqa::kOwnerOf)] = std::move(owner_of);
  edges[schema.edge_type_index(cqa::kAnswerTo)] = std::move(answer_to);
  edges[schema.edge_type_index(cqa::kTaggedWith)] = std::move(tagged_with);
  edges[schema.edge_type_index(cqa::kCommentOn)] = std::move(comment_on);
  edges[schema.edge_type_index(cqa::kDuplicate)] = std::move(duplicates);

  SyntheticData out{MultiRelationalGraph::with_reverses(
                        std::move(schema), std::move(features), std::move(edges)),
                    {}};
  out.truth.tables.push_back({cqa::kAnswer, kScoreAttribute, std::move(score)});
  out.truth.tables.push_back({cqa::kAnswer, kAcceptedAttribute, std::move(accepted)});
  out.truth.tables.push_back({cqa::kUser, kReputationAttribute, std::move(reputation)});
  return out;
}

// ---------------------------------------------------------------------------
// Dataset assembly

namespace {

std::optional<TaskSpec> build_link_task(const MultiRelationalGraph& full,
                                        const std::string& name,
                                        const std::string& edge_name,
                                        std::uint64_t seed,
                                        std::vector<std::string>& report) {
  const std::size_t r = full.schema().edge_type_index(edge_name);
  const EdgeList& positives = full.edges(r);
  if (positives.empty()) {
    report.push_back("task " + name + " disabled: no '" + edge_name + "' edges");
    return std::nullopt;
  }
  std::vector<LinkPair> negatives;
  try {
    negatives = negative_sample(full, r, 2, seed);
  } catch (const TaskDataError& e) {
    report.push_back("task " + name + " disabled: " + e.what());
    return std::nullopt;
  }
  const EdgeType& et = full.schema().edge_type(r);
  TaskSpec task;
  task.name = name;
  task.kind = TaskKind::kLink;
  task.edge_type = edge_name;
  for (const auto& [s, d] : positives) {
    task.link_examples.push_back({{{et.src_type, s}, {et.dst_type, d}}, true});
  }
  for (const LinkPair& p : negatives) task.link_examples.push_back({p, false});
  task.split = split_or_train_only(task.link_examples.size(), seed + 1);
  report.push_back("task " + name + ": " + std::to_string(positives.size()) +
                   " positive, " + std::to_string(negatives.size()) +
                   " negative pairs");
  return task;
}

std::optional<TaskSpec> build_clf_task(const MultiRelationalGraph& g,
                                       const std::string& name,
                                       const std::string& node_type,
                                       const std::vector<double>& values,
                                       std::size_t classes, std::uint64_t seed,
                                       std::vector<std::string>& report) {
  const std::size_t t = g.schema().node_type_index(node_type);
  const std::size_t n = g.node_count(t);
  if (n == 0) {
    report.push_back("task " + name + " disabled: no " + node_type + " nodes");
    return std::nullopt;
  }
  TaskSpec task;
  task.name = name;
  task.kind = TaskKind::kClassification;
  task.node_type = node_type;
  task.classes = classes;
  task.split = split_or_train_only(n, seed);
  std::vector<double> reference;
  for (std::size_t i : task.split.train) reference.push_back(values.at(i));
  const BucketResult buckets = bucket_with_reference(values, reference, classes);
  if (buckets.degenerate) {
    report.push_back("warning: task " + name +
                     " has fewer distinct buckets than classes");
  }
  for (std::size_t i = 0; i < n; ++i) {
    task.clf_examples.push_back({{t, i}, buckets.labels[i]});
  }
  report.push_back("task " + name + ": " + std::to_string(n) + " labelled " +
                   node_type + " nodes");
  return task;
}

}  // namespace

CqaDataset build_cqa_dataset(const MultiRelationalGraph& full,
                             const GroundTruth& truth, std::uint64_t seed) {
  CqaDataset out;
  const Schema& schema = full.schema();
  std::vector<std::pair<std::size_t, EdgeList>> hidden;

  auto link = [&](const std::string& name, const std::string& edge_name,
                  std::uint64_t task_seed) {
    auto task = build_link_task(full, name, edge_name, task_seed, out.report);
    if (!task) return;
    const std::size_t r = schema.edge_type_index(edge_name);
    // Every target edge is hidden, training positives included, so that
    // message passing never sees the links being scored.
    EdgeList held_out;
    for (const LinkExample& e : task->link_examples) {
      if (e.positive) {
        held_out.emplace_back(e.pair.src.local_index, e.pair.dst.local_index);
      }
    }
    hidden.emplace_back(r, std::move(held_out));
    out.tasks.push_back(std::move(*task));
  };

  link(cqa::kTagRecommendation, cqa::kTaggedWith, seed * 1000 + 11);
  link(cqa::kDuplicateDetection, cqa::kDuplicate, seed * 1000 + 23);

  {
    const auto& accepted = truth.get(cqa::kAnswer, kAcceptedAttribute).values;
    auto ranking = build_ranking_samples(
        full, accepted, schema.edge_type_index(cqa::kAnswerTo));
    if (ranking.samples.empty()) {
      out.report.push_back("task ar disabled: no question with at least " +
                           std::to_string(kMinAnswers) + " answers");
    } else {
      TaskSpec task;
      task.name = cqa::kAnswerRecommendation;
      task.kind = TaskKind::kRanking;
      task.question_type = cqa::kQuestion;
      task.answer_type = cqa::kAnswer;
      task.rank_samples = std::move(ranking.samples);
      task.split = split_or_train_only(task.rank_samples.size(), seed * 1000 + 37);
      out.report.push_back(
          "task ar: " + std::to_string(task.rank_samples.size()) + " samples, " +
          std::to_string(ranking.too_few_answers) + " questions with too few answers, " +
          std::to_string(ranking.no_accepted) + " without an accepted answer");
      out.tasks.push_back(std::move(task));
    }
  }

  if (auto t = build_clf_task(full, cqa::kAnswerScore, cqa::kAnswer,
                              truth.get(cqa::kAnswer, kScoreAttribute).values,
                              cqa::kAnswerScoreClasses, seed * 1000 + 41,
                              out.report)) {
    out.tasks.push_back(std::move(*t));
  }
  if (auto t = build_clf_task(full, cqa::kUserReputation, cqa::kUser,
                              truth.get(cqa::kUser, kReputationAttribute).values,
                              cqa::kReputationClasses, seed * 1000 + 53,
                              out.report)) {
    out.tasks.push_back(std::move(*t));
  }

  out.graph = full;
  for (const auto& [r, edges] : hidden) {
    out.graph = out.graph.without_edges(r, edges);
  }
  return out;
}

double acceptance_score_correlation(const MultiRelationalGraph& g,
                                    const GroundTruth& truth) {
  const auto& score = truth.get(cqa::kAnswer, kScoreAttribute).values;
  const auto& accepted = truth.get(cqa::kAnswer, kAcceptedAttribute).values;
  const std::size_t r = g.schema().edge_type_index(cqa::kAnswerTo);
  const std::size_t tq = g.schema().edge_type(r).dst_type;

  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) out[order[k]] = avg;
      i = j + 1;
    }
    return out;
  };
  auto pearson = [](const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
  };

  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t q = 0; q < g.node_count(tq); ++q) {
    const auto answers = g.in_neighbor_indices(r, q);
    std::vector<double> s, a;
    for (std::size_t i : answers) {
      s.push_back(score[i]);
      a.push_back(accepted[i]);
    }
    if (s.size() < 2) continue;
    if (std::count(a.begin(), a.end(), 1.0) == 0) continue;
    total += pearson(ranks(s), ranks(a));
    ++counted;
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

}  // namespace hmtgin
