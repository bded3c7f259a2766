#include <cmath>
#include <numeric>

#include "doctest.h"
#include "hmtgin/synthetic.hpp"
#include "support.hpp"

using namespace hmtgin;

namespace {

// Average ranks, ties share the mean of their positions.
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (i + j) / 2.0;
    i = j + 1;
  }
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("default spec gives a valid 500-node graph") {
  const SyntheticData d = generate_synthetic(SyntheticSpec{});
  CHECK(d.graph.total_nodes() == 500);
  CHECK(d.graph.violations().empty());
  const std::size_t answer = d.graph.schema().node_type_index("answer");
  CHECK(d.truth.get("answer", kScoreAttribute).values.size() == d.graph.node_count(answer));
  for (std::size_t t = 0; t < d.graph.schema().num_node_types(); ++t) {
    CHECK(d.graph.feature_dim(t) == 16);
  }
}

TEST_CASE("same spec and seed give the same bytes") {
  SyntheticSpec spec;
  spec.seed = 42;
  const SyntheticData a = generate_synthetic(spec), b = generate_synthetic(spec);
  CHECK(serialize_graph(a.graph) == serialize_graph(b.graph));
  CHECK(serialize_ground_truth(a.truth) == serialize_ground_truth(b.truth));
  spec.seed = 43;
  CHECK(serialize_graph(generate_synthetic(spec).graph) != serialize_graph(a.graph));
}

TEST_CASE("acceptance tracks answer score") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SyntheticSpec spec;
    spec.seed = seed;
    const SyntheticData d = generate_synthetic(spec);
    const std::size_t r = d.graph.schema().edge_type_index("answer_to");
    const auto& score = d.truth.get("answer", kScoreAttribute).values;
    const auto& accepted = d.truth.get("answer", kAcceptedAttribute).values;
    double total = 0.0;
    std::size_t questions = 0;
    for (std::size_t q = 0; q < d.graph.node_count(d.graph.schema().node_type_index("question")); ++q) {
      std::vector<double> s, a;
      for (std::size_t ans : d.graph.in_neighbor_indices(r, q)) {
        s.push_back(score[ans]);
        a.push_back(accepted[ans]);
      }
      if (s.size() < 2) continue;
      total += pearson(ranks(s), ranks(a));
      ++questions;
    }
    const double rho = total / static_cast<double>(questions);
    CHECK(rho > 0.5);
    CHECK(std::fabs(acceptance_score_correlation(d.graph, d.truth) - rho) < 1e-12);
  }
}

TEST_CASE("label attributes are not feature columns") {
  const SyntheticData d = generate_synthetic(SyntheticSpec{});
  const std::size_t answer = d.graph.schema().node_type_index("answer");
  const auto& score = d.truth.get("answer", kScoreAttribute).values;
  const Tensor& f = d.graph.features(answer);
  for (std::size_t c = 0; c < f.cols(); ++c) {
    std::vector<double> col(f.rows());
    for (std::size_t i = 0; i < f.rows(); ++i) col[i] = f.at(i, c);
    CHECK(col != score);
  }
}

TEST_CASE("spec parsing and validation") {
  const SyntheticSpec s = parse_synthetic_spec("questions = 50\nseed = 9\n");
  CHECK(s.questions == 50);
  CHECK(s.seed == 9);
  CHECK(parse_synthetic_spec(serialize_synthetic_spec(s)).questions == 50);
  CHECK_THROWS(parse_synthetic_spec("no_such_key = 1\n"));
  CHECK_THROWS(parse_synthetic_spec("questions = -1\n"));
  SyntheticSpec few;
  few.answers_min = 7;
  CHECK_THROWS_AS(few.validate(), SyntheticSpecError);
  SyntheticSpec too_many;
  too_many.answered_questions = too_many.questions + 1;
  CHECK_THROWS_AS(too_many.validate(), SyntheticSpecError);
}

TEST_CASE("ground truth tables round-trip") {
  const SyntheticData d = generate_synthetic(SyntheticSpec{});
  const std::string text = serialize_ground_truth(d.truth);
  CHECK(serialize_ground_truth(parse_ground_truth(text)) == text);
}

TEST_CASE("dataset builds all five tasks on the default graph") {
  const SyntheticData d = generate_synthetic(SyntheticSpec{});
  const CqaDataset ds = build_cqa_dataset(d.graph, d.truth, 1);
  std::vector<std::string> names;
  for (const TaskSpec& t : ds.tasks) names.push_back(t.name);
  CHECK(names == std::vector<std::string>{"tr", "dqd", "ar", "asc", "urc"});
  for (const TaskSpec& t : ds.tasks) {
    CHECK_FALSE(t.split.test.empty());
    CHECK_NOTHROW(validate_task(t, ds.graph));
  }
}
