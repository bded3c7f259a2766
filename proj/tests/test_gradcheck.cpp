#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "hmtgin/gradcheck.hpp"
#include "hmtgin/synthetic.hpp"

using namespace hmtgin;

namespace {

CqaDataset tiny() {
  std::ifstream in(std::filesystem::path(HMTGIN_SOURCE_DIR) / "configs" / "tiny.spec");
  std::stringstream ss;
  ss << in.rdbuf();
  const SyntheticSpec spec = parse_synthetic_spec(ss.str());
  const SyntheticData d = generate_synthetic(spec);
  return build_cqa_dataset(d.graph, d.truth, spec.seed);
}

}  // namespace

TEST_CASE("every term and parameter group passes on the tiny graph") {
  const CqaDataset ds = tiny();
  CHECK(ds.graph.total_nodes() == 20);
  const TrainConfig cfg;
  const GradCheckSummary s = run_gradcheck(ds.graph, ds.tasks, cfg);
  CHECK(s.passed);
  CHECK(s.worst()->max_rel_error <= 1e-5);

  std::set<std::string> terms, params;
  for (const GroupCheck& row : s.rows) {
    terms.insert(row.term);
    params.insert(row.parameter);
  }
  for (const TaskSpec& t : ds.tasks) CHECK(terms.count(t.name) == 1);
  CHECK(terms.count("c1") == 1);
  CHECK(terms.count("c2") == 1);
  CHECK(terms.count("total") == 1);
  CHECK(s.rows.size() == terms.size() * params.size());
}

TEST_CASE("corrupted backward rule is caught") {
  const CqaDataset ds = tiny();
  testing::set_corrupt_backward(true);
  const GradCheckSummary s = run_gradcheck(ds.graph, ds.tasks, TrainConfig{});
  testing::set_corrupt_backward(false);
  CHECK_FALSE(s.passed);
  CHECK(s.worst()->max_rel_error > 1e-5);
}
