#include <cmath>
#include <filesystem>
#include <memory>
#include <random>

#include "doctest.h"
#include "hmtgin/metrics.hpp"
#include "hmtgin/synthetic.hpp"
#include "hmtgin/trainer.hpp"
#include "support.hpp"

using namespace hmtgin;

namespace {

BinaryScores score(const std::vector<int>& pred, const std::vector<int>& label) {
  auto p = std::make_unique<bool[]>(pred.size());
  auto l = std::make_unique<bool[]>(label.size());
  for (std::size_t i = 0; i < pred.size(); ++i) p[i] = pred[i] != 0;
  for (std::size_t i = 0; i < label.size(); ++i) l[i] = label[i] != 0;
  return binary_accuracy_f1({p.get(), pred.size()}, {l.get(), label.size()});
}

}  // namespace

TEST_CASE("all-negative predictions under 1:2 sampling") {
  const BinaryScores s = score({0, 0, 0, 0, 0, 0}, {1, 0, 0, 1, 0, 0});
  CHECK(s.accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.f1 == 0.0);
}

TEST_CASE("F1 from TP=2, FP=1, FN=1") {
  const BinaryScores s = score({1, 1, 1, 0, 0}, {1, 1, 0, 1, 0});
  CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.accuracy == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_THROWS(score({1}, {1, 0}));
}

TEST_CASE("macro F1 counts a never-predicted class as zero") {
  const std::vector<std::size_t> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const std::vector<std::size_t> preds(10, 0);
  // Class 0: TP 5, FP 5 -> 2/3; class 1: 0.
  CHECK(macro_f1(preds, labels, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  // Class 0 perfect over five samples, class 1 neither predicted nor present.
  const std::vector<std::size_t> five_zeros = {0, 0, 0, 0, 0};
  CHECK(macro_f1(five_zeros, five_zeros, 2) == 0.5);
  CHECK(macro_f1(five_zeros, five_zeros, 1) == 1.0);
  const std::vector<std::size_t> bad = {2};
  CHECK_THROWS(macro_f1(bad, std::vector<std::size_t>{0}, 2));
}

TEST_CASE("HR@3 and NDCG@3 by rank") {
  const double ndcg[] = {1.0, 0.630930, 0.5, 0.0};
  const double hr[] = {1, 1, 1, 0};
  for (std::size_t r = 1; r <= 4; ++r) {
    const RankScores s = hr_ndcg_at_3(r);
    CHECK(std::fabs(s.ndcg3 - ndcg[r - 1]) < 1e-6);
    CHECK(s.hr3 == hr[r - 1]);
  }
  CHECK(hr_ndcg_at_3(2).ndcg3 == 1.0 / std::log2(3.0));
  CHECK_THROWS(hr_ndcg_at_3(0));
}

TEST_CASE("ties count against the accepted answer") {
  const double s[] = {0.2, 0.5, 0.5, 0.1};
  CHECK(pessimistic_rank(s, 1) == 2);
  CHECK(pessimistic_rank(s, 3) == 4);
  const double flat[] = {1, 1, 1, 1};
  CHECK(pessimistic_rank(flat, 0) == 4);
}

TEST_CASE("metric lines parse back to the same values") {
  MetricReport r;
  r.split = "test";
  r.tasks = {{"tr", 21, {{"accuracy", 0.1 + 0.2}, {"f1", 2.0 / 3.0}}},
             {"ar", 5, {{"hr3", 1e-300}, {"ndcg3", 0.63092975357145742}}}};
  const auto lines = parse_metric_lines("header\n" + r.machine_lines() + "trailer\n");
  REQUIRE(lines.size() == 4);
  std::size_t i = 0;
  for (const TaskMetrics& t : r.tasks) {
    for (const MetricValue& v : t.values) {
      CHECK(lines[i].task == t.task);
      CHECK(lines[i].name == v.name);
      CHECK(lines[i].value == v.value);
      ++i;
    }
  }
  CHECK(r.average() == doctest::Approx((0.3 + 2.0 / 3.0 + 1e-300 + 0.63092975357145742) / 4));
  CHECK(r.value("ar", "ndcg3") == 0.63092975357145742);
  CHECK_THROWS(parse_metric_lines("metric=noname value=1\n"));
}

TEST_CASE("checkpoint text round-trips and restores exactly") {
  const SyntheticData d = generate_synthetic(SyntheticSpec{});
  const CqaDataset ds = build_cqa_dataset(d.graph, d.truth, 1);
  const Model model = init_model(ds.graph, ds.tasks, ModelConfig{}, 4);
  const Checkpoint ckpt = snapshot(model);
  const std::string text = serialize_checkpoint(ckpt);
  const auto path = std::filesystem::temp_directory_path() / "hmtgin_metrics.ckpt";
  save_checkpoint(ckpt, path);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(serialize_checkpoint(back) == text);
  CHECK(back == ckpt);

  const Model rebuilt = model_from_checkpoint(back, ds.graph, ds.tasks);
  CHECK(snapshot(rebuilt) == ckpt);
  const MetricReport a = evaluate_all(ds.graph, model, ds.tasks, SplitName::kTest);
  const MetricReport b = evaluate_all(ds.graph, rebuilt, ds.tasks, SplitName::kTest);
  CHECK(a.machine_lines() == b.machine_lines());

  Checkpoint wrong = ckpt;
  wrong.front().value = Tensor(Shape{1, 1});
  Model target = init_model(ds.graph, ds.tasks, ModelConfig{}, 5);
  CHECK_THROWS_AS(restore(target, wrong), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint("tensor a 1 2\n1\n"), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint("nonsense\n"), CheckpointError);
}

TEST_CASE("untrained model on duplicate detection is no better than the majority rate") {
  SyntheticSpec spec;
  spec.duplicate_pairs = 40;
  spec.questions = 120;
  double total = 0.0;
  const int seeds = 10;
  for (int s = 1; s <= seeds; ++s) {
    spec.seed = static_cast<std::uint64_t>(s);
    const SyntheticData d = generate_synthetic(spec);
    const CqaDataset ds = build_cqa_dataset(d.graph, d.truth, spec.seed);
    const Model model = init_model(ds.graph, ds.tasks, ModelConfig{}, spec.seed);
    const TaskSpec& dqd = ds.tasks[1];
    REQUIRE(dqd.name == "dqd");
    total += evaluate_task(dqd, model.head("dqd"), extract_embeddings(ds.graph, model),
                           SplitName::kTrain)
                 .values[0]
                 .value;
  }
  // Random-sign DistMult scores predict positive about half the time.
  const double mean = total / seeds;
  CHECK(mean <= 2.0 / 3.0);
  CHECK(std::fabs(mean - 0.5) < 0.1);
}

TEST_CASE("empty split is an error") {
  TaskSpec t;
  t.name = "x";
  TaskHead h{"x", LinkTaskParams{}};
  GeneratedEmbeddings emb;
  CHECK_THROWS_AS(evaluate_task(t, h, emb, SplitName::kDev), TaskDataError);
}
