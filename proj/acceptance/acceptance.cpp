// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "hmtgin/gradcheck.hpp"
#include "hmtgin/metrics.hpp"
#include "hmtgin/synthetic.hpp"
#include "hmtgin/trainer.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace hmtgin;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double scalar(const std::function<Var(Tape&)>& f) {
  Tape t(false);
  return f(t).value().item();
}

std::vector<Tensor> forward(const MultiRelationalGraph& g,
                            const std::vector<MrginLayerParams>& layers) {
  Tape tape(false);
  std::vector<Tensor> out;
  for (const Var& v : mrgin_forward(tape, g, layers, testutil::constants(g))) {
    out.push_back(v.value());
  }
  return out;
}

SyntheticSpec read_spec(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synthetic_spec(ss.str());
}

// 1
Outcome gradient_integrity() {
  Outcome o;
  const auto t0 = Clock::now();
  const SyntheticSpec spec = read_spec(fs::path(HMTGIN_SOURCE_DIR) / "configs" / "tiny.spec");
  const SyntheticData d = generate_synthetic(spec);
  const CqaDataset ds = build_cqa_dataset(d.graph, d.truth, spec.seed);
  o.require(ds.graph.total_nodes() == 20, "graph has " + std::to_string(ds.graph.total_nodes()) + " nodes");
  const GradCheckSummary s = run_gradcheck(ds.graph, ds.tasks, TrainConfig{}, 1e-5, 1e-5);
  std::set<std::string> terms;
  for (const GroupCheck& r : s.rows) terms.insert(r.term);
  const double secs = seconds_since(t0);
  o.require(s.passed, "worst " + s.worst()->term + "/" + s.worst()->parameter);
  o.require(terms.size() == ds.tasks.size() + 3, "missing loss terms");
  o.require(secs < 60.0, "runtime " + num(secs) + " s");
  o.note("max rel error " + num(s.worst()->max_rel_error) + ", " +
         std::to_string(s.rows.size()) + " groups, " + num(secs) + " s");
  return o;
}

// 2
Outcome aggregation_oracle() {
  Outcome o;
  std::mt19937_64 rng(100);
  std::uniform_int_distribution<std::size_t> types(1, 4), rels(1, 2), depth(1, 2), mlp(1, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const MultiRelationalGraph g = testutil::random_graph(rng, types(rng), rels(rng), 50, 3, 60);
    const auto layers = testutil::random_layers(g.schema(), 3, 4, depth(rng), mlp(rng), rng);
    const auto fast = forward(g, layers);
    const auto slow = testutil::naive_mrgin(g, layers, g.all_features());
    for (std::size_t t = 0; t < fast.size(); ++t) {
      worst = std::max(worst, testutil::max_abs_diff(fast[t], slow[t]));
    }
  }
  o.require(worst < 1e-10, "too far from oracle");
  o.note("max abs diff " + num(worst) + " over 100 graphs");
  return o;
}

// 3
Outcome closed_form_losses() {
  Outcome o;
  const double ln2 = std::log(2.0);

  const GeneratedEmbeddings zeros = testutil::constant_embeddings({Tensor(Shape{2, 3})});
  const LinkTaskParams lp{Var::parameter(Tensor(Shape{3}, 1.0)), 1.0};
  const LinkPair pos[] = {{{0, 0}, {0, 1}}};
  const LinkPair neg[] = {{{0, 1}, {0, 0}}};
  const double link = scalar([&](Tape& t) { return link_loss(t, pos, neg, zeros, lp); });
  o.require(std::fabs(link - ln2) <= 1e-12, "link " + num(link));

  std::mt19937_64 rng(3);
  const GeneratedEmbeddings qa = testutil::constant_embeddings(
      {testutil::random_tensor(Shape{1, 3}, rng), testutil::random_tensor(Shape{9, 3}, rng)});
  const RankTaskParams rp{Var::parameter(Tensor(Shape{6})), Var::parameter(Tensor::scalar(0.4))};
  RankSample sample{{0, 0}, {}, 4};
  for (std::size_t a = 0; a < 9; ++a) sample.answers.push_back({1, a});
  const RankSample samples[] = {sample};
  const double rank = scalar([&](Tape& t) { return rank_loss(t, samples, qa, rp); });
  o.require(std::fabs(rank - 8.0 * ln2 / 9.0) <= 1e-12, "rank " + num(rank));

  const GeneratedEmbeddings ones = testutil::constant_embeddings({Tensor(Shape{3, 2}, 1.0)});
  const ClfTaskParams cp{Var::parameter(Tensor(Shape{4, 2})), Var::parameter(Tensor(Shape{4}))};
  const GlobalNodeId nodes[] = {{0, 0}, {0, 1}, {0, 2}};
  const std::size_t labels[] = {0, 3, 1};
  const double clf = scalar([&](Tape& t) { return clf_loss(t, nodes, labels, ones, cp); });
  o.require(std::fabs(clf - std::log(4.0)) <= 1e-12, "clf " + num(clf));

  Tape tape(false);
  const std::vector<Var> task_terms(5, Var::constant(Tensor::scalar(1.0)));
  const std::vector<Var> cons(2, Var::constant(Tensor::scalar(0.5)));
  const std::vector<double> alpha(5, 1.0), beta(2, 1.0);
  const double total = total_loss(tape, task_terms, cons, alpha, beta).value().item();
  o.require(total == 2.0, "total " + num(total));
  return o;
}

// 4
Outcome structural_invariants() {
  Outcome o;
  std::mt19937_64 rng(4);

  double swap = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Tensor a = testutil::random_tensor(Shape{32}, rng);
    const Tensor b = testutil::random_tensor(Shape{32}, rng);
    const Tensor d = testutil::random_tensor(Shape{32}, rng);
    swap = std::max(swap, std::fabs(link_score(a.data(), b.data(), d.data()) -
                                    link_score(b.data(), a.data(), d.data())));
  }
  o.require(swap < 1e-12, "swap symmetry " + num(swap));

  double perm_err = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const MultiRelationalGraph g = testutil::random_graph(rng, 2, 2, 30, 3, 30);
    const auto layers = testutil::random_layers(g.schema(), 3, 4, 2, 1, rng);
    const std::size_t n = g.node_count(0);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tensor> f = g.all_features();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < f[0].cols(); ++c) f[0].at(perm[i], c) = g.features(0).at(i, c);
    }
    std::vector<EdgeList> e = g.all_edges();
    for (std::size_t r = 0; r < e.size(); ++r) {
      const EdgeType& et = g.schema().edge_type(r);
      for (auto& [s, dst] : e[r]) {
        if (et.src_type == 0) s = perm[s];
        if (et.dst_type == 0) dst = perm[dst];
      }
    }
    const auto a = forward(g, layers);
    const auto b = forward(MultiRelationalGraph(g.schema(), f, e), layers);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < a[0].cols(); ++c) {
        perm_err = std::max(perm_err, std::fabs(a[0].at(i, c) - b[0].at(perm[i], c)));
      }
    }
    for (std::size_t t = 1; t < a.size(); ++t) {
      perm_err = std::max(perm_err, testutil::max_abs_diff(a[t], b[t]));
    }
  }
  o.require(perm_err < 1e-9, "permutation " + num(perm_err));

  // Locality: a change in one component never reaches a node of another
  // component whose node types it does not share.
  Schema s;
  for (const char* t : {"a", "b", "c", "d"}) s.add_node_type(t);
  s.add_edge_type("ab", "a", "b");
  s.add_edge_type("cd", "c", "d");
  std::vector<Tensor> f;
  for (int t = 0; t < 4; ++t) f.push_back(testutil::random_tensor(Shape{4, 3}, rng));
  std::vector<EdgeList> e(4);
  e[0] = {{0, 0}, {1, 2}, {3, 3}};
  e[2] = {{0, 1}, {2, 1}, {3, 0}};
  const auto layers = testutil::random_layers(
      MultiRelationalGraph::with_reverses(s, f, e).schema(), 3, 4, 2, 1, rng);
  const auto before = forward(MultiRelationalGraph::with_reverses(s, f, e), layers);
  f[0].at(2, 1) += 5.0;
  const auto after = forward(MultiRelationalGraph::with_reverses(s, f, e), layers);
  o.require(after[2] == before[2] && after[3] == before[3], "locality");

  bool closed = true;
  for (int trial = 0; trial < 20; ++trial) {
    closed = closed && testutil::random_graph(rng, 3, 3, 40, 2).violations().empty();
  }
  const SyntheticData d = generate_synthetic(SyntheticSpec{});
  closed = closed && d.graph.violations().empty();
  o.require(closed, "reverse closure");

  bool sampling = true;
  for (const char* name : {"tagged_with", "duplicate", "answer_to"}) {
    const std::size_t r = d.graph.schema().edge_type_index(name);
    const auto negatives = negative_sample(d.graph, r, 2, 77);
    sampling = sampling && negatives.size() == 2 * d.graph.edges(r).size();
    const std::set<LinkPair> unique(negatives.begin(), negatives.end());
    sampling = sampling && unique.size() == negatives.size();
    for (const LinkPair& p : negatives) {
      sampling = sampling && !d.graph.has_edge(r, p.src.local_index, p.dst.local_index);
    }
  }
  o.require(sampling, "negative sampling");
  o.note("swap " + num(swap) + ", permutation " + num(perm_err));
  return o;
}

// 5
Outcome metric_units() {
  Outcome o;
  const double ndcg[] = {1.0, 0.630930, 0.5, 0.0};
  const double hr[] = {1, 1, 1, 0};
  for (std::size_t r = 1; r <= 4; ++r) {
    const RankScores s = hr_ndcg_at_3(r);
    o.require(std::fabs(s.ndcg3 - ndcg[r - 1]) <= 1e-6, "ndcg at rank " + std::to_string(r));
    o.require(s.hr3 == hr[r - 1], "hr at rank " + std::to_string(r));
  }
  const std::vector<std::size_t> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
  const std::vector<std::size_t> preds = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  // Class 0 perfect on its five samples, class 1 never predicted.
  const std::vector<std::size_t> five(5, 0);
  const double m = macro_f1(five, five, 2);
  o.require(m == 0.5, "macro F1 " + num(m));
  o.note("macro F1 " + num(m) + ", all-zero predictions over 5/5 " +
         num(macro_f1(preds, labels, 2)));
  return o;
}

struct RunOutput {
  TrainResult result;
  double seconds = 0.0;
  CqaDataset data;
};

RunOutput run_default(std::uint64_t seed, std::size_t epochs) {
  SyntheticSpec spec;
  spec.seed = seed;
  const SyntheticData d = generate_synthetic(spec);
  RunOutput out{{}, 0.0, build_cqa_dataset(d.graph, d.truth, spec.seed)};
  TrainConfig cfg = load_train_config(fs::path(HMTGIN_SOURCE_DIR) / "configs" / "default.cfg");
  cfg.epochs = epochs;
  const auto t0 = Clock::now();
  Model model = init_model(out.data.graph, out.data.tasks, cfg.model, cfg.seed);
  out.result = train(out.data.graph, model, out.data.tasks, cfg);
  out.seconds = seconds_since(t0);
  return out;
}

// 6
Outcome training_smoke(const RunOutput& a, const RunOutput& b) {
  Outcome o;
  const TrainHistory& h = a.result.history;
  const EpochRecord& first = h.epochs.front();
  const EpochRecord& last = h.epochs.back();
  std::string drops;
  for (std::size_t t = 0; t < h.task_names.size(); ++t) {
    const double drop = 1.0 - last.task_losses[t] / first.task_losses[t];
    o.require(drop >= 0.30, h.task_names[t] + " dropped " + num(100 * drop) + "%");
    drops += (drops.empty() ? "" : " ") + h.task_names[t] + "=" + num(100 * drop) + "%";
  }
  o.require(last.total < first.total, "L' did not decrease");
  o.require(a.seconds < 300.0, "runtime " + num(a.seconds) + " s");
  o.require(serialize_checkpoint(a.result.final_state) ==
                    serialize_checkpoint(b.result.final_state) &&
                h.csv() == b.result.history.csv(),
            "runs differ");
  o.note("drops " + drops + ", L' " + num(first.total) + " -> " + num(last.total) + ", " +
         num(a.seconds) + " s");
  return o;
}

// 7
Outcome planted_recovery(const RunOutput& run) {
  Outcome o;
  const Model model = model_from_checkpoint(run.result.final_state, run.data.graph, run.data.tasks);
  const MetricReport r = evaluate_all(run.data.graph, model, run.data.tasks, SplitName::kTest);
  const double acc = r.value("tr", "accuracy"), f1 = r.value("tr", "f1"), hr = r.value("ar", "hr3");
  o.require(acc >= 0.85, "TR accuracy below 0.85");
  o.require(f1 >= 0.70, "TR F1 below 0.70");
  o.require(hr >= 0.6, "AR HR@3 below 0.6");
  o.note("TR accuracy " + num(acc) + ", F1 " + num(f1) + ", AR HR@3 " + num(hr));
  return o;
}

// 8
Outcome constraint_effect() {
  Outcome o;
  double with = 0.0, without = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SyntheticSpec spec;
    spec.questions = 100;
    spec.answered_questions = 100;
    spec.users = 150;
    spec.seed = seed;
    const SyntheticData d = generate_synthetic(spec);
    const CqaDataset ds = build_cqa_dataset(d.graph, d.truth, spec.seed);
    double ndcg[2];
    for (int on = 0; on < 2; ++on) {
      TrainConfig cfg =
          load_train_config(fs::path(HMTGIN_SOURCE_DIR) / "configs" / "default.cfg");
      cfg.epochs = 200;
      cfg.seed = seed;
      cfg.beta1 = cfg.beta2 = on ? 1.0 : 0.0;
      Model model = init_model(ds.graph, ds.tasks, cfg.model, cfg.seed);
      train(ds.graph, model, ds.tasks, cfg);
      ndcg[on] = evaluate_all(ds.graph, model, ds.tasks, SplitName::kTest).value("ar", "ndcg3");
    }
    without += ndcg[0] / 3.0;
    with += ndcg[1] / 3.0;
    per_seed += " " + num(ndcg[1]) + "/" + num(ndcg[0]);
  }
  o.require(with >= without, "constraints lowered NDCG@3");
  o.note("mean NDCG@3 with " + num(with) + ", without " + num(without) + ", per seed" + per_seed);
  return o;
}

// 9
Outcome round_trips(const RunOutput& run) {
  Outcome o;
  const fs::path dir = fs::temp_directory_path() / "hmtgin_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);

  save_graph(run.data.graph, dir / "a.mrg");
  save_graph(load_graph(dir / "a.mrg"), dir / "b.mrg");
  o.require(serialize_graph(load_graph(dir / "a.mrg")) == serialize_graph(run.data.graph) &&
                serialize_graph(load_graph(dir / "b.mrg")) == serialize_graph(run.data.graph),
            "graph");

  save_checkpoint(run.result.final_state, dir / "a.ckpt");
  save_checkpoint(load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
  const std::string ck = serialize_checkpoint(run.result.final_state);
  o.require(serialize_checkpoint(load_checkpoint(dir / "b.ckpt")) == ck, "checkpoint");

  const Model model = model_from_checkpoint(run.result.final_state, run.data.graph, run.data.tasks);
  const MetricReport r = evaluate_all(run.data.graph, model, run.data.tasks, SplitName::kTest);
  const auto lines = parse_metric_lines(r.machine_lines());
  std::size_t i = 0;
  bool same = true;
  for (const TaskMetrics& t : r.tasks) {
    for (const MetricValue& v : t.values) {
      same = same && i < lines.size() && lines[i].task == t.task && lines[i].name == v.name &&
             lines[i].value == v.value;
      ++i;
    }
  }
  o.require(same && i == lines.size(), "metric lines");
  fs::remove_all(dir);
  return o;
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " " << name;
    if (!o.detail.empty()) std::cout << ": " << o.detail;
    std::cout << std::endl;
    failed += !o.pass;
  };
  auto guarded = [](const std::function<Outcome()>& f) {
    try {
      return f();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("error: ") + e.what()};
    }
  };

  report(1, "gradient integrity", guarded(gradient_integrity));
  report(2, "aggregation oracle", guarded(aggregation_oracle));
  report(3, "closed-form losses", guarded(closed_form_losses));
  report(4, "structural invariants", guarded(structural_invariants));
  report(5, "metric unit values", guarded(metric_units));

  std::optional<RunOutput> first, second;
  try {
    first = run_default(1, 200);
    second = run_default(1, 200);
  } catch (const std::exception& e) {
    report(6, "training smoke", Outcome{false, std::string("error: ") + e.what()});
    report(7, "planted-signal recovery", Outcome{false, "no training run"});
  }
  if (first && second) {
    report(6, "training smoke", guarded([&] { return training_smoke(*first, *second); }));
    report(7, "planted-signal recovery", guarded([&] { return planted_recovery(*first); }));
  }
  report(8, "constraint directional effect", guarded(constraint_effect));
  if (first) {
    report(9, "round-trips", guarded([&] { return round_trips(*first); }));
  } else {
    report(9, "round-trips", Outcome{false, "no training run"});
  }
  std::cout << (failed ? std::to_string(failed) + " of 9 criteria failed" : "all 9 criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}
