#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "hmtgin/config.hpp"
#include "hmtgin/gradcheck.hpp"
#include "hmtgin/metrics.hpp"
#include "hmtgin/model.hpp"
#include "hmtgin/synthetic.hpp"
#include "hmtgin/trainer.hpp"

namespace fs = std::filesystem;
using namespace hmtgin;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 2,
  kNumeric = 3,
  kArtifact = 4,
  kGradcheck = 5,
};

// Thrown for bad input files so main can map them to exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

MultiRelationalGraph read_graph(const fs::path& path) {
  try {
    return load_graph(path);
  } catch (const GraphError& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

std::vector<TaskSpec> read_tasks(const fs::path& dir, const MultiRelationalGraph& g) {
  try {
    return load_task_dir(dir, g);
  } catch (const TaskDataError& e) {
    throw UsageError(dir.string() + ": " + e.what());
  }
}

int cmd_generate(const fs::path& spec_path, const fs::path& out) {
  SyntheticSpec spec;
  try {
    spec = load_synthetic_spec(spec_path);
  } catch (const SyntheticSpecError& e) {
    std::cerr << "spec error: " << e.what() << "\n";
    return kUsage;
  }
  const SyntheticData data = generate_synthetic(spec);
  const CqaDataset ds = build_cqa_dataset(data.graph, data.truth, spec.seed);
  fs::create_directories(out / "tasks");
  save_graph(ds.graph, out / "graph.mrg");
  save_graph(data.graph, out / "full_graph.mrg");
  save_task_dir(ds.tasks, ds.graph, out / "tasks");
  write_file(out / "truth.txt", serialize_ground_truth(data.truth));

  const Schema& s = data.graph.schema();
  for (std::size_t t = 0; t < s.num_node_types(); ++t) {
    std::cout << "nodes " << s.node_type_name(t) << " " << data.graph.node_count(t)
              << "\n";
  }
  for (std::size_t r = 0; r < s.num_edge_types(); ++r) {
    if (s.edge_type(r).is_reverse) continue;
    std::cout << "edges " << s.edge_type(r).name << " " << data.graph.edges(r).size()
              << "\n";
  }
  for (const std::string& line : ds.report) std::cout << line << "\n";
  std::cout << "acceptance-score rank correlation "
            << format_real(acceptance_score_correlation(data.graph, data.truth)) << "\n";
  return kOk;
}

int cmd_train(const fs::path& graph_path, const fs::path& tasks_dir,
              const fs::path& config_path, const fs::path& out, bool quiet) {
  TrainConfig cfg;
  try {
    cfg = load_train_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }
  if (cfg.checkpoint_dir.empty()) {
    cfg.checkpoint_dir = out;
  } else if (cfg.checkpoint_dir.is_relative()) {
    cfg.checkpoint_dir = out / cfg.checkpoint_dir;
  }
  const MultiRelationalGraph g = read_graph(graph_path);
  const std::vector<TaskSpec> tasks = read_tasks(tasks_dir, g);
  fs::create_directories(out);
  Model model = init_model(g, tasks, cfg.model, cfg.seed);
  TrainResult result;
  try {
    result = train(g, model, tasks, cfg, quiet ? nullptr : &std::cerr);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  }
  write_file(out / "history.csv", result.history.csv());
  const EpochRecord& last = result.history.epochs.back();
  std::cout << "epochs " << result.history.epochs.size() << "\n"
            << "final_loss " << format_real(last.total) << "\n"
            << "checkpoints " << result.history.checkpoints.size() << "\n";
  return kOk;
}

int cmd_eval(const fs::path& graph_path, const fs::path& tasks_dir,
             const fs::path& ckpt_path, const std::string& split_name) {
  const auto split = parse_split_name(split_name);
  if (!split) {
    std::cerr << "unknown split '" << split_name << "' (train, dev or test)\n";
    return kUsage;
  }
  const MultiRelationalGraph g = read_graph(graph_path);
  const std::vector<TaskSpec> tasks = read_tasks(tasks_dir, g);
  Model model;
  try {
    model = model_from_checkpoint(load_checkpoint(ckpt_path), g, tasks);
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint mismatch: " << e.what() << "\n";
    return kArtifact;
  }
  MetricReport report;
  try {
    report = evaluate_all(g, model, tasks, *split);
  } catch (const TaskDataError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  }
  std::cout << report.table() << report.machine_lines();
  return kOk;
}

int cmd_gradcheck(const fs::path& graph_path, const fs::path& tasks_dir,
                  const fs::path& config_path, bool corrupt) {
  TrainConfig cfg;
  try {
    cfg = load_train_config(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }
  const MultiRelationalGraph g = read_graph(graph_path);
  const std::vector<TaskSpec> tasks = read_tasks(tasks_dir, g);
  testing::set_corrupt_backward(corrupt);
  const GradCheckSummary summary = run_gradcheck(g, tasks, cfg);
  testing::set_corrupt_backward(false);
  std::cout << summary.table();
  if (!summary.passed) {
    const GroupCheck* w = summary.worst();
    std::cerr << "gradient check failed: term " << w->term << ", parameter "
              << w->parameter << ", coordinate " << w->worst_index
              << ", analytic " << format_real(w->analytic) << ", numeric "
              << format_real(w->numeric) << "\n";
    return kGradcheck;
  }
  return kOk;
}

// Long-format curves: one `series,epoch,value` row per history cell.
int cmd_report(const fs::path& history_path, const fs::path& out) {
  std::ifstream in(history_path);
  if (!in) {
    std::cerr << "cannot open " << history_path << "\n";
    return kUsage;
  }
  std::string line;
  std::getline(in, line);
  std::vector<std::string> columns;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) columns.push_back(c);
  }
  if (columns.empty() || columns[0] != "epoch") {
    std::cerr << history_path << ": not a history file\n";
    return kUsage;
  }
  std::string csv = "series,epoch,value\n";
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() != columns.size()) {
      std::cerr << history_path << ": ragged row '" << line << "'\n";
      return kUsage;
    }
    for (std::size_t i = 1; i < cells.size(); ++i) {
      csv += columns[i] + "," + cells[0] + "," + cells[i] + "\n";
    }
  }
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_file(out, csv);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("HMTGIN_THREADS")) {
    if (std::string(threads) != "1") {
      std::cerr << "warning: HMTGIN_THREADS=" << threads
                << " ignored, running single-threaded\n";
    }
  }

  CLI::App app{"Multi-task graph learning on multi-relational CQA graphs"};
  app.require_subcommand(1);

  fs::path spec, out, graph, tasks, config, checkpoint, history;
  std::string split;
  bool quiet = false, corrupt = false;

  auto* gen = app.add_subcommand("generate", "Generate a synthetic graph and tasks");
  gen->add_option("--spec", spec, "Generator spec file")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--graph", graph, "Graph file")->required();
  tr->add_option("--tasks", tasks, "Task directory")->required();
  tr->add_option("--config", config, "Training config")->required();
  tr->add_option("--out", out, "Output directory")->required();
  tr->add_flag("--quiet", quiet, "No per-epoch log");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--graph", graph, "Graph file")->required();
  ev->add_option("--tasks", tasks, "Task directory")->required();
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--split", split, "train, dev or test")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  gc->add_option("--graph", graph, "Graph file")->required();
  gc->add_option("--tasks", tasks, "Task directory")->required();
  gc->add_option("--config", config, "Training config")->required();
  gc->add_flag("--corrupt-backward", corrupt)->group("");

  auto* rep = app.add_subcommand("report", "Loss curves as long-format CSV");
  rep->add_option("--history", history, "history.csv from train")->required();
  rep->add_option("--out", out, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(spec, out);
    if (*tr) return cmd_train(graph, tasks, config, out, quiet);
    if (*ev) return cmd_eval(graph, tasks, checkpoint, split);
    if (*gc) return cmd_gradcheck(graph, tasks, config, corrupt);
    if (*rep) return cmd_report(history, out);
  } catch (const UsageError& e) {
    std::cerr << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kUsage;
}
