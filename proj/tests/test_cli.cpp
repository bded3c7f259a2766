#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hmtgin/metrics.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(HMTGIN_BIN) + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string tree(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, dir).string() + "\n" + slurp(f);
  return all;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("hmtgin_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const fs::path kConfigs = fs::path(HMTGIN_SOURCE_DIR) / "configs";

std::string data_args(const fs::path& d) {
  return "--graph " + (d / "graph.mrg").string() + " --tasks " + (d / "tasks").string();
}

}  // namespace

TEST_CASE("generate writes every artifact and is deterministic") {
  const fs::path dir = scratch("generate");
  const Run a = run("generate --spec " + (kConfigs / "tiny.spec").string() + " --out " +
                    (dir / "a").string());
  REQUIRE(a.code == 0);
  CHECK(a.out.find("nodes question") != std::string::npos);
  for (const char* f : {"graph.mrg", "full_graph.mrg", "truth.txt", "tasks/index"}) {
    CHECK(fs::exists(dir / "a" / f));
  }
  REQUIRE(run("generate --spec " + (kConfigs / "tiny.spec").string() + " --out " +
              (dir / "b").string())
              .code == 0);
  CHECK(tree(dir / "a") == tree(dir / "b"));

  write(dir / "default.spec", "seed = 1\n");
  REQUIRE(run("generate --spec " + (dir / "default.spec").string() + " --out " +
              (dir / "d").string())
              .code == 0);
  std::size_t node_types = 0;
  for (const char* line : {"nodetype question", "nodetype answer", "nodetype user",
                                  "nodetype tag"}) {
    node_types += slurp(dir / "d" / "graph.mrg").find(line) != std::string::npos;
  }
  CHECK(node_types == 4);
  for (const char* t : {"tr", "dqd", "ar", "asc", "urc"}) {
    CHECK(fs::exists(dir / "d" / "tasks" / (std::string(t) + ".task")));
  }
  fs::remove_all(dir);
}

TEST_CASE("spec errors exit 2") {
  const fs::path dir = scratch("spec");
  write(dir / "bad.spec", "answers_min = 7\n");
  const Run r = run("generate --spec " + (dir / "bad.spec").string() + " --out " +
                    (dir / "o").string());
  CHECK(r.code == 2);
  write(dir / "typo.spec", "questionz = 7\n");
  CHECK(run("generate --spec " + (dir / "typo.spec").string() + " --out " + (dir / "o").string())
            .code == 2);
  CHECK(run("frobnicate").code == 2);
  fs::remove_all(dir);
}

TEST_CASE("train, eval and report on the tiny graph") {
  const fs::path dir = scratch("train");
  REQUIRE(run("generate --spec " + (kConfigs / "tiny.spec").string() + " --out " +
              (dir / "data").string())
              .code == 0);
  write(dir / "one.cfg", "epochs = 1\n");
  const Run t1 = run("train " + data_args(dir / "data") + " --config " +
                     (dir / "one.cfg").string() + " --out " + (dir / "one").string());
  REQUIRE(t1.code == 0);
  const std::string history = slurp(dir / "one" / "history.csv");
  CHECK(std::count(history.begin(), history.end(), '\n') == 2);
  const std::string header = history.substr(0, history.find('\n'));
  const auto columns = std::count(header.begin(), header.end(), ',') + 1;
  std::ifstream index(dir / "data" / "tasks" / "index");
  std::size_t t_count = 0;
  for (std::string line; std::getline(index, line);) t_count += !line.empty();
  // epoch, T task losses, two constraints, L', dev_avg
  CHECK(columns == static_cast<long>(1 + t_count + 2 + 2));

  write(dir / "ten.cfg", "epochs = 10\n");
  REQUIRE(run("train " + data_args(dir / "data") + " --config " + (dir / "ten.cfg").string() +
              " --out " + (dir / "ten").string())
              .code == 0);
  for (const char* f : {"best.ckpt", "final.ckpt", "checkpoints.log", "history.csv"}) {
    CHECK(fs::exists(dir / "ten" / f));
  }
  const std::string ckpt = (dir / "ten" / "final.ckpt").string();
  const Run train_eval = run("eval " + data_args(dir / "data") + " --checkpoint " + ckpt +
                             " --split train");
  REQUIRE(train_eval.code == 0);
  const auto lines = hmtgin::parse_metric_lines(train_eval.out);
  CHECK_FALSE(lines.empty());
  CHECK(train_eval.out.find("average") != std::string::npos);

  CHECK(run("eval " + data_args(dir / "data") + " --checkpoint " + ckpt + " --split holdout")
            .code == 2);
  write(dir / "broken.ckpt", "tensor layer0.W_0 2 1 1\n0.5\n");
  CHECK(run("eval " + data_args(dir / "data") + " --checkpoint " +
            (dir / "broken.ckpt").string() + " --split train")
            .code == 4);
  CHECK(run("eval " + data_args(dir / "data") + " --checkpoint " +
            (dir / "missing.ckpt").string() + " --split train")
            .code == 4);

  const Run rep = run("report --history " + (dir / "ten" / "history.csv").string());
  REQUIRE(rep.code == 0);
  CHECK(rep.out.rfind("series,epoch,value\n", 0) == 0);
  fs::remove_all(dir);
}

TEST_CASE("diverging training exits 3") {
  const fs::path dir = scratch("diverge");
  REQUIRE(run("generate --spec " + (kConfigs / "tiny.spec").string() + " --out " +
              (dir / "data").string())
              .code == 0);
  write(dir / "hot.cfg", "epochs = 50\nlr0 = 1e305\n");
  const Run r = run("train " + data_args(dir / "data") + " --config " +
                    (dir / "hot.cfg").string() + " --out " + (dir / "run").string());
  CHECK(r.code == 3);
  CHECK(r.out.find("non-finite") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck passes and fails on demand") {
  const fs::path dir = scratch("gradcheck");
  REQUIRE(run("generate --spec " + (kConfigs / "tiny.spec").string() + " --out " +
              (dir / "data").string())
              .code == 0);
  const std::string args = "gradcheck " + data_args(dir / "data") + " --config " +
                           (kConfigs / "default.cfg").string();
  const Run ok = run(args);
  CHECK(ok.code == 0);
  CHECK(ok.out.find("layer0.W_0") != std::string::npos);
  const Run bad = run(args + " --corrupt-backward");
  CHECK(bad.code == 5);
  CHECK(bad.out.find("coordinate") != std::string::npos);
  fs::remove_all(dir);
}
