#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hynt/ingest.hpp"

using namespace hynt;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string(HYNT_BINARY) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult result;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) result.output.append(buf, n);
  const int status = pclose(pipe);
  result.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

fs::path fresh_dir(const std::string& leaf) {
  fs::path dir = fs::temp_directory_path() / leaf;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// A dataset and a short training run shared by the downstream command tests.
struct TrainedRun {
  fs::path data;
  fs::path run;
};

const TrainedRun& shared_run() {
  static TrainedRun ctx = [] {
    TrainedRun t;
    fs::path root = fresh_dir("hynt_cli_shared");
    t.data = root / "kg";
    t.run = root / "run";
    CmdResult gen = run_cli("gen-data --out " + t.data.string() +
                            " --seed 7 --facts 60 --entities 15 --discrete-relations 4 "
                            "--numeric-relations 2");
    REQUIRE(gen.code == 0);
    CmdResult train = run_cli("train --data " + t.data.string() + " --out " + t.run.string() +
                              " --epochs 2 --batch-size 32 --d 8 --validate-every 2 "
                              "--seed 11 --quiet");
    REQUIRE_MESSAGE(train.code == 0, train.output);
    return t;
  }();
  return ctx;
}

}  // namespace

TEST_CASE("gen-data is deterministic and re-parses cleanly") {
  fs::path a = fresh_dir("hynt_cli_gen_a");
  fs::path b = fresh_dir("hynt_cli_gen_b");
  const std::string flags = " --seed 9 --facts 50 --entities 12";
  CHECK(run_cli("gen-data --out " + a.string() + flags).code == 0);
  CHECK(run_cli("gen-data --out " + b.string() + flags).code == 0);
  for (const char* name : {"train.txt", "valid.txt", "test.txt", "spec.ini"}) {
    CHECK(read_file(a / name) == read_file(b / name));
  }

  Vocabulary vocab;
  std::size_t total = 0;
  std::vector<HyperFact> all;
  for (const char* name : {"train.txt", "valid.txt", "test.txt"}) {
    ParsedFacts parsed = parse_fact_file((a / name).string(), vocab, VocabMode::Build);
    CHECK(parsed.duplicates_dropped == 0);
    total += parsed.facts.size();
    all.insert(all.end(), parsed.facts.begin(), parsed.facts.end());
  }
  CHECK(total == 50);
  for (const HyperFact& f : all) CHECK(validate_fact(f, vocab).empty());
}

TEST_CASE("train writes checkpoints, a log, and a reusable frozen config") {
  const TrainedRun& ctx = shared_run();
  CHECK(fs::exists(ctx.run / "config.ini"));
  CHECK(fs::exists(ctx.run / "best" / "tensors.bin"));
  CHECK(fs::exists(ctx.run / "last" / "tensors.bin"));
  CHECK(fs::exists(ctx.run / "train_log.csv"));
  CHECK(read_file(ctx.run / "train_log.csv").rfind("epoch,lr,loss_total", 0) == 0);

  // The frozen config already names the data and run directories, so training
  // again from it only needs a new output location.
  fs::path rerun = fs::temp_directory_path() / "hynt_cli_rerun";
  fs::remove_all(rerun);
  CmdResult again = run_cli("train --config " + (ctx.run / "config.ini").string() + " --out " +
                            rerun.string() + " --quiet");
  REQUIRE_MESSAGE(again.code == 0, again.output);
  CHECK(read_file(rerun / "best" / "tensors.bin") == read_file(ctx.run / "best" / "tensors.bin"));
  fs::remove_all(rerun);
}

TEST_CASE("seeded training runs are byte-identical") {
  const TrainedRun& ctx = shared_run();
  fs::path other = fs::temp_directory_path() / "hynt_cli_det";
  fs::remove_all(other);
  CmdResult train = run_cli("train --data " + ctx.data.string() + " --out " + other.string() +
                            " --epochs 2 --batch-size 32 --d 8 --validate-every 2 "
                            "--seed 11 --quiet");
  REQUIRE_MESSAGE(train.code == 0, train.output);
  CHECK(read_file(other / "best" / "tensors.bin") == read_file(ctx.run / "best" / "tensors.bin"));
  CHECK(read_file(other / "train_log.csv") == read_file(ctx.run / "train_log.csv"));
  fs::remove_all(other);
}

TEST_CASE("eval prints the report and writes CSV") {
  const TrainedRun& ctx = shared_run();
  fs::path csv = fs::temp_directory_path() / "hynt_cli_report.csv";
  fs::remove(csv);

  CmdResult filtered = run_cli("eval --checkpoint " + (ctx.run / "best").string() + " --data " +
                               ctx.data.string() + " --split test --out " + csv.string());
  REQUIRE_MESSAGE(filtered.code == 0, filtered.output);
  CHECK(filtered.output.find("protocol: filtered") != std::string::npos);
  CHECK(filtered.output.find("MRR") != std::string::npos);
  CHECK(read_file(csv).rfind("family,scope,metric,value,count\n", 0) == 0);

  CmdResult raw = run_cli("eval --checkpoint " + (ctx.run / "best").string() + " --data " +
                          ctx.data.string() + " --split test --mode raw");
  REQUIRE(raw.code == 0);
  CHECK(raw.output.find("protocol: raw") != std::string::npos);

  CmdResult tri = run_cli("eval --checkpoint " + (ctx.run / "best").string() + " --data " +
                          ctx.data.string() + " --split test --scope tri");
  REQUIRE(tri.code == 0);
  CHECK(tri.output.find("link       tri") != std::string::npos);
  CHECK(tri.output.find("link       all") == std::string::npos);
  fs::remove(csv);
}

TEST_CASE("predict answers discrete and numeric queries") {
  const TrainedRun& ctx = shared_run();
  const std::string ckpt = " --checkpoint " + (ctx.run / "best").string();

  CmdResult link = run_cli("predict" + ckpt + " --query \"e0 d0 ?\" --top 3");
  REQUIRE_MESSAGE(link.code == 0, link.output);
  CHECK(link.output.find("rank") != std::string::npos);
  // Header plus exactly three answer rows.
  CHECK(std::count(link.output.begin(), link.output.end(), '\n') == 4);

  CmdResult head = run_cli("predict" + ckpt + " --query \"? d0 e3\" --top 1");
  REQUIRE(head.code == 0);

  CmdResult rel = run_cli("predict" + ckpt + " --query \"e0 ? e3\" --top 2");
  REQUIRE(rel.code == 0);

  CmdResult numeric = run_cli("predict" + ckpt + " --query \"e0 n0 #?\"");
  REQUIRE_MESSAGE(numeric.code == 0, numeric.output);
  std::size_t parsed_len = 0;
  const double value = std::stod(numeric.output, &parsed_len);
  CHECK(std::isfinite(value));
  CHECK(parsed_len > 0);
}

TEST_CASE("inspect prints the dataset profile") {
  const TrainedRun& ctx = shared_run();
  CmdResult result = run_cli("inspect --data " + ctx.data.string());
  REQUIRE(result.code == 0);
  CHECK(result.output.find("entities") != std::string::npos);
  CHECK(result.output.find("numeric literals") != std::string::npos);
  CHECK(result.output.find("train facts") != std::string::npos);
}

TEST_CASE("failure classes map to distinct exit codes") {
  const TrainedRun& ctx = shared_run();
  const std::string ckpt = " --checkpoint " + (ctx.run / "best").string();

  // Usage problems: bad subcommand, bad query shapes.
  CHECK(run_cli("no-such-command").code == 2);
  CHECK(run_cli("predict" + ckpt + " --query \"? d0 ?\"").code == 2);
  CHECK(run_cli("predict" + ckpt + " --query \"e0 d0 e1\"").code == 2);
  CHECK(run_cli("predict" + ckpt + " --query \"e0 #? e1\"").code == 2);

  // Config problems.
  fs::path cfg_dir = fresh_dir("hynt_cli_cfg");
  {
    std::ofstream bad(cfg_dir / "typo.ini");
    bad << "[train]\nepochz = 3\n";
  }
  CmdResult typo = run_cli("train --config " + (cfg_dir / "typo.ini").string() + " --data " +
                           ctx.data.string() + " --out " + (cfg_dir / "run").string());
  CHECK(typo.code == 2);
  CHECK(typo.output.find("epochz") != std::string::npos);
  {
    std::ofstream bad(cfg_dir / "broken.ini");
    bad << "[train]\nthis line has no equals sign\n";
  }
  CmdResult broken = run_cli("train --config " + (cfg_dir / "broken.ini").string() + " --data " +
                             ctx.data.string() + " --out " + (cfg_dir / "run").string());
  CHECK(broken.code == 2);
  CHECK(broken.output.find("broken.ini:2") != std::string::npos);

  // Data problems: missing inputs, unknown tokens, unwritable output.
  CHECK(run_cli("eval --checkpoint /nonexistent --data " + ctx.data.string()).code == 3);
  CHECK(run_cli("train --data /nonexistent --out " + (cfg_dir / "run2").string()).code == 3);
  CmdResult unknown = run_cli("predict" + ckpt + " --query \"not_an_entity d0 ?\"");
  CHECK(unknown.code == 3);
  {
    std::ofstream blocker(cfg_dir / "blocker");
    blocker << "x";
  }
  CHECK(run_cli("gen-data --out " + (cfg_dir / "blocker" / "sub").string()).code == 3);
  fs::remove_all(cfg_dir);
}
