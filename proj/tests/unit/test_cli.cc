#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "json.hpp"

#include "cola/cli.h"
#include "cola/data.h"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "cola");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cola::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("cli: usage errors exit with 1 and print usage") {
  CHECK(run({}).code == 1);
  const auto missing = run({"train", "--out", "/tmp/x"});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("--manifest") != std::string::npos);
  const auto absent = run({"train", "--manifest", "/nonexistent/m.jsonl", "--out", "/tmp/x"});
  CHECK(absent.code == 1);
  CHECK(run({"frobnicate"}).code == 1);
  CHECK(run({"synth", "--out", "/tmp/cola_never", "--set", "synth.bogus=1"}).code == 1);
}

TEST_CASE("cli: eval with perfect predictions reports mAP 1") {
  const fs::path dir = scratch("cola_cli_eval");
  std::ofstream(dir / "gt.jsonl") << "{\"video_id\":\"v\",\"class_id\":0,\"start_sec\":1.0,\"end_sec\":4.0}\n"
                                     "{\"video_id\":\"w\",\"class_id\":1,\"start_sec\":0.5,\"end_sec\":2.0}\n";
  std::ofstream(dir / "preds.jsonl") << "{\"video_id\":\"v\",\"class_id\":0,\"start_sec\":1.0,\"end_sec\":4.0,\"score\":1.0}\n"
                                        "{\"video_id\":\"w\",\"class_id\":1,\"start_sec\":0.5,\"end_sec\":2.0,\"score\":1.0}\n";
  const auto r = run({"--json", "eval", "--preds", (dir / "preds.jsonl").string(), "--gt",
                      (dir / "gt.jsonl").string(), "--grid", "0.1:0.7:0.1", "--out",
                      (dir / "report.json").string()});
  REQUIRE(r.code == 0);
  const auto summary = nlohmann::json::parse(r.out);
  CHECK(summary["report"]["average_map"] == 1.0);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  REQUIRE(report["results"].size() == 7);
  for (const auto& row : report["results"]) CHECK(row["map"].get<double>() == 1.0);
  const auto table = run({"eval", "--preds", (dir / "preds.jsonl").string(), "--gt", (dir / "gt.jsonl").string()});
  CHECK(table.code == 0);
  CHECK(table.out.find("100.0") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: malformed data files exit with 2") {
  const fs::path dir = scratch("cola_cli_bad");
  std::ofstream(dir / "gt.jsonl") << "{\"video_id\":\"v\",\"class_id\":0,\"start_sec\":4.0,\"end_sec\":1.0}\n";
  std::ofstream(dir / "preds.jsonl") << "";
  const auto r = run({"eval", "--preds", (dir / "preds.jsonl").string(), "--gt", (dir / "gt.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("line 1") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: synth, train, infer, mine and eval chain deterministically") {
  const fs::path dir = scratch("cola_cli_chain");
  std::ofstream(dir / "run.cfg") << "synth.num_train = 12\nsynth.num_test = 4\nsynth.num_classes = 3\n"
                                    "synth.feature_dim = 4\ntrain.epochs = 2\ntrain.batch_size = 4\n"
                                    "train.t_sample = 32\n";
  const std::string cfg = (dir / "run.cfg").string();
  REQUIRE(run({"synth", "--config", cfg, "--out", (dir / "data").string()}).code == 0);
  for (const char* run_name : {"a", "b"}) {
    const fs::path out = dir / run_name;
    REQUIRE(run({"train", "--config", cfg, "--manifest", (dir / "data" / "train.jsonl").string(), "--out",
                 out.string()})
                .code == 0);
    REQUIRE(run({"infer", "--config", cfg, "--checkpoint", (out / "checkpoint.bin").string(), "--manifest",
                 (dir / "data" / "test.jsonl").string(), "--out", (out / "preds.jsonl").string()})
                .code == 0);
    REQUIRE(run({"mine", "--config", cfg, "--checkpoint", (out / "checkpoint.bin").string(), "--manifest",
                 (dir / "data" / "test.jsonl").string(), "--out", (out / "mined.jsonl").string()})
                .code == 0);
    const auto e = run({"eval", "--preds", (out / "preds.jsonl").string(), "--gt",
                        (dir / "data" / "gt_test.jsonl").string(), "--mined", (out / "mined.jsonl").string(),
                        "--out", (out / "report.json").string()});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("mRDO") != std::string::npos);
  }
  for (const char* f : {"checkpoint.bin", "preds.jsonl", "mined.jsonl", "report.json", "metrics.jsonl"})
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  const auto metrics = slurp(dir / "a" / "metrics.jsonl");
  CHECK(metrics.find("\"degenerate_count\"") != std::string::npos);
  const auto first_pred = nlohmann::json::parse(slurp(dir / "a" / "preds.jsonl").substr(0, slurp(dir / "a" / "preds.jsonl").find('\n')));
  for (const char* key : {"video_id", "class_id", "class_name", "start_sec", "end_sec", "start_snippet", "end_snippet", "score"})
    CHECK(first_pred.contains(key));
  fs::remove_all(dir);
}

TEST_CASE("cli: unreadable feature file is reported per video with exit 2") {
  const fs::path dir = scratch("cola_cli_missing_feat");
  std::ofstream(dir / "run.cfg") << "synth.num_train = 4\nsynth.num_test = 2\nsynth.feature_dim = 2\n"
                                    "train.epochs = 0\ntrain.t_sample = 16\n";
  const std::string cfg = (dir / "run.cfg").string();
  REQUIRE(run({"synth", "--config", cfg, "--out", (dir / "data").string()}).code == 0);
  REQUIRE(run({"train", "--config", cfg, "--manifest", (dir / "data" / "train.jsonl").string(), "--out",
               (dir / "run").string()})
              .code == 0);
  fs::remove(dir / "data" / "features" / "test_0001.bin");
  const auto r = run({"infer", "--config", cfg, "--checkpoint", (dir / "run" / "checkpoint.bin").string(),
                      "--manifest", (dir / "data" / "test.jsonl").string(), "--out", (dir / "preds.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("test_0001") != std::string::npos);
  CHECK(slurp(dir / "preds.jsonl").find("test_0000") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("cli: gradcheck passes") {
  const auto r = run({"--json", "gradcheck"});
  CHECK(r.code == 0);
  CHECK(nlohmann::json::parse(r.out)["passed"] == true);
}
