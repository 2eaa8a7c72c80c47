#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "sparsesense/cli.hpp"
#include "sparsesense/matrixio.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "sparsesense");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run run;
  run.code = sparsesense::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  run.out = out.str();
  run.err = err.str();
  return run;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  return json::parse(in);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

// Restores the working directory when a test changes it.
struct ChangeDir {
  explicit ChangeDir(const fs::path& to) : from(fs::current_path()) { fs::current_path(to); }
  ~ChangeDir() { fs::current_path(from); }
  fs::path from;
};

}  // namespace

TEST_CASE("synth writes a manifest dataset that train can read") {
  testutil::TempDir tmp;
  const Run synth = cli({"synth", "--output", (tmp / "syn").string(), "--samples-per-class", "20"});
  REQUIRE(synth.code == 0);
  CHECK(fs::exists(tmp / "syn" / "manifest.json"));
  CHECK(fs::exists(tmp / "syn" / "data.csv"));
  const json manifest = read_json(tmp / "syn" / "manifest.json");
  CHECK(manifest.at("classes").size() == 2);
  CHECK(manifest.at("classes")[0].at("files").size() == 20);

  const Run train = cli({"train", "--manifest", (tmp / "syn" / "manifest.json").string(), "--output",
                         (tmp / "model").string(), "--r", "10"});
  CHECK(train.code == 0);
  CHECK(fs::exists(tmp / "model" / "model" / "model.json"));
}

TEST_CASE("train on two synthetic classes emits at most r sensors") {
  testutil::TempDir tmp;
  const Run run = cli({"train", "--output", (tmp / "out").string()});
  REQUIRE(run.code == 0);
  const json sensors = read_json(tmp / "out" / "sensors.json");
  CHECK(sensors.at("count").get<int>() >= 1);
  CHECK(sensors.at("count").get<int>() <= 20);
  const json diagnostics = read_json(tmp / "out" / "diagnostics.json");
  CHECK(diagnostics.at("c").get<int>() == 2);
  CHECK(fs::exists(tmp / "out" / "config.json"));
}

TEST_CASE("train on three classes at lambda 0 emits at most r(c-1) sensors") {
  testutil::TempDir tmp;
  const Run run = cli({"train", "--classes", "3", "--r", "10", "--lambda", "0", "--output", (tmp / "out").string()});
  REQUIRE(run.code == 0);
  const json sensors = read_json(tmp / "out" / "sensors.json");
  CHECK(sensors.at("count").get<int>() <= 20);
  CHECK(read_json(tmp / "out" / "diagnostics.json").at("c").get<int>() == 3);
}

TEST_CASE("an unreadable dataset exits 2 and leaves no output behind") {
  testutil::TempDir tmp;
  const fs::path out = tmp / "out";
  const Run run = cli({"train", "--manifest", (tmp / "missing.json").string(), "--output", out.string()});
  CHECK(run.code == 2);
  CHECK(run.err.find("error:") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
  fs::path staging = out;
  staging += ".partial";
  CHECK_FALSE(fs::exists(staging));
}

TEST_CASE("an iteration cap too small to converge exits 4 without output") {
  testutil::TempDir tmp;
  const Run run = cli({"train", "--max-iter", "3", "--output", (tmp / "out").string()});
  CHECK(run.code == 4);
  CHECK_FALSE(fs::exists(tmp / "out"));
}

TEST_CASE("usage errors exit 1") {
  CHECK(cli({"train", "--no-such-flag"}).code == 1);
  CHECK(cli({}).code == 1);
  CHECK(cli({"train", "--solver", "simplex"}).code == 1);
  testutil::TempDir tmp;
  CHECK(cli({"train", "--r", "0", "--output", (tmp / "out").string()}).code == 1);
}

TEST_CASE("classify reports path, class id and class name per input") {
  testutil::TempDir tmp;
  // A large class offset makes the synthetic classes separable.
  const fs::path config = tmp / "separable.json";
  std::ofstream(config) << R"({"dataset": {"synthetic": {"class_offset": 1.0}}})";
  REQUIRE(cli({"synth", "--config", config.string(), "--output", (tmp / "syn").string(), "--samples-per-class",
               "30"}).code == 0);
  const fs::path manifest = tmp / "syn" / "manifest.json";
  REQUIRE(cli({"train", "--manifest", manifest.string(), "--r", "10", "--output", (tmp / "tr").string()}).code == 0);
  const std::string model = (tmp / "tr" / "model").string();

  SUBCASE("training images come back with their own class") {
    const json m = read_json(manifest);
    std::vector<std::string> args = {"classify", "--model", model};
    std::vector<std::pair<std::string, int>> expected;
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 3; ++i) {
        const std::string file = (tmp / "syn" / m.at("classes")[j].at("files")[i].get<std::string>()).string();
        args.push_back(file);
        expected.emplace_back(file, j);
      }
    const Run run = cli(args);
    REQUIRE(run.code == 0);
    const auto lines = lines_of(run.out);
    REQUIRE(lines.size() == expected.size());
    int correct = 0;
    for (std::size_t k = 0; k < lines.size(); ++k) {
      std::istringstream fields(lines[k]);
      std::string path, name;
      int id = -1;
      std::getline(fields, path, '\t');
      fields >> id >> name;
      CHECK(path == expected[k].first);
      CHECK(name == m.at("classes")[expected[k].second].at("name").get<std::string>());
      correct += id == expected[k].second;
    }
    CHECK(correct == static_cast<int>(lines.size()));
  }

  SUBCASE("an empty input list prints nothing") {
    const Run run = cli({"classify", "--model", model});
    CHECK(run.code == 0);
    CHECK(run.out.empty());
  }

  SUBCASE("a corrupt image exits 2 naming the file") {
    const fs::path bad = tmp / "corrupt.pgm";
    std::ofstream(bad) << "P5\n32 32\n65535\nxx";
    const Run run = cli({"classify", "--model", model, bad.string()});
    CHECK(run.code == 2);
    CHECK(run.err.find(bad.string()) != std::string::npos);
    CHECK(run.out.empty());
  }

  SUBCASE("a wrong-sized image exits 3") {
    const fs::path small = tmp / "small.pgm";
    sparsesense::save_pgm(small, Eigen::VectorXd::Constant(16, 0.5), 4, 4, 255);
    const Run run = cli({"classify", "--model", model, small.string()});
    CHECK(run.code == 3);
    CHECK(run.err.find("small.pgm") != std::string::npos);
  }

  SUBCASE("a missing bundle exits 2") {
    CHECK(cli({"classify", "--model", (tmp / "nope").string()}).code == 2);
  }
}

TEST_CASE("sweep-lambda emits one row per lambda and route") {
  testutil::TempDir tmp;
  const Run run = cli({"sweep-lambda", "--classes", "3", "--r", "10", "--iterations", "2", "--lambda", "0,10",
                       "--strategies", "learned_full",
                       "--output", (tmp / "sw").string()});
  REQUIRE(run.code == 0);
  CHECK(lines_of(run.out).size() == 4);
  const json report = read_json(tmp / "sw" / "report.json");
  CHECK(report.at("cells").size() == 4);
  CHECK(run.err.find("iteration 2/2") != std::string::npos);
}

TEST_CASE("flags override config file values and the effective config is printed") {
  testutil::TempDir tmp;
  const fs::path config = tmp / "config.json";
  std::ofstream(config) << R"({"iterations": 7, "r_values": [5], "seed": 11,
                              "strategies": ["learned_full"], "output": ")"
                        << (tmp / "from_config").string() << "\"}";
  const Run run = cli({"crossval", "--config", config.string(), "--iterations", "2", "--seed", "3", "--output",
                       (tmp / "from_flag").string()});
  REQUIRE(run.code == 0);
  CHECK(fs::exists(tmp / "from_flag" / "report.json"));
  CHECK_FALSE(fs::exists(tmp / "from_config"));
  const json effective = read_json(tmp / "from_flag" / "config.json");
  CHECK(effective.at("iterations") == 2);
  CHECK(effective.at("base_seed") == 3);
  CHECK(effective.at("r_values") == json::array({5}));
  CHECK(run.err.find("effective config: ") != std::string::npos);
  CHECK(run.err.find("\"iterations\":2") != std::string::npos);
}

TEST_CASE("a malformed config file exits 2") {
  testutil::TempDir tmp;
  const fs::path config = tmp / "bad.json";
  std::ofstream(config) << "{ not json";
  CHECK(cli({"crossval", "--config", config.string()}).code == 2);
}

TEST_CASE("same config and seed give byte-identical reports apart from run_info") {
  testutil::TempDir tmp;
  const std::vector<std::string> common = {"--iterations", "4", "--seed", "9", "--r", "10"};
  auto run_to = [&](const std::string& dir, const std::string& jobs) {
    std::vector<std::string> args = {"crossval", "--output", (tmp / dir).string(), "--jobs", jobs};
    args.insert(args.end(), common.begin(), common.end());
    REQUIRE(cli(args).code == 0);
    json report = read_json(tmp / dir / "report.json");
    CHECK(report.contains("run_info"));
    report.erase("run_info");
    return report.dump();
  };
  const std::string a = run_to("a", "1");
  const std::string b = run_to("b", "1");
  CHECK(a == b);
  CHECK(sparsesense::read_text_file(tmp / "a" / "cells.csv") == sparsesense::read_text_file(tmp / "b" / "cells.csv"));
}

TEST_CASE("every subcommand accepts --seed, --output and --config") {
  testutil::TempDir tmp;
  const fs::path config = tmp / "c.json";
  std::ofstream(config) << "{}";
  for (const std::string cmd : {"train", "classify", "crossval", "sweep-lambda", "sensors-map", "synth"}) {
    // --help short-circuits the run but still validates that the flags parse.
    const Run run = cli({cmd, "--seed", "1", "--output", (tmp / cmd).string(), "--config", config.string(), "--help"});
    CAPTURE(cmd);
    CHECK(run.code == 0);
    CHECK(run.out.find("--seed") != std::string::npos);
    CHECK(run.out.find("--output") != std::string::npos);
    CHECK(run.out.find("--config") != std::string::npos);
  }
}

TEST_CASE("sensors-map writes per-pixel counts") {
  testutil::TempDir tmp;
  const Run run = cli({"sensors-map", "--iterations", "3", "--r", "10", "--output", (tmp / "map").string()});
  REQUIRE(run.code == 0);
  const json map = read_json(tmp / "map" / "sensor_map.json");
  CHECK(map.at("counts").size() == 1024);
  long total = 0;
  for (const auto& v : map.at("counts")) total += v.get<long>();
  CHECK(total == map.at("total").get<long>());
  CHECK(total <= 3 * 10);
  CHECK(fs::exists(tmp / "map" / "sensor_map.pgm"));
}

TEST_CASE("without --output the run directory is named by config hash") {
  testutil::TempDir tmp;
  ChangeDir cd(tmp.path());
  const Run first = cli({"synth", "--samples-per-class", "5"});
  REQUIRE(first.code == 0);
  REQUIRE(fs::exists("runs"));
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator("runs")) dirs.push_back(e.path());
  REQUIRE(dirs.size() == 1);
  CHECK(dirs[0].filename().string().size() == 16);
  CHECK(fs::exists(dirs[0] / "manifest.json"));

  // Same effective config maps to the same directory; a different one does not.
  REQUIRE(cli({"synth", "--samples-per-class", "5"}).code == 0);
  REQUIRE(cli({"synth", "--samples-per-class", "6"}).code == 0);
  int count = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator("runs")) ++count;
  CHECK(count == 2);
}

TEST_CASE("default synthetic crossval stays within its time budget") {
  // Measured at about 2.3 s on one core; the budget is frozen at 60 s.
  testutil::TempDir tmp;
  const auto start = std::chrono::steady_clock::now();
  const Run run = cli({"crossval", "--output", (tmp / "cv").string()});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  REQUIRE(run.code == 0);
  CHECK(lines_of(run.out).size() == 3);
  CHECK(seconds < 60.0);
}
