#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "catch_amalgamated.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("transportctl_test_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

fs::path write_config(const std::string& name, const std::string& body) {
  const fs::path path = scratch() / (name + ".json");
  std::ofstream(path) << body;
  return path;
}

Run run(const std::string& args, bool with_stderr = false) {
  const std::string cmd = std::string(TRANSPORTCTL_PATH) + " " + args + (with_stderr ? " 2>&1" : " 2>/dev/null");
  Run r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

Run run_config(const std::string& command, const std::string& body, bool with_stderr = false) {
  return run(command + " --config " + write_config(command, body).string(), with_stderr);
}

const char* kFree = R"({"spec": {"m": 1, "q": 1, "a": [[1]], "b": [[0]]}})";

}  // namespace

TEST_CASE("qnorm on the free Laplacian", "[cli]") {
  const auto r = run_config("qnorm", kFree);
  REQUIRE(r.code == 0);
  const auto j = json::parse(r.out);
  CHECK(j["q_norm"].get<double>() == Catch::Approx(2.0).margin(1e-9));
  CHECK(j.contains("config"));
}

TEST_CASE("xy-velocity", "[cli]") {
  const auto r = run_config("xy-velocity", R"({"mu": [0.5], "gamma": [0.0], "nu": [0.0]})");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["v0"].get<double>() == Catch::Approx(2.0).margin(1e-6));
}

TEST_CASE("bands CSV output is deterministic and self-describing", "[cli]") {
  const std::string cfg = R"({"spec": {"m": 1, "q": 2, "a": [[1], [1]], "b": [[1], [-1]]}, "grid": 32})";
  const auto a = run_config("bands", cfg);
  const auto b = run_config("bands", cfg);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  std::istringstream lines(a.out);
  std::string first, second, header;
  std::getline(lines, first);
  std::getline(lines, second);
  std::getline(lines, header);
  CHECK(first.rfind("# transportctl bands", 0) == 0);
  CHECK(second.rfind("# config ", 0) == 0);
  CHECK(json::parse(second.substr(9))["grid"] == 32);
  CHECK(header == "theta,band_index,lambda,velocity,degenerate_flag");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  CHECK(rows == 64);
}

TEST_CASE("output directory", "[cli]") {
  const fs::path out = scratch() / "out";
  fs::remove_all(out);
  const auto r = run("qnorm --config " + write_config("qnorm_dir", kFree).string() + " --out " + out.string());
  REQUIRE(r.code == 0);
  CHECK(fs::exists(out / "qnorm.json"));
}

TEST_CASE("validation errors exit with status 2", "[cli]") {
  SECTION("coarse grid") {
    const auto r = run_config("bands", R"({"spec": {"m": 1, "q": 1, "a": [[1]], "b": [[0]]}, "grid": 8})", true);
    CHECK(r.code == 2);
    CHECK(json::parse(r.out)["error"] == "GridTooCoarse");
  }
  SECTION("unknown field") {
    const auto r = run_config("qnorm", R"({"spec": {"m": 1, "q": 1, "a": [[1]], "b": [[0]]}, "gird": 8})", true);
    CHECK(r.code == 2);
    CHECK(json::parse(r.out)["error"] == "ConfigInvalid");
  }
  SECTION("singular block") {
    const auto r = run_config("qnorm", R"({"spec": {"m": 1, "q": 1, "a": [[0]], "b": [[0]]}})", true);
    CHECK(r.code == 2);
    CHECK(json::parse(r.out)["error"] == "SingularOffDiagonal");
  }
  SECTION("invalid XY couplings") {
    const auto r = run_config("xy-velocity", R"({"mu": [1.0], "gamma": [1.0], "nu": [0.0]})", true);
    CHECK(r.code == 2);
    CHECK(json::parse(r.out)["error"] == "InvalidSpec");
  }
  SECTION("malformed JSON") {
    CHECK(run_config("qnorm", "{not json").code == 2);
  }
  SECTION("missing config file") {
    CHECK(run("qnorm --config " + (scratch() / "absent.json").string()).code == 2);
  }
  SECTION("unknown command") {
    CHECK(run("frobnicate --config " + write_config("x", kFree).string()).code == 2);
  }
}

TEST_CASE("numerical failures exit with status 3", "[cli]") {
  // on this window the edge tail at t = 200 exceeds the rejection threshold
  const auto r = run_config(
      "exponents", R"({"spec": {"m": 1, "q": 1, "a": [[1]], "b": [[0]]}, "times": [100, 200], "window": 420})", true);
  CHECK(r.code == 3);
  CHECK(json::parse(r.out)["exit_code"] == 3);
}

TEST_CASE("limit-periodic commands", "[cli]") {
  SECTION("thouless") {
    const auto r = run_config("thouless", R"({"w": [0.0], "z": [[0.0, 3.0]]})");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("gap") != std::string::npos);
  }
  SECTION("dt-criterion") {
    const auto r = run_config("dt-criterion", R"({"w": [3.0, -3.0], "K": 2.0, "T": 100.0})");
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["integral"].get<double>() < 1e-3);
  }
  SECTION("generic with one stage") {
    const auto r = run_config("generic", R"({"stages": 1})");
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["V"] == json::array({0.0}));
  }
}

TEST_CASE("dynamics commands", "[cli]") {
  SECTION("ballistic-check") {
    const auto r = run_config("ballistic-check", std::string(R"({"spec": {"m": 1, "q": 1, "a": [[1]], "b": [[0]]}, "times": [50]})"));
    REQUIRE(r.code == 0);
  }
  SECTION("xy-verify") {
    const auto r = run_config("xy-verify", R"({"mu": [1.0], "gamma": [0.5], "nu": [1.0], "lattice": [1, 4], "pairs": [[1, 3]], "times": [0.5]})");
    REQUIRE(r.code == 0);
    CHECK(r.out.find(",0\n") == std::string::npos);
  }
}
