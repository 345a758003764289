#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfg/io/csv.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;
using mfg::io::read_csv;

namespace {

const fs::path kConfigs = fs::path(MFG_SOURCE_DIR) / "configs";

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("mfg_test_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct Outcome {
  int code = -1;
  std::string err;
};

/// Runs the CLI with `args`; stdout is discarded, stderr captured.
Outcome cli(const std::string& args) {
  const fs::path err = scratch() / "stderr.txt";
  const std::string cmd = std::string("\"") + MFG_CLI_PATH + "\" " + args + " >/dev/null 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Outcome out;
  out.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  out.err = slurp(err);
  return out;
}

std::string cfg(const char* name) { return "--config \"" + (kConfigs / name).string() + "\""; }

std::string out(const std::string& name) { return "--out \"" + (scratch() / name).string() + "\""; }

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

}  // namespace

TEST_CASE("run on zero data writes a one-row report") {
  REQUIRE(cli("run " + cfg("zero.ini") + " " + out("zero")).code == 0);
  const auto rep = read_csv(scratch() / "zero" / "report.csv");
  CHECK(rep.header.front() == "n");
  CHECK(rep.rows.size() == 1);
  const auto sum = read_csv(scratch() / "zero" / "summary.csv");
  CHECK(sum.rows.at(2).at(0) == "converged");
  CHECK(sum.rows.at(2).at(1) == "1");
  const auto sol = read_csv(scratch() / "zero" / "solution.csv");
  CHECK(sol.rows.size() == 16 * 8);
  CHECK(fs::exists(scratch() / "zero" / "timing.csv"));
}

TEST_CASE("outputs are bitwise reproducible") {
  REQUIRE(cli("run " + cfg("reference.ini") + " " + out("a") + " --seed 5").code == 0);
  REQUIRE(cli("run " + cfg("reference.ini") + " " + out("b") + " --seed 5").code == 0);
  for (const char* f : {"report.csv", "solution.csv", "summary.csv"})
    CHECK(slurp(scratch() / "a" / f) == slurp(scratch() / "b" / f));
  CHECK(slurp(scratch() / "a" / "report.csv").size() > 100);

  // the seed touches only the sampled validation hook
  REQUIRE(cli("run " + cfg("reference.ini") + " " + out("c") + " --seed 6").code == 0);
  CHECK(slurp(scratch() / "a" / "report.csv") == slurp(scratch() / "c" / "report.csv"));
  CHECK(slurp(scratch() / "a" / "solution.csv") == slurp(scratch() / "c" / "solution.csv"));

  const std::string report = (scratch() / "a" / "report.csv").string();
  REQUIRE(cli("plot \"" + report + "\" --out \"" + (scratch() / "p1.svg").string() + "\"").code == 0);
  REQUIRE(cli("plot \"" + report + "\" --out \"" + (scratch() / "p2.svg").string() + "\"").code == 0);
  CHECK(slurp(scratch() / "p1.svg") == slurp(scratch() / "p2.svg"));
  CHECK(slurp(scratch() / "p1.svg").rfind("<svg", 0) == 0);
}

TEST_CASE("--max-iter and --tol override the config") {
  REQUIRE(cli("run " + cfg("reference.ini") + " " + out("short") + " --max-iter 2").code == 0);
  CHECK(read_csv(scratch() / "short" / "report.csv").rows.size() == 2);
  CHECK(slurp(scratch() / "short" / "summary.csv").find("max_iter") != std::string::npos);
  CHECK(cli("run " + cfg("reference.ini") + " " + out("bad") + " --max-iter 0").code == 2);
  CHECK(cli("run " + cfg("reference.ini") + " " + out("bad") + " --tol -1").code == 2);
}

TEST_CASE("sweep: sigma list handling") {
  CHECK(cli("sweep " + cfg("reference.ini") + " " + out("s0") + " --sigma \"\"").code == 2);
  CHECK(cli("sweep " + cfg("reference.ini") + " " + out("s0") + " --sigma \" , \"").code == 2);
  CHECK(cli("sweep " + cfg("reference.ini") + " " + out("s0") + " --sigma 0.1,-0.2").code == 2);
  CHECK(cli("sweep " + cfg("reference.ini") + " " + out("s0") + " --sigma 0.1,abc").code == 2);

  REQUIRE(cli("sweep " + cfg("reference.ini") + " " + out("s1") + " --sigma 0.1,0,0.05").code == 0);
  const auto t = read_csv(scratch() / "s1" / "sweep.csv");
  REQUIRE(t.rows.size() == 3);
  CHECK(t.numbers("sigma") == std::vector<double>{0.0, 0.05, 0.1});
  CHECK(fs::exists(scratch() / "s1" / "sweep.svg"));
  CHECK(fs::exists(scratch() / "s1" / "sweep_summary.csv"));
}

TEST_CASE("compare needs a local coupling") {
  const auto r = cli("compare " + cfg("reference.ini") + " " + out("c0"));
  CHECK(r.code == 2);
  CHECK(r.err.find("local") != std::string::npos);
  CHECK(cli("compare " + cfg("ergodic.ini") + " " + out("c0")).code == 2);

  REQUIRE(cli("compare " + cfg("local.ini") + " " + out("c1")).code == 0);
  const auto s = read_csv(scratch() / "c1" / "compare_summary.csv");
  CHECK(s.rows.at(0).at(0) == "pi_converged");
  CHECK(s.rows.at(0).at(1) == "1");
  CHECK(s.rows.at(2).at(1) == "1");
  CHECK(std::stod(s.rows.at(4).at(1)) <= 1e-6);
  CHECK(std::stod(s.rows.at(5).at(1)) <= 1e-6);
}

TEST_CASE("plot rejects empty or foreign reports") {
  const fs::path empty = write_config("empty_report.csv", "n,du_norm,dm_norm,dq_norm,combined\n");
  CHECK(cli("plot \"" + empty.string() + "\" --out \"" + (scratch() / "e.svg").string() + "\"").code == 2);
  const fs::path foreign = write_config("foreign.csv", "a,b\n1,2\n");
  CHECK(cli("plot \"" + foreign.string() + "\" --out \"" + (scratch() / "e.svg").string() + "\"").code == 2);
  CHECK(cli("plot \"" + (scratch() / "nothing.csv").string() + "\"").code == 2);
}

TEST_CASE("config diagnostics exit 2, solver failures exit 3") {
  const fs::path typo = write_config("typo.ini", "[grid]\nn = 8\nnt = 4\nbogus = 1\n[data]\nm0 = uniform\n");
  auto r = cli("run --config \"" + typo.string() + "\" " + out("x"));
  CHECK(r.code == 2);
  CHECK(r.err.find("line 4") != std::string::npos);

  std::string nodes;
  for (int i = 0; i < 8; ++i) nodes += std::to_string(i) + " 3\n";
  write_config("heavy.txt", nodes);
  const fs::path heavy = write_config("heavy.ini", "[grid]\nn = 8\nnt = 4\n[data]\nm0 = file\nm0_file = heavy.txt\n");
  r = cli("run --config \"" + heavy.string() + "\" " + out("x"));
  CHECK(r.code == 2);
  CHECK(r.err.find("mass") != std::string::npos);

  CHECK(cli("run --config \"" + (scratch() / "absent.ini").string() + "\" " + out("x")).code == 2);

  const fs::path starved = write_config(
      "starved.ini",
      "[grid]\ndim = 2\nn = 8\nnt = 3\n[data]\nm0 = gaussian_bump\nuT = sine\n"
      "[solver]\nlinear = iterative\nlinear_max_iter = 1\nlinear_tol = 1e-16\n");
  r = cli("run --config \"" + starved.string() + "\" " + out("x"));
  CHECK(r.code == 3);
  CHECK(r.err.find("solver aborted") != std::string::npos);
}
