#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
};

// Runs ffr with the given argument string; stderr is folded into out when
// merge is set.
Result ffr(const std::string& args, bool merge = false) {
  const std::string cmd = std::string("'") + FFR_EXE + "' " + args + (merge ? " 2>&1" : " 2>/dev/null");
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[4096];
  std::size_t k;
  while ((k = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, k);
  const int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

std::string config(const char* name) { return std::string("--config '") + FFR_CONFIG_DIR + "/" + name + "'"; }

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("ffr_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("check on the flat Lagrangian passes") {
  const Result r = ffr("check " + config("flat.json"));
  CHECK(r.code == 0);
  CHECK(r.out.find("0 failed") != std::string::npos);
  CHECK(r.out.find("connections.metric_compatibility") != std::string::npos);
}

TEST_CASE("check is deterministic for a fixed seed") {
  const Result a = ffr("check --seed 7"), b = ffr("check --seed 7");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(ffr("check --seed 8").out != a.out);
}

TEST_CASE("an absurd regularity threshold is a regularity failure") {
  const Result r = ffr("check --tolerances.eps_reg=1", true);
  CHECK(r.code == 1);
  CHECK(r.out.find("regularity failure") != std::string::npos);
}

TEST_CASE("usage and configuration errors exit with 2") {
  CHECK(ffr("inspect --point '0.1,abc,1,1'").code == 2);
  CHECK(ffr("inspect --point '0.1,0.2,1'").code == 2);
  CHECK(ffr("inspect").code == 2);
  CHECK(ffr("").code == 2);
  CHECK(ffr("frobnicate").code == 2);
  CHECK(ffr("check --no-such-flag").code == 2);
  CHECK(ffr("check --flow.bogus=1").code == 2);
  CHECK(ffr("check --flow.steps=0").code == 2);
  CHECK(ffr("check --config /nonexistent/ffr.json").code == 2);
  CHECK(ffr("parse 'x1 +'").code == 2);
  const fs::path d = scratch("badkey");
  std::ofstream(d / "c.json") << R"({"n": 2, "lagrangain": "y1^2+y2^2"})";
  const Result r = ffr("check --config '" + (d / "c.json").string() + "'", true);
  CHECK(r.code == 2);
  CHECK(r.out.find("lagrangain") != std::string::npos);
}

TEST_CASE("inspect of the flat Lagrangian") {
  const Result r = ffr("inspect --point '0.2,-0.4,1.5,0.3'");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j.dump().find("nan") == std::string::npos);
  // Every numeric leaf is 0 or 1 for y1^2 + y2^2.
  std::function<void(const json&)> walk = [&](const json& v) {
    if (v.is_number()) CHECK((v.get<double>() == 0.0 || v.get<double>() == 1.0));
    if (v.is_structured())
      for (const auto& e : v) walk(e);
  };
  for (const char* k : {"dconnection", "curvature", "ricci", "torsion", "levi_civita", "frames", "metric"}) {
    REQUIRE(j.contains(k));
    walk(j[k]);
  }
}

TEST_CASE("inspect output matches the golden document") {
  const Result r = ffr("inspect " + config("riemannian.json") + " --point '0.3,0.7,1.1,0.9'");
  REQUIRE(r.code == 0);
  CHECK(r.out == slurp(fs::path(FFR_CONFIG_DIR).parent_path() / "tests/golden/inspect_riemannian.json"));
}

TEST_CASE("flow writes steps/stride + 1 records") {
  const fs::path d = scratch("flow");
  const Result r =
      ffr("flow " + config("conformal_flow.json") + " --out '" + d.string() + "' --flow.steps=20 --flow.stride=4");
  REQUIRE(r.code == 0);
  const json last = json::parse(r.out);
  CHECK(last["chi"].get<double>() == Catch::Approx(20 * 1e-4));
  std::ifstream ts(d / "timeseries.csv");
  int lines = 0;
  for (std::string s; std::getline(ts, s);) ++lines;
  CHECK(lines == 1 + 20 / 4 + 1);
  CHECK(fs::exists(d / "run.json"));
  CHECK(fs::exists(d / "snap_000005.csv"));
}

TEST_CASE("settings are layered: file, flags, dotted overrides") {
  const fs::path d = scratch("layers");
  const Result a = ffr("flow " + config("conformal_flow.json") + " --out '" + d.string() +
                       "' --flow.steps=6 --flow.stride=3 --flow.snapshots=false");
  REQUIRE(a.code == 0);
  const json run = json::parse(slurp(d / "run.json"));
  CHECK(run["steps"] == 6);
  CHECK(run["coupling"] == "F");  // from the file
  const Result b = ffr("flow " + config("flat.json") + " --normalize --lambda-divisor 4 --flow.lambda_divisor=2 --out '" +
                       d.string() + "' --flow.snapshots=false");
  REQUIRE(b.code == 0);
  const json run2 = json::parse(slurp(d / "run.json"));
  CHECK(run2["normalize"] == true);
  CHECK(run2["lambda_divisor"] == 2.0);
}

TEST_CASE("parse prints the canonical form") {
  const Result r = ffr("parse '2*x1 + sin( y2 )^2'");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["canonical"] == "2*x1 + sin(y2)^2");
  CHECK(j["n"] == 2);
  CHECK(ffr("parse 'x3' --n=3").code == 0);
  CHECK(ffr("parse 'x3'").code == 2);
}

TEST_CASE("thermo reports both connections") {
  const Result r = ffr("thermo " + config("block_state.json") + " --tau 1.5");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["verdict"] == "equivalent");
  CHECK(j["dconn"]["tau"] == 1.5);
  CHECK(!j["dconn"].contains("W_paper_literal"));
  const Result q = ffr("thermo " + config("finsler_quartic.json") + " --paper-literal-w");
  REQUIRE(q.code == 0);
  const json k = json::parse(q.out);
  CHECK(k["verdict"] == "dconn-favored");
  CHECK(k["lc"].contains("W_paper_literal"));
}

TEST_CASE("output does not depend on the thread count") {
  const std::string base = "thermo " + config("riemannian.json");
  const Result a = ffr(base + " --threads 1"), b = ffr(base + " --threads 4");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
}

TEST_CASE("grid dumps fields with a sidecar") {
  const fs::path d = scratch("grid");
  const Result r = ffr("grid " + config("block_state.json") + " --out '" + d.string() + "'");
  REQUIRE(r.code == 0);
  std::ifstream is(d / "grid.csv");
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header == "x1,x2,y1,y2,component,value");
  CHECK(row.rfind("0,0,0,0,gh_11,", 0) == 0);
  const json meta = json::parse(slurp(d / "grid.json"));
  CHECK(meta["resolution"] == json({16, 16, 8, 8}));
  CHECK(meta["components"].size() > 100);
}

TEST_CASE("the shipped configs pass check") {
  for (const auto& e : fs::directory_iterator(FFR_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    INFO(e.path().filename().string());
    CHECK(ffr("check --config '" + e.path().string() + "'").code == 0);
  }
}
