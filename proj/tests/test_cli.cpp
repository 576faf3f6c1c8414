#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace {

const std::string cli = DNLAB_CLI_PATH;

int run(const std::string& args) {
  int status = std::system((cli + " " + args + " > /dev/null 2>&1").c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("definitely-not-a-command") == 2);
  CHECK(run("") == 2);
  CHECK(run("verify-identities --config /nonexistent.cfg") == 2);
}

TEST_CASE("identity suite emits the pinned JSON-lines schema") {
  REQUIRE(run("verify-identities --out /tmp/dnlab_cli_a --resolution 24 --seed 5") == 0);
  std::ifstream is("/tmp/dnlab_cli_a/identities.jsonl");
  REQUIRE(is.good());
  std::string line;
  int lines = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json entry = nlohmann::json::parse(line);
    CHECK(entry.contains("identity"));
    CHECK(entry.contains("abs"));
    CHECK(entry.contains("rel"));
    CHECK(entry.contains("resolution"));
    CHECK(entry.contains("pass"));
    CHECK(entry["pass"].get<bool>());
    ++lines;
  }
  CHECK(lines >= 10);

  CHECK(run("report --manifest /tmp/dnlab_cli_a/manifest.json") == 0);
}

TEST_CASE("fixed seeds reproduce byte-identical outputs") {
  REQUIRE(run("verify-identities --out /tmp/dnlab_cli_b1 --resolution 24 --seed 9") == 0);
  REQUIRE(run("verify-identities --out /tmp/dnlab_cli_b2 --resolution 24 --seed 9") == 0);
  CHECK(slurp("/tmp/dnlab_cli_b1/identities.jsonl") == slurp("/tmp/dnlab_cli_b2/identities.jsonl"));

  nlohmann::json m1 = nlohmann::json::parse(slurp("/tmp/dnlab_cli_b1/manifest.json"));
  nlohmann::json m2 = nlohmann::json::parse(slurp("/tmp/dnlab_cli_b2/manifest.json"));
  REQUIRE(m1["outputs"].size() == m2["outputs"].size());
  for (size_t i = 0; i < m1["outputs"].size(); ++i)
    CHECK(m1["outputs"][i]["hash"] == m2["outputs"][i]["hash"]);

  // a different seed moves the random trials, hence the hashes
  REQUIRE(run("verify-identities --out /tmp/dnlab_cli_b3 --resolution 24 --seed 10") == 0);
  nlohmann::json m3 = nlohmann::json::parse(slurp("/tmp/dnlab_cli_b3/manifest.json"));
  CHECK(m1["outputs"][0]["hash"] != m3["outputs"][0]["hash"]);
}

TEST_CASE("dn export carries the pinned header") {
  REQUIRE(run("dn --out /tmp/dnlab_cli_c --resolution 24") == 0);
  std::ifstream is("/tmp/dnlab_cli_c/dn.csv");
  REQUIRE(is.good());
  std::string header;
  std::getline(is, header);
  CHECK(header == "dn 1 24");
  int rows = 0;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 24);
}

TEST_CASE("mesh files round-trip through the documented format") {
  REQUIRE(run("mesh --out /tmp/dnlab_cli_d --resolution 32 --mesh annulus") == 0);
  std::string text = slurp("/tmp/dnlab_cli_d/mesh.txt");
  CHECK(text.rfind("tmesh 1\n", 0) == 0);
  std::string metric = slurp("/tmp/dnlab_cli_d/metric.txt");
  CHECK(metric.rfind("metric 1\n", 0) == 0);
}

TEST_CASE("recurrence command writes a passing report") {
  REQUIRE(run("recurrence --out /tmp/dnlab_cli_e") == 0);
  nlohmann::json entry =
      nlohmann::json::parse(slurp("/tmp/dnlab_cli_e/recurrence.jsonl"));
  CHECK(entry["identity"] == "recurrence_sandwich");
  CHECK(entry["pass"].get<bool>());
}
