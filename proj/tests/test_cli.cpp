#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

const std::string kCli = BVPCLI_PATH;
const std::string kData = BVP_DATA_DIR;

int run_cli(const std::string& args) {
    const std::string cmd = "\"" + kCli + "\" " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    fs::path d = fs::temp_directory_path() / ("bvpcli_test_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("check accepts the model problem") {
    fs::path out = fresh_dir("check");
    int rc = run_cli("check " + kData + "/dpm_cylinder.json --out " + out.string());
    CHECK(rc == 0);
    Json rep = Json::parse(slurp(out / "dpm_cylinder.report.json"));
    CHECK(rep["command"] == "check");
    CHECK(rep["report"]["shapiro_lopatinskii"]["elliptic"] == true);
    CHECK(rep["report"]["interior"]["elliptic"] == true);
    CHECK(rep.contains("version"));
    CHECK(rep["config"]["inputs"].size() == 1);
}

TEST_CASE("obstruct flags the obstructed operator with exit 1") {
    fs::path out = fresh_dir("obstruct");
    int rc = run_cli("obstruct " + kData + "/cauchy_riemann_cylinder.json --out " + out.string());
    CHECK(rc == 1);
    Json rep = Json::parse(slurp(out / "cauchy_riemann_cylinder.report.json"));
    CHECK(rep["report"]["obstruction"] == 1);

    int rc2 = run_cli("obstruct " + kData + "/laplace_interval.json --out " + out.string());
    CHECK(rc2 == 0);
    Json rep2 = Json::parse(slurp(out / "laplace_interval.report.json"));
    CHECK(rep2["report"]["obstruction"] == 0);
}

TEST_CASE("index reports the model index zero") {
    fs::path out = fresh_dir("index");
    int rc = run_cli("index " + kData + "/dpm_cylinder.json --resolution 8 --resolution 12 --out " +
                     out.string());
    CHECK(rc == 0);
    Json rep = Json::parse(slurp(out / "dpm_cylinder.report.json"));
    CHECK(rep["report"]["index"] == 0);
    CHECK(rep["report"]["stable"] == true);
}

TEST_CASE("reduce writes a certificate trace on request") {
    fs::path out = fresh_dir("reduce");
    int rc = run_cli("reduce " + kData + "/laplace_interval.json --tau-steps 11 --csv --out " +
                     out.string());
    CHECK(rc == 0);
    Json rep = Json::parse(slurp(out / "laplace_interval.report.json"));
    CHECK(rep["report"]["certificate"]["valid"] == true);
    CHECK(rep["report"]["trivial"] == true);
    std::string csv = slurp(out / "laplace_interval.path.csv");
    CHECK(csv.find("step,parameter,interior_margin,boundary_margin,max_principal_angle") !=
          std::string::npos);
}

TEST_CASE("identical configuration and seed give byte-identical reports") {
    fs::path out1 = fresh_dir("repro1");
    fs::path out2 = fresh_dir("repro2");
    const std::string args = "index " + kData +
                             "/dplus_aps_rank2.json --resolution 8 --resolution 12 --seed 42";
    CHECK(run_cli(args + " --out " + out1.string()) == 0);
    CHECK(run_cli(args + " --out " + out2.string()) == 0);
    CHECK(slurp(out1 / "dplus_aps_rank2.report.json") ==
          slurp(out2 / "dplus_aps_rank2.report.json"));
}

TEST_CASE("verify runs the index-formula suite on spectral input") {
    fs::path out = fresh_dir("verify");
    int rc = run_cli("verify " + kData +
                     "/dplus_aps_rank2.json --suite formula35 --resolution 8 --resolution 12 "
                     "--out " +
                     out.string());
    CHECK(rc == 0);
    Json rep = Json::parse(slurp(out / "dplus_aps_rank2.report.json"));
    CHECK(rep["report"]["equal"] == true);
}

TEST_CASE("malformed input exits 2 with a parse error") {
    fs::path out = fresh_dir("bad");
    fs::path bad = out / "bad.json";
    std::ofstream(bad) << "{ \"name\": \"x\", \"unknown_field\": 1 }";
    CHECK(run_cli("check " + bad.string() + " --out " + out.string()) == 2);
    CHECK(run_cli("check " + (out / "missing.json").string()) == 2);
    CHECK(run_cli("bogus " + bad.string()) == 2);
}
