#include "json.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct Outcome {
    int code = -1;
    std::string output;  // stdout and stderr together
};

Outcome run(const std::string& args) {
    const std::string cmd = std::string(SDBC_CLI_PATH) + " " + args + " 2>&1";
    Outcome r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[512];
    while (std::fgets(buf, sizeof buf, p)) r.output += buf;
    const int status = pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::path(::testing::TempDir()) / ("sdbc_cli_" + name);
    fs::remove_all(d);
    return d;
}

TEST(Cli, ZeroStateForwardRunIsQuiet) {
    const fs::path out = scratch("zero");
    const Outcome r = run("simulate-forward --set initial.kind=zero --set time.n_t=6 --out " + out.string());
    ASSERT_EQ(r.code, 0) << r.output;
    const json rep = json::parse(slurp(out / "report.json"));
    EXPECT_EQ(rep["subcommand"], "simulate-forward");
    for (const auto& v : rep["l2_by_level"]) EXPECT_EQ(v.get<double>(), 0.0);
    EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST(Cli, ReportIsByteIdenticalAcrossRunsAndThreads) {
    const std::string common = "verify-carleman --set mesh.n=17 --set time.n_t=8 --seed 4 ";
    const fs::path a = scratch("a"), b = scratch("b"), c = scratch("c");
    ASSERT_EQ(run(common + "--out " + a.string()).code, 0);
    ASSERT_EQ(run(common + "--out " + b.string()).code, 0);
    ASSERT_EQ(run(common + "--threads 4 --out " + c.string()).code, 0);
    const std::string ra = slurp(a / "report.json");
    EXPECT_FALSE(ra.empty());
    EXPECT_EQ(ra, slurp(b / "report.json"));
    EXPECT_EQ(ra, slurp(c / "report.json"));
    EXPECT_EQ(slurp(a / "carleman.csv"), slurp(c / "carleman.csv"));
}

TEST(Cli, UnknownKeyExitsTwoAndNamesIt) {
    const Outcome r = run("simulate-forward --set mesh.bogus=3 --out " + scratch("bad").string());
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.output.find("mesh.bogus"), std::string::npos) << r.output;
    const Outcome s = run("verify-duality --set time.T=-1 --out " + scratch("bad2").string());
    EXPECT_EQ(s.code, 2);
    EXPECT_NE(s.output.find("time.T"), std::string::npos) << s.output;
    EXPECT_EQ(run("no-such-command").code, 2);
}

TEST(Cli, EveryTextFileCarriesTheHash) {
    const fs::path out = scratch("hash");
    ASSERT_EQ(run("verify-observability --set mesh.n=17 --out " + out.string()).code, 0);
    const json manifest = json::parse(slurp(out / "manifest.json"));
    const std::string hash = manifest["config_hash"];
    EXPECT_EQ(hash.size(), 16u);
    EXPECT_EQ(manifest["exit_status"], 0);
    int checked = 0;
    for (const auto& f : manifest["files"]) {
        const std::string name = f;
        const std::string body = slurp(out / name);
        if (name == "report.json")
            EXPECT_EQ(json::parse(body)["config_hash"], hash);
        else
            EXPECT_EQ(body.rfind("# config_hash=" + hash + "\n", 0), 0u) << name;
        ++checked;
    }
    EXPECT_GE(checked, 2);
}

TEST(Cli, UnresolvableAuxWeightsExitFour) {
    const fs::path out = scratch("aux");
    const Outcome r = run("aux-control --set mesh.n=17 --set time.n_t=16 --out " + out.string());
    EXPECT_EQ(r.code, 4) << r.output;
    EXPECT_NE(r.output.find("decades"), std::string::npos);
    const json manifest = json::parse(slurp(out / "manifest.json"));
    EXPECT_EQ(manifest["exit_status"], 4);
    EXPECT_TRUE(manifest.contains("error"));
    // a longer horizon keeps the weights within range
    EXPECT_EQ(run("aux-control --set mesh.n=17 --set time.T=2 --set time.n_t=8 --out " + scratch("aux2").string()).code, 0);
}

TEST(Cli, DualityAndDissipationPassOnDefaults) {
    EXPECT_EQ(run("verify-duality --set mesh.n=9 --set time.n_t=4 --out " + scratch("dual").string()).code, 0);
    EXPECT_EQ(run("verify-dissipation --set mesh.n=17 --out " + scratch("diss").string()).code, 0);
}

}  // namespace
