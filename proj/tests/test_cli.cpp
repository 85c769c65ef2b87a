#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const char* kCli = EXITPERRON_CLI_PATH;

int run(const std::string& args, const std::string& env = "") {
    std::string cmd = env + " " + std::string(kCli) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing file " << p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("exitperron_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int count_lines(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

}  // namespace

TEST_CASE("solve writes the artifacts and reports convergence") {
    fs::path dir = fresh_dir("solve");
    CHECK(run("solve --problem bm-1d --res 129 --tol 1e-10 --seed 1 --out " + dir.string()) == 0);
    std::string value = slurp(dir / "value.csv");
    CHECK(count_lines(value) == 130);  // header + 129 rows
    CHECK(fs::exists(dir / "policy.csv"));
    auto j = nlohmann::json::parse(slurp(dir / "residual.json"));
    CHECK(j["schema_version"] == 1);
    CHECK(j["seed"] == 1);
    CHECK(j["stats"]["converged"] == true);
    CHECK(j.contains("problem_hash"));
    CHECK(j["params"]["res"] == 129);
}

TEST_CASE("solve rejects a grid below the minimum resolution") {
    fs::path dir = fresh_dir("solve_bad");
    CHECK(run("solve --problem bm-1d --res 2 --seed 1 --out " + dir.string()) == 1);
}

TEST_CASE("missing seed is a usage error") {
    fs::path dir = fresh_dir("noseed");
    CHECK(run("solve --problem bm-1d --res 17 --out " + dir.string()) == 1);
}

TEST_CASE("const-reward residual report carries the constant bounds") {
    fs::path dir = fresh_dir("p3");
    CHECK(run("solve --problem const-reward-1d --res 65 --tol 1e-10 --seed 2 --out " +
              dir.string()) == 0);
    auto j = nlohmann::json::parse(slurp(dir / "residual.json"));
    CHECK(j["value_min"].get<double>() >= -1e-10);
    CHECK(j["value_max"].get<double>() <= 0.5 + 1e-10);
    CHECK(j["constant_bounds"]["lo"].get<double>() == 0.0);
    CHECK(j["constant_bounds"]["hi"].get<double>() == 0.5);
}

TEST_CASE("oracle values and unavailability") {
    fs::path dir = fresh_dir("oracle");
    CHECK(run("oracle --problem bm-1d --res 5 --out " + dir.string()) == 0);
    std::string csv = slurp(dir / "oracle.csv");
    CHECK(csv.find("0.5,0.39663909087319349") != std::string::npos);
    CHECK(run("oracle --problem drift-control-1d --res 5 --out " + dir.string()) == 1);
}

TEST_CASE("verify sub/super pass on the catalog constants") {
    fs::path dir = fresh_dir("verify");
    std::string common = " --problem const-reward-1d --res 33 --dt 1e-3 --paths 1500 --seed 5 "
                         "--tol 1e-8 --out " + dir.string();
    CHECK(run("verify sub" + common) == 0);
    CHECK(run("verify super" + common) == 0);
    CHECK(fs::exists(dir / "sub.json"));
    CHECK(fs::exists(dir / "super.json"));
}

TEST_CASE("verify sandwich fails with deliberately crossed fields") {
    fs::path dir = fresh_dir("sandwich");
    std::string common = " --problem const-reward-1d --res 33 --tol 1e-10 --seed 5 --out " +
                         dir.string();
    CHECK(run("verify sandwich" + common) == 0);

    // lift the solved field by 0.1 and feed it back as the lower field
    CHECK(run("solve --problem const-reward-1d --res 33 --tol 1e-10 --seed 5 --out " +
              dir.string()) == 0);
    std::string value = slurp(dir / "value.csv");
    std::istringstream in(value);
    std::ostringstream out;
    std::string line;
    std::getline(in, line);
    out << line << "\n";
    while (std::getline(in, line)) {
        auto p1 = line.find(',');
        auto p2 = line.find(',', p1 + 1);
        double v = std::stod(line.substr(p1 + 1, p2 - p1 - 1));
        out << line.substr(0, p1 + 1) << v + 0.1 << line.substr(p2) << "\n";
    }
    std::ofstream lifted(dir / "lifted.csv", std::ios::binary);
    lifted << out.str();
    lifted.close();
    CHECK(run("verify sandwich --field-lo " + (dir / "lifted.csv").string() + common) == 3);
}

TEST_CASE("verify dpp at the boundary start is exact") {
    fs::path dir = fresh_dir("dpp");
    CHECK(run("verify dpp --problem bm-1d --res 65 --dt 1e-3 --paths 500 --tol 1e-10 --seed 6 "
              "--out " + dir.string()) == 0);
    auto j = nlohmann::json::parse(slurp(dir / "dpp.json"));
    bool saw_boundary = false;
    for (const auto& pt : j["report"]["points"]) {
        if (pt["boundary"] == true) {
            saw_boundary = true;
            for (const auto& r : pt["rules"]) CHECK(r["residual"].get<double>() == 0.0);
        }
    }
    CHECK(saw_boundary);
}

TEST_CASE("identical configs produce byte-identical outputs across thread counts") {
    fs::path d1 = fresh_dir("det1");
    fs::path d2 = fresh_dir("det2");
    std::string args = "simulate --problem bm-1d --x0 0.5 --dt 1e-3 --paths 2000 --seed 99 --out ";
    CHECK(run(args + d1.string(), "EXITPERRON_THREADS=1") == 0);
    CHECK(run(args + d2.string(), "EXITPERRON_THREADS=8") == 0);
    CHECK(slurp(d1 / "batch.csv") == slurp(d2 / "batch.csv"));
    CHECK(slurp(d1 / "estimate.json") == slurp(d2 / "estimate.json"));

    fs::path d3 = fresh_dir("det3");
    CHECK(run(args + d3.string(), "EXITPERRON_THREADS=1") == 0);
    CHECK(slurp(d1 / "batch.csv") == slurp(d3 / "batch.csv"));
}

TEST_CASE("custom problem files load through --file") {
    fs::path dir = fresh_dir("file");
    std::ofstream pf(dir / "prob.txt");
    pf << "[problem]\ndim_state = 1\ndim_noise = 1\ndiscount = 1\n"
          "[dynamics]\ndrift = \"0\"\ndiffusion = \"1\"\n"
          "[reward]\nrunning = \"0\"\nboundary = \"x1\"\n"
          "[control]\ndim = 1\nlo = \"0\"\nhi = \"0\"\npoints = \"1\"\n"
          "[domain]\nkind = box\nlo = \"0\"\nhi = \"1\"\n";
    pf.close();
    CHECK(run("solve --file " + (dir / "prob.txt").string() +
              " --res 17 --tol 1e-8 --seed 1 --out " + dir.string()) == 0);
    // malformed file → exit 1
    std::ofstream bad(dir / "bad.txt");
    bad << "[problem]\ndim_state = 1\n";
    bad.close();
    CHECK(run("solve --file " + (dir / "bad.txt").string() + " --res 17 --seed 1 --out " +
              dir.string()) == 1);
}
