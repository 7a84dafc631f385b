#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#ifndef STOREQ_CLI
#error "STOREQ_CLI must point at the command line binary"
#endif

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(STOREQ_CLI) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    std::array<char, 512> buf;
    while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

fs::path work_dir() {
    fs::path dir = fs::temp_directory_path() / "storeq_cli_tests";
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const std::string& name, const json& j) {
    fs::path p = work_dir() / name;
    std::ofstream(p) << j.dump(2) << '\n';
    return p;
}

json market_block() {
    return json{{"C0", -7546.0},
                {"C1", 151.77},
                {"demand", {{"type", "sinusoid"}, {"theta1", 6862.5},
                            {"theta", M_PI / 6.0}, {"level", 1500.0}}}};
}

json agent_block() {
    return json{{"alpha", 84.0}, {"beta", 7.0}, {"gamma", 500.0}};
}

json det_config() {
    return json{{"version", 1},
                {"seed", 1},
                {"horizon", 24.0},
                {"aggregation", 10000.0},
                {"market", market_block()},
                {"agent", agent_block()},
                {"numerics", {{"steps", 96}}}};
}

json sto_config() {
    json j = det_config();
    j["market"]["demand_shock"] = {{"theta", 1.2}, {"mu", 0.0}, {"sigma", 900.0}, {"x0", 0.0}};
    j["market"]["renewables_shock"] = {{"theta", 0.8}, {"mu", 0.0}, {"sigma", 600.0}, {"x0", 0.0}};
    j["seed"] = 3;
    j["numerics"] = {{"steps", 48}, {"paths", 300}, {"max_iterations", 20}, {"tolerance", 1e-3}};
    return j;
}

std::vector<std::vector<double>> read_table(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::string line;
    REQUIRE(std::getline(in, line));  // header
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

json load_summary(const fs::path& dir) {
    std::ifstream in(dir / "summary.json");
    REQUIRE(in.good());
    return json::parse(in);
}

}  // namespace

TEST_CASE("det-eq writes a clearing equilibrium and a self-consistent summary") {
    const fs::path cfg = write_config("det.json", det_config());
    const fs::path out = work_dir() / "det_out";
    RunResult r = run_cli("det-eq --config " + cfg.string() + " --out " + out.string());
    CHECK(r.exit_code == 0);

    const auto rows = read_table(out / "equilibrium.csv");
    REQUIRE(rows.size() == 97);
    // columns: time, price, q, Q, X, demand, clearing_residual
    CHECK(rows.front()[1] == doctest::Approx(64.45758865).epsilon(1e-6));
    for (const auto& row : rows) {
        REQUIRE(row.size() == 7);
        CHECK(std::abs(row[6]) < 1e-6);
    }

    const json s = load_summary(out);
    CHECK(s.at("mode") == "det-eq");
    CHECK(std::abs(s.at("results").at("clearing_residual").get<double>()) < 1e-6);
    CHECK(s.at("results").at("omega_tilde").get<double>() ==
          doctest::Approx(0.2446577387).epsilon(1e-8));
}

TEST_CASE("identical runs produce identical summaries apart from the timestamp") {
    const fs::path cfg = write_config("det.json", det_config());
    const fs::path out_a = work_dir() / "rep_a";
    const fs::path out_b = work_dir() / "rep_b";
    CHECK(run_cli("det-eq --config " + cfg.string() + " --out " + out_a.string()).exit_code == 0);
    CHECK(run_cli("det-eq --config " + cfg.string() + " --out " + out_b.string()).exit_code == 0);
    json a = load_summary(out_a), b = load_summary(out_b);
    a.erase("timestamp");
    b.erase("timestamp");
    CHECK(a.dump() == b.dump());
    CHECK(a.at("config_hash") == b.at("config_hash"));
}

TEST_CASE("sto-eq converges with noise and the residual columns stay small") {
    const fs::path cfg = write_config("sto.json", sto_config());
    const fs::path out = work_dir() / "sto_out";
    RunResult r = run_cli("sto-eq --config " + cfg.string() + " --out " + out.string());
    CHECK(r.exit_code == 0);
    const auto rows = read_table(out / "sto_eq.csv");
    REQUIRE(rows.size() == 49);
    for (const auto& row : rows) {
        REQUIRE(row.size() == 8);
        CHECK(row[6] < 1e-6);   // residual p99
        CHECK(row[7] == 0.0);   // capped fraction
        CHECK(row[2] <= row[3]);  // price p05 <= p95
    }
    CHECK(fs::exists(out / "price_samples.csv"));
    CHECK(load_summary(out).at("results").at("converged").get<bool>());
}

TEST_CASE("sto-eq exits 4 on the iteration cap but still writes diagnostics") {
    json j = sto_config();
    j["numerics"]["max_iterations"] = 1;
    const fs::path cfg = write_config("sto_cap.json", j);
    const fs::path out = work_dir() / "sto_cap_out";
    RunResult r = run_cli("sto-eq --config " + cfg.string() + " --out " + out.string());
    CHECK(r.exit_code == 4);
    CHECK(fs::exists(out / "sto_eq.csv"));
    const json s = load_summary(out);
    CHECK_FALSE(s.at("results").at("converged").get<bool>());
    CHECK(s.at("results").at("iterations").get<int>() == 1);
}

TEST_CASE("calibrate recovers the generating process from an hourly CSV") {
    // synthetic data: 24-slot seasonal profile plus an exact-discretization OU
    const double theta = 0.3, sigma = 10.0, dt = 1.0;
    const double a = std::exp(-theta * dt);
    const double sd = sigma * std::sqrt((1.0 - a * a) / (2.0 * theta));
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01(0.0, 1.0);
    const fs::path csv = work_dir() / "load.csv";
    {
        std::ofstream out(csv);
        out << "timestamp,load\n";
        double x = 0.0;
        std::time_t t0 = 1546300800;  // 2019-01-01T00:00Z
        char ts[32];
        for (int i = 0; i < 24 * 120; ++i) {
            std::time_t t = t0 + 3600 * i;
            std::tm tm{};
            gmtime_r(&t, &tm);
            std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M", &tm);
            const double season = 50.0 + 12.0 * std::sin(2.0 * M_PI * (i % 24) / 24.0);
            out << ts << ',' << season + x << '\n';
            x = a * x + sd * n01(rng);
        }
    }
    json j{{"version", 1}, {"data", {{"csv", csv.string()}, {"dt", 1.0}}}};
    const fs::path cfg = write_config("cal.json", j);
    const fs::path out = work_dir() / "cal_out";
    RunResult r = run_cli("calibrate --config " + cfg.string() + " --out " + out.string());
    CHECK(r.exit_code == 0);
    std::ifstream mf(out / "model.json");
    REQUIRE(mf.good());
    const json model = json::parse(mf);
    CHECK(model.at("model").at("theta").get<double>() == doctest::Approx(theta).epsilon(0.35));
    CHECK(model.at("model").at("sigma").get<double>() == doctest::Approx(sigma).epsilon(0.2));
    const auto profile = model.at("profile").get<std::vector<double>>();
    REQUIRE(profile.size() == 24);
    CHECK(profile[6] == doctest::Approx(50.0 + 12.0 * std::sin(2.0 * M_PI * 6.0 / 24.0))
                            .epsilon(0.05));
    CHECK(model.at("diagnostics").at("observations").get<int>() == 24 * 120);
}

TEST_CASE("validate reports violations without failing") {
    json j = det_config();
    j["agent"]["alpha"] = 84.0;
    const fs::path good = write_config("ok.json", j);
    RunResult r = run_cli("validate --config " + good.string());
    CHECK(r.exit_code == 0);
    json rep = json::parse(r.output);
    CHECK(rep.at("violations").empty());

    // schema problems are reported, not fatal, in dry-run mode
    j["mystery"] = 1;
    const fs::path bad = write_config("bad.json", j);
    r = run_cli("validate --config " + bad.string());
    CHECK(r.exit_code == 0);
    rep = json::parse(r.output);
    REQUIRE(rep.at("violations").size() == 1);
    CHECK(rep.at("violations")[0].get<std::string>().find("mystery") != std::string::npos);
}

TEST_CASE("schema and data failures map to distinct exit codes") {
    json j = det_config();
    j["mystery"] = 1;
    const fs::path unknown = write_config("unknown.json", j);
    CHECK(run_cli("det-eq --config " + unknown.string()).exit_code == 2);

    const fs::path not_json = work_dir() / "not.json";
    std::ofstream(not_json) << "{ nope";
    CHECK(run_cli("det-eq --config " + not_json.string()).exit_code == 2);

    CHECK(run_cli("det-eq --config /nonexistent/cfg.json").exit_code == 3);

    json cal{{"version", 1}, {"data", {{"csv", "/nonexistent/data.csv"}}}};
    const fs::path cfg = write_config("cal_missing.json", cal);
    CHECK(run_cli("calibrate --config " + cfg.string() + " --out " +
                  (work_dir() / "cal_missing").string())
              .exit_code == 3);
}

TEST_CASE("command line overrides take effect") {
    const fs::path cfg = write_config("det.json", det_config());
    const fs::path out = work_dir() / "override_out";
    RunResult r = run_cli("det-eq --config " + cfg.string() + " --out " + out.string() +
                          " --steps 48");
    CHECK(r.exit_code == 0);
    CHECK(read_table(out / "equilibrium.csv").size() == 49);
    const json s = load_summary(out);
    CHECK(s.at("config").at("numerics").at("steps").get<int>() == 48);
}
