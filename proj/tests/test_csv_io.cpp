#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "storeq/csv_io.hpp"
#include "storeq/errors.hpp"

using namespace storeq;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
    fs::path dir = fs::temp_directory_path() / "storeq_csv_tests";
    fs::create_directories(dir);
    fs::path p = dir / name;
    std::ofstream(p) << content;
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("hourly series round trip with both timestamp separators") {
    fs::path p = write_temp("ok.csv",
                            "timestamp,load\n"
                            "2019-01-01T00:00,10.5\n"
                            "2019-01-01 01:00:00,11.5\n"
                            "2019-01-01T02:00,-3.25\n");
    HourlySeries s = read_hourly_csv(p.string());
    REQUIRE(s.values.size() == 3);
    CHECK(s.values[0] == 10.5);
    CHECK(s.values[1] == 11.5);
    CHECK(s.values[2] == -3.25);
    CHECK(s.first_timestamp == "2019-01-01T00:00");
}

TEST_CASE("gaps are reported with the missing hours") {
    fs::path p = write_temp("gap.csv",
                            "timestamp,load\n"
                            "2019-01-01T00:00,1\n"
                            "2019-01-01T03:00,2\n");
    try {
        read_hourly_csv(p.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2019-01-01T01:00") != std::string::npos);
        CHECK(msg.find("2019-01-01T02:00") != std::string::npos);
    }
}

TEST_CASE("ingestion rejections carry line numbers") {
    fs::path off = write_temp("off.csv", "t,v\n2019-01-01T00:30,1\n");
    CHECK_THROWS_WITH_AS(read_hourly_csv(off.string()),
                         doctest::Contains("line 2"), DataError);
    fs::path bad_val = write_temp("badval.csv", "t,v\n2019-01-01T00:00,1\n2019-01-01T01:00,x1\n");
    CHECK_THROWS_WITH_AS(read_hourly_csv(bad_val.string()),
                         doctest::Contains("line 3"), DataError);
    fs::path bad_ts = write_temp("badts.csv", "t,v\n01/02/2019 00:00,1\n");
    CHECK_THROWS_WITH_AS(read_hourly_csv(bad_ts.string()),
                         doctest::Contains("malformed timestamp"), DataError);
    fs::path back = write_temp("back.csv",
                               "t,v\n2019-01-01T01:00,1\n2019-01-01T00:00,2\n");
    CHECK_THROWS_WITH_AS(read_hourly_csv(back.string()),
                         doctest::Contains("strictly increasing"), DataError);
    fs::path empty = write_temp("empty.csv", "t,v\n");
    CHECK_THROWS_AS(read_hourly_csv(empty.string()), DataError);
    CHECK_THROWS_AS(read_hourly_csv("/nonexistent/file.csv"), DataError);
}

TEST_CASE("table writer layout") {
    fs::path dir = fs::temp_directory_path() / "storeq_csv_tests";
    fs::create_directories(dir);
    fs::path p = dir / "out.csv";
    write_csv(p.string(), {"time", "a"}, {{0.0, 0.25}, {1.5, -2.0}});
    CHECK(slurp(p) == "time,a\n0.000000,1.5\n0.250000,-2\n");
}

TEST_CASE("table writer rejects inconsistent input") {
    fs::path dir = fs::temp_directory_path() / "storeq_csv_tests";
    fs::create_directories(dir);
    const std::string p = (dir / "bad.csv").string();
    CHECK_THROWS_AS(write_csv(p, {"a", "b"}, {{1.0}}), ConfigError);
    CHECK_THROWS_AS(write_csv(p, {"a", "b"}, {{1.0}, {1.0, 2.0}}), ConfigError);
    CHECK_THROWS_AS(write_csv(p, {}, {}), ConfigError);
}
