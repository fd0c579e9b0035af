#include "rcdlab/io.hpp"
#include "rcdlab/pipeline.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace rcdlab;
namespace fs = std::filesystem;
using io::json;

namespace {

fs::path scratch(const std::string& tag) {
    const fs::path p = fs::temp_directory_path() / ("rcdlab_io_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("parse errors carry line and column") {
    CHECK(io::schema_version() == "1");
    try {
        io::parse_json("{\n  \"a\": 1,\n  \"b\": ]\n}", "cfg.json");
        FAIL("no throw");
    } catch (const io::ConfigError& e) {
        CHECK(e.line() == 3);
        CHECK(e.column() >= 8);
        CHECK(std::string(e.what()).rfind("cfg.json:3:", 0) == 0);
    }
}

TEST_CASE("dump is canonical") {
    const json a = json::parse(R"({"b": [1, 2.5, 0.1], "a": {"y": 1, "x": null}})");
    const json b = json::parse(R"({"a": {"x": null, "y": 1}, "b": [1, 2.5, 0.1]})");
    CHECK(io::dump(a) == io::dump(b));
    CHECK(io::config_hash(a) == io::config_hash(b));
    CHECK(io::config_hash(a).size() == 16);
    // 17 digits survive a round trip
    const double x = 0.1 + 0.2;
    CHECK(json::parse(io::dump(json{{"x", x}})).at("x").get<double>() == x);
    CHECK(io::dump(json{{"x", std::numeric_limits<double>::infinity()}}).find("null") != std::string::npos);
}

TEST_CASE("space and measure round trip") {
    const SpacePtr s = std::make_shared<const FiniteMMSpace>(
        io::space_from_json(json::parse(R"({"model": "cycle", "n": 12})")));
    const json js = io::space_to_json(*s);
    const FiniteMMSpace back = io::space_from_json(json::parse(io::dump(js)));
    CHECK((back.metric() - s->metric()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.measure() - s->measure()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.graph()->size() == s->graph()->size());

    const ProbMeasure b = io::measure_from_json(json::parse(R"({"bump": {"center": 3, "radius": 0.2}})"), s, 1);
    const ProbMeasure r = io::measure_from_json(io::measure_to_json(b), s, 1);
    CHECK((r.weights() - b.weights()).cwiseAbs().maxCoeff() < 1e-15);
    const ProbMeasure r1 = io::measure_from_json(json::parse(R"({"random": {}})"), s, 5);
    const ProbMeasure r2 = io::measure_from_json(json::parse(R"({"random": {}})"), s, 5);
    CHECK(r1.weights() == r2.weights());
    CHECK(io::measure_from_json(json::parse(R"({"dirac": 4})"), s, 0)[4] == 1.0);
    CHECK_THROWS_AS(io::measure_from_json(json::parse(R"({"nonsense": 1})"), s, 0), io::ConfigError);
}

TEST_CASE("invalid explicit space") {
    const json bad = json::parse(R"({"points": ["a", "b", "c"],
        "metric": [[0, 1, 5], [1, 0, 1], [5, 1, 0]], "measure": [1, 1, 1]})");
    CHECK_THROWS(io::space_from_json(bad));
    CHECK_NOTHROW(io::space_from_json(bad, {}, false));
}

TEST_CASE("atomic write replaces in place") {
    const fs::path dir = scratch("atomic");
    const fs::path p = dir / "x.json";
    io::write_atomic(p, "one");
    io::write_atomic(p, "two");
    CHECK(slurp(p) == "two");
    CHECK(!fs::exists(dir / "x.json.tmp"));
    fs::remove_all(dir);
}

TEST_CASE("run config writes artifacts and flags assertions") {
    const json cfg = json::parse(R"({
        "schema": "1", "seed": 3, "space": {"model": "segment", "n": 8},
        "tasks": [
          {"id": "v", "kind": "validate"},
          {"id": "o", "kind": "ot", "mu": {"dirac": 0}, "nu": {"random": {}}}
        ]})");
    const fs::path dir = scratch("run");
    const RunResult r = run_config(cfg, {}, dir, {});
    CHECK(!r.assertion_failed);
    CHECK(fs::exists(dir / "o.json"));
    CHECK(fs::exists(dir / "diagnostics.csv"));
    const json run = io::read_json_file(dir / "run.json");
    CHECK(run.at("schema") == "1");
    CHECK(run.at("config_hash") == io::read_json_file(dir / "o.json").at("config_hash"));

    CHECK_THROWS_AS(run_config(json::parse(R"({"schema": "1", "seed": 1, "space": {"model": "cycle", "n": 8},
        "tolerances": {"gap": -1}, "tasks": []})"), {}, dir, {}), io::ConfigError);

    // two points are not RCD(0, inf): the EVI part of the battery fails
    const json two = json::parse(R"({"schema": "1", "seed": 1, "space": {"model": "two_point", "n": 2},
        "tasks": [{"id": "verify", "kind": "verify", "K": 0, "mode": "assert"}]})");
    const RunResult f = run_config(two, {}, dir, {});
    CHECK(f.assertion_failed);
    CHECK(f.failed_task == "verify");
    CHECK(f.report_path == dir / "verify.json");

    json unknown = cfg;
    unknown["tolerances"] = {{"gapp", 1e-9}};
    CHECK_THROWS_AS(run_config(unknown, {}, dir, {}), io::ConfigError);

    json noseed = cfg;
    noseed.erase("seed");
    CHECK_THROWS(run_config(noseed, {}, dir, {}));
    fs::remove_all(dir);
}
