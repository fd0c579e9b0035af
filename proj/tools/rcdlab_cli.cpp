// rcdlab command line: thin layer over the C API.
// exit codes: 0 ok, 1 assertion failed, 2 bad input, 3 solver failure, 4 io/internal

#include "rcdlab/rcdlab.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct SpaceDeleter {
    void operator()(rcd_space* s) const { rcd_space_free(s); }
};
struct ResultDeleter {
    void operator()(rcd_result* r) const { rcd_result_free(r); }
};
using SpaceHandle = std::unique_ptr<rcd_space, SpaceDeleter>;
using ResultHandle = std::unique_ptr<rcd_result, ResultDeleter>;

// thrown to unwind with an exit code after the message is printed
struct Exit {
    int code;
};

int exit_code(rcd_status s) {
    switch (s) {
        case RCD_OK: return 0;
        case RCD_ERR_PARSE:
        case RCD_ERR_ARGUMENT: return 2;
        case RCD_ERR_SOLVER:
        case RCD_ERR_INFEASIBLE: return 3;
        default: return 4;
    }
}

[[noreturn]] void fail(rcd_status s, const std::string& origin) {
    // syntax errors already carry origin:line:column
    const std::string where = rcd_last_error_line() > 0 ? std::string() : origin;
    const std::string task = rcd_last_error_task();
    if (s == RCD_ERR_SOLVER || s == RCD_ERR_INFEASIBLE)
        std::cerr << "rcdlab: solver failure" << (task.empty() ? "" : " in task " + task) << ": " << rcd_last_error() << "\n";
    else
        std::cerr << "rcdlab: " << (where.empty() ? "" : where + ": ") << rcd_last_error()
                  << (task.empty() ? "" : " (task " + task + ")") << "\n";
    throw Exit{exit_code(s)};
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "rcdlab: cannot open " << path << "\n";
        throw Exit{2};
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::string& path) {
    const std::string text = slurp(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::cerr << "rcdlab: " << path << ":" << line << ":" << col << ": syntax error\n";
        throw Exit{2};
    }
}

struct Common {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
    std::optional<double> tol_gap, tol_inner, tol_geodesic, tol_quadratic, tol_additivity, tol_evi;

    std::string options(const std::string& base_dir = {}) const {
        json o = json::object();
        if (seed) o["seed"] = *seed;
        if (threads) o["threads"] = *threads;
        json t = json::object();
        auto put = [&](const char* k, const std::optional<double>& v) {
            if (v) t[k] = *v;
        };
        put("gap", tol_gap);
        put("inner", tol_inner);
        put("geodesic", tol_geodesic);
        put("quadratic", tol_quadratic);
        put("additivity", tol_additivity);
        put("evi", tol_evi);
        if (!t.empty()) o["tolerances"] = t;
        if (!base_dir.empty()) o["base_dir"] = base_dir;
        return o.dump();
    }
};

void add_common(CLI::App* app, Common& c, bool out_is_dir = false) {
    app->add_option("--seed", c.seed, "Random seed");
    app->add_option("--threads", c.threads, "Worker threads (RCDLAB_THREADS caps)");
    app->add_option("--out", c.out, out_is_dir ? "Output directory" : "Output file (stdout when absent)");
    app->add_option("--tol-gap", c.tol_gap, "OT relative duality gap");
    app->add_option("--tol-inner", c.tol_inner, "JKO inner gap");
    app->add_option("--tol-geodesic", c.tol_geodesic, "Entropy minimiser gap");
    app->add_option("--tol-quadratic", c.tol_quadratic, "Parallelogram law");
    app->add_option("--tol-additivity", c.tol_additivity, "Heat flow additivity");
    app->add_option("--tol-evi", c.tol_evi, "EVI residual");
}

SpaceHandle load_space(const std::string& path, bool validate = true) {
    const std::string text = read_json(path).dump();
    rcd_space* s = nullptr;
    const fs::path base = fs::absolute(path).parent_path();
    if (const rcd_status st = rcd_space_from_json(text.c_str(), base.string().c_str(), validate ? 1 : 0, &s))
        fail(st, path);
    return SpaceHandle(s);
}

// measure or vector argument: a file holding JSON
json file_ref(const std::string& path) { return json{{"file", fs::absolute(path).string()}}; }

int run_single(const std::string& space_path, const json& task, const Common& c) {
    const SpaceHandle space = load_space(space_path);
    rcd_result* r = nullptr;
    const std::string text = task.dump();
    if (const rcd_status st = rcd_run_task(space.get(), text.c_str(), c.options().c_str(), &r)) fail(st, "");
    const ResultHandle res(r);
    if (c.out.empty()) {
        std::cout << rcd_result_json(res.get());
    } else if (const rcd_status st = rcd_result_write(res.get(), c.out.c_str())) {
        fail(st, c.out);
    }
    if (rcd_result_assertion_failed(res.get())) {
        std::cerr << "rcdlab: assertion failed, report " << (c.out.empty() ? "<stdout>" : c.out) << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rcdlab: finite metric measure spaces, transport, heat flow and curvature checks"};
    app.require_subcommand(1);
    app.set_version_flag("--schema-version", std::string(rcd_schema_version()));

    Common common;
    std::string space, mu, nu, mu0, mu1, f0, fvec, gvec, paths, config, op = "energy", form = "calibrated";
    std::string flavor = "semigroup", method = "auto", epsilon = "auto", mode = "assert";
    std::optional<std::string> gauge;
    std::size_t depth = 4, steps = 10;
    double K = 0.0, tau = 0.0, dt = 1e-3;
    std::vector<double> times;

    auto* validate = app.add_subcommand("validate", "Validate a space file or a run config");
    validate->add_option("--space", space, "Space JSON");
    validate->add_option("--config", config, "Run config JSON (parsed and checked, not run)");
    add_common(validate, common);

    auto* ot = app.add_subcommand("ot", "W2, optimal plan and Kantorovich potentials");
    ot->add_option("--space", space)->required();
    ot->add_option("--mu", mu)->required();
    ot->add_option("--nu", nu)->required();
    ot->add_option("--gauge", gauge, "Point where phi is pinned to 0");
    add_common(ot, common);

    auto* geo = app.add_subcommand("geodesic", "Good geodesic by entropy minimising midpoints");
    geo->add_option("--space", space)->required();
    geo->add_option("--mu0", mu0)->required();
    geo->add_option("--mu1", mu1)->required();
    geo->add_option("--depth", depth)->capture_default_str();
    geo->add_option("--epsilon", epsilon, "Slack or auto")->capture_default_str();
    geo->add_option("--K", K)->capture_default_str();
    add_common(geo, common);

    auto* fm = app.add_subcommand("form", "Dirichlet form operations");
    fm->add_option("--space", space)->required();
    fm->add_option("--op", op)->check(CLI::IsMember({"energy", "gamma", "laplacian", "mod2", "intrinsic"}))->capture_default_str();
    fm->add_option("--form", form)->check(CLI::IsMember({"calibrated", "unit"}))->capture_default_str();
    fm->add_option("--f", fvec, "Function JSON array");
    fm->add_option("--g", gvec, "Second function JSON array");
    fm->add_option("--paths", paths, "JSON array of vertex paths (mod2)");
    add_common(fm, common);

    auto* fl = app.add_subcommand("flow", "Heat flow: semigroup or JKO");
    fl->add_option("--space", space)->required();
    fl->add_option("--f0", f0, "Initial measure JSON")->required();
    fl->add_option("--flavor", flavor)->check(CLI::IsMember({"semigroup", "jko"}))->capture_default_str();
    fl->add_option("--t", times, "Sample times (semigroup)")->delimiter(',');
    fl->add_option("--tau", tau, "JKO step");
    fl->add_option("--steps", steps, "JKO steps")->capture_default_str();
    fl->add_option("--method", method)->check(CLI::IsMember({"auto", "expm", "implicit_euler"}))->capture_default_str();
    fl->add_option("--dt", dt, "Implicit Euler step")->capture_default_str();
    fl->add_option("--form", form)->check(CLI::IsMember({"calibrated", "unit"}))->capture_default_str();
    add_common(fl, common);

    auto* ver = app.add_subcommand("verify", "Parallelogram, additivity and EVI battery");
    ver->add_option("--space", space)->required();
    ver->add_option("--config", config, "Suite JSON: K, t_grid, dt, samples, mode");
    ver->add_option("--mode", mode)->check(CLI::IsMember({"assert", "report"}))->capture_default_str();
    add_common(ver, common);

    auto* run = app.add_subcommand("run", "Run an experiment config");
    run->add_option("config", config, "Config JSON")->required();
    add_common(run, common, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*validate) {
            if (space.empty() == config.empty()) {
                std::cerr << "rcdlab: validate needs exactly one of --space, --config\n";
                return 2;
            }
            if (!config.empty()) {
                const json cfg = read_json(config);
                if (!cfg.is_object() || !cfg.contains("space") || !cfg.contains("tasks")) {
                    std::cerr << "rcdlab: " << config << ": needs \"space\" and \"tasks\"\n";
                    return 2;
                }
                const json sp = cfg.at("space");
                rcd_space* s = nullptr;
                const std::string base = fs::absolute(config).parent_path().string();
                if (const rcd_status st = rcd_space_from_json(sp.dump().c_str(), base.c_str(), 1, &s)) fail(st, config);
                rcd_space_free(s);
                std::cout << "ok\n";
                return 0;
            }
            const SpaceHandle sp = load_space(space, false);
            rcd_result* r = nullptr;
            if (const rcd_status st = rcd_run_task(sp.get(), R"({"id":"validate","kind":"validate"})",
                                                   common.options().c_str(), &r))
                fail(st, space);
            const ResultHandle res(r);
            if (common.out.empty()) std::cout << rcd_result_json(res.get());
            else if (const rcd_status st = rcd_result_write(res.get(), common.out.c_str())) fail(st, common.out);
            if (rcd_result_assertion_failed(res.get())) {
                std::cerr << "rcdlab: invalid space, report " << (common.out.empty() ? "<stdout>" : common.out) << "\n";
                return 1;
            }
            return 0;
        }
        if (*ot) {
            json t = {{"id", "ot"}, {"kind", "ot"}, {"mu", file_ref(mu)}, {"nu", file_ref(nu)}};
            if (gauge) {
                try {
                    t["gauge"] = std::stoul(*gauge);
                } catch (const std::exception&) {
                    t["gauge"] = *gauge;
                }
            }
            return run_single(space, t, common);
        }
        if (*geo) {
            json t = {{"id", "geodesic"}, {"kind", "geodesic"}, {"mu0", file_ref(mu0)}, {"mu1", file_ref(mu1)},
                      {"depth", depth}, {"K", K}};
            if (epsilon == "auto") {
                t["epsilon"] = "auto";
            } else {
                try {
                    t["epsilon"] = std::stod(epsilon);
                } catch (const std::exception&) {
                    std::cerr << "rcdlab: --epsilon expects a number or auto\n";
                    return 2;
                }
            }
            return run_single(space, t, common);
        }
        if (*fm) {
            json t = {{"id", "form"}, {"kind", "form"}, {"op", op}, {"form", form}};
            if (!fvec.empty()) t["f"] = read_json(fvec);
            if (!gvec.empty()) t["g"] = read_json(gvec);
            if (!paths.empty()) t["paths"] = read_json(paths);
            return run_single(space, t, common);
        }
        if (*fl) {
            json t = {{"id", "flow"}, {"kind", "flow"}, {"flavor", flavor}, {"f0", file_ref(f0)},
                      {"method", method}, {"dt", dt}, {"form", form}};
            if (flavor == "semigroup") {
                if (times.empty()) {
                    std::cerr << "rcdlab: flow --flavor semigroup needs --t\n";
                    return 2;
                }
                t["times"] = times;
            } else {
                t["tau"] = tau;
                t["steps"] = steps;
            }
            return run_single(space, t, common);
        }
        if (*ver) {
            json t = config.empty() ? json::object() : read_json(config);
            t["id"] = "verify";
            t["kind"] = "verify";
            if (!t.contains("mode")) t["mode"] = mode;
            return run_single(space, t, common);
        }
        if (*run) {
            const std::string text = slurp(config);
            const std::string out = common.out.empty() ? "rcdlab_out" : common.out;
            const std::string base = fs::absolute(config).parent_path().string();
            rcd_result* r = nullptr;
            if (const rcd_status st =
                    rcd_run_config(text.c_str(), config.c_str(), base.c_str(), out.c_str(), common.options().c_str(), &r))
                fail(st, config);
            const ResultHandle res(r);
            if (rcd_result_assertion_failed(res.get())) {
                std::cerr << "rcdlab: assertion failed in task " << rcd_result_failed_task(res.get()) << ", report "
                          << rcd_result_report_path(res.get()) << "\n";
                return 1;
            }
            std::cout << "ok: " << (fs::path(out) / "run.json").string() << "\n";
            return 0;
        }
    } catch (const Exit& e) {
        return e.code;
    }
    return 0;
}
