#include "rcdlab/pipeline.hpp"

#include "rcdlab/geodesy.hpp"
#include "rcdlab/ot.hpp"
#include "parallel.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace rcdlab {

namespace fs = std::filesystem;
using io::ConfigError;
using io::json;

namespace {

template <class T>
T param(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string(key) + ": wrong type");
    }
}

const json& need(const json& j, const char* key) {
    if (!j.contains(key)) throw ConfigError(std::string("missing \"") + key + "\"");
    return j.at(key);
}

std::vector<double> doubles(const json& j, const char* key) {
    const Eigen::VectorXd v = io::vector_from_json(need(j, key), key);
    return {v.data(), v.data() + v.size()};
}

json maybe(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json vector_or_null(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(maybe(v(i)));
    return a;
}

DirichletForm make_form(const json& task, const SpacePtr& space) {
    const auto kind = param<std::string>(task, "form", "calibrated");
    if (kind == "calibrated") return DirichletForm::calibrated(space);
    if (kind == "unit") return DirichletForm::unit(space);
    throw ConfigError("form: expected calibrated or unit, got " + kind);
}

WeightTransfer parse_rule(const json& j) {
    const auto r = param<std::string>(j, "rule", "min");
    if (r == "min") return WeightTransfer::min;
    if (r == "log_mean") return WeightTransfer::log_mean;
    throw ConfigError("rule: expected min or log_mean");
}

SemigroupSpec parse_semigroup(const json& j) {
    SemigroupSpec spec;
    const auto m = param<std::string>(j, "method", "auto");
    if (m == "auto") spec.method = SemigroupMethod::automatic;
    else if (m == "expm") spec.method = SemigroupMethod::expm;
    else if (m == "implicit_euler") spec.method = SemigroupMethod::implicit_euler;
    else throw ConfigError("method: expected auto, expm or implicit_euler");
    spec.dt = param<double>(j, "dt", spec.dt);
    return spec;
}

// ---- tasks ----

struct Output {
    json result = json::object();
    json methods = json::object();
    bool assertion_failed = false;
    std::vector<Scalar> scalars;
    std::vector<double> times;
    std::vector<ProbMeasure> measures;
};

void scalar_series(Output& o, const std::string& name, const std::vector<double>& idx, const std::vector<double>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) o.scalars.push_back({name, i < idx.size() ? idx[i] : double(i), v[i]});
}

Output task_validate(const json&, const Session& s) {
    Output o;
    const ValidationReport rep = validate_space(*s.space());
    json v = json::array();
    for (const auto& x : rep.violations)
        v.push_back({{"check", x.check}, {"witness", x.witness}, {"magnitude", x.magnitude}, {"count", x.count}});
    o.result = {{"valid", rep.passed}, {"violations", v}, {"size", s.space()->size()},
                {"has_graph", s.space()->has_graph()}};
    o.assertion_failed = !rep.passed;
    o.scalars.push_back({"violations", 0, static_cast<double>(rep.violations.size())});
    return o;
}

Output task_ot(const json& t, const Session& s) {
    Output o;
    const ProbMeasure mu = s.measure(need(t, "mu"));
    const ProbMeasure nu = s.measure(need(t, "nu"));
    std::optional<std::size_t> gauge;
    if (t.contains("gauge")) gauge = io::point_from_json(*s.space(), t.at("gauge"), "gauge");
    const W2Result r = w2(mu, nu);
    const KantorovichPair pair = kantorovich_potentials(mu, nu, gauge);
    json plan = json::array();
    for (Eigen::Index i = 0; i < r.plan.coupling.rows(); ++i)
        for (Eigen::Index j = 0; j < r.plan.coupling.cols(); ++j)
            if (r.plan.coupling(i, j) > 0.0) plan.push_back(json::array({i, j, r.plan.coupling(i, j)}));
    const double rel_gap = pair.gap / std::max(1.0, pair.primal);
    o.result = {{"w2", r.value},
                {"w2_squared", r.plan.cost},
                {"plan", plan},
                {"phi", vector_or_null(pair.phi)},
                {"psi", vector_or_null(pair.psi)},
                {"gap", rel_gap},
                {"nonunique", pair.nonunique},
                {"marginal_residual", marginal_residual(r.plan, mu, nu)},
                {"dual_feasibility", dual_feasibility_violation(*s.space(), pair)}};
    o.methods["ot"] = "transport simplex";
    o.assertion_failed = rel_gap > s.tolerances().gap;
    o.scalars.push_back({"w2", 0, r.value});
    o.scalars.push_back({"gap", 0, rel_gap});
    return o;
}

json certificate_json(const std::optional<EntropyCertificate>& c) {
    if (!c) return nullptr;
    return {{"entropy", c->entropy}, {"dual_bound", c->dual_bound}, {"gap", c->gap},
            {"w2_from_start", c->w2_from_start}, {"w2_to_end", c->w2_to_end}, {"violation", c->violation},
            {"lambda0", c->lambda0}, {"lambda1", c->lambda1}, {"iterations", c->iterations}, {"method", c->method}};
}

Output task_geodesic(const json& t, const Session& s) {
    Output o;
    const ProbMeasure mu0 = s.measure(need(t, "mu0"));
    const ProbMeasure mu1 = s.measure(need(t, "mu1"));
    GeodesicOptions opt;
    opt.K = param<double>(t, "K", 0.0);
    opt.tol = s.tolerances().geodesic;
    opt.threads = s.threads();
    if (t.contains("epsilon") && !(t.at("epsilon").is_string() && t.at("epsilon").get<std::string>() == "auto"))
        opt.epsilon = param<double>(t, "epsilon", 0.0);
    const auto depth = param<std::size_t>(t, "depth", 4);
    const GeodesicTrace tr = build_good_geodesic(mu0, mu1, depth, opt);
    const CdReport cd = cd_convexity_check(tr, opt.K);
    json ms = json::array(), certs = json::array();
    for (const auto& m : tr.measures) ms.push_back(io::to_json(m.weights()));
    std::string method = "endpoints";
    for (const auto& c : tr.certificates) {
        certs.push_back(certificate_json(c));
        if (c) method = c->method;
    }
    o.result = {{"times", tr.times},
                {"measures", ms},
                {"entropies", tr.entropies},
                {"w2_from_start", tr.w2_from_start},
                {"sup_density", tr.sup_density},
                {"certificates", certs},
                {"epsilon_used", tr.epsilon_used},
                {"W", tr.W},
                {"t0", tr.t0 ? json(*tr.t0) : json(nullptr)},
                {"density_bound", tr.density_bound ? json(*tr.density_bound) : json(nullptr)},
                {"cd_worst", cd.worst},
                {"cd_local", cd.local.size()},
                {"cd_global", cd.global.size()}};
    o.methods["intermediate"] = method;
    o.methods["ot"] = "transport simplex";
    if (t.contains("assert_cd")) o.assertion_failed = cd.worst > param<double>(t, "assert_cd", 0.0);
    scalar_series(o, "entropy", tr.times, tr.entropies);
    scalar_series(o, "w2_from_start", tr.times, tr.w2_from_start);
    o.scalars.push_back({"cd_worst", 0, cd.worst});
    o.times = tr.times;
    o.measures = tr.measures;
    return o;
}

Output task_form(const json& t, const Session& s) {
    Output o;
    const DirichletForm form = make_form(t, s.space());
    const auto op = param<std::string>(t, "op", "energy");
    auto vec = [&](const char* key) {
        const Eigen::VectorXd v = io::vector_from_json(need(t, key), key);
        if (static_cast<std::size_t>(v.size()) != form.size()) throw ConfigError(std::string(key) + ": wrong length");
        return v;
    };
    if (op == "energy") {
        const Eigen::VectorXd f = vec("f");
        const Eigen::VectorXd g = t.contains("g") ? vec("g") : f;
        o.result = {{"energy", form.energy(f, g)}, {"cheeger", form.cheeger(f)}};
        o.scalars.push_back({"energy", 0, form.energy(f, g)});
    } else if (op == "gamma") {
        const Eigen::VectorXd f = vec("f");
        const Eigen::VectorXd g = t.contains("g") ? vec("g") : f;
        o.result = {{"gamma", io::to_json(form.gamma(f, g))}};
    } else if (op == "laplacian") {
        o.result = {{"laplacian", io::to_json(form.laplacian(vec("f")))}};
    } else if (op == "mod2") {
        std::vector<VertexPath> paths;
        for (const auto& p : need(t, "paths")) {
            VertexPath vp;
            for (const auto& v : p) vp.vertices.push_back(io::point_from_json(*s.space(), v, "paths"));
            paths.push_back(std::move(vp));
        }
        const Mod2Result r = mod2(*s.space(), paths);
        o.result = {{"mod2", r.infinite ? json(nullptr) : json(r.value)}, {"infinite", r.infinite},
                    {"g", io::to_json(r.g)}, {"kkt_residual", r.kkt_residual}};
        o.methods["mod2"] = "interior point";
        if (!r.infinite) o.scalars.push_back({"mod2", 0, r.value});
    } else if (op == "intrinsic") {
        const IntrinsicMetric im = intrinsic_metric(form);
        json rows = json::array();
        double worst = 0.0;
        const auto n = im.distance.rows();
        for (Eigen::Index i = 0; i < n; ++i) {
            rows.push_back(vector_or_null(im.distance.row(i).transpose()));
            for (Eigen::Index j = 0; j < n; ++j) {
                const double d = s.space()->distance(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
                if (std::isfinite(im.distance(i, j))) worst = std::max(worst, std::abs(im.distance(i, j) - d) / (1.0 + d));
            }
        }
        o.result = {{"distance", rows}, {"max_relative_gap", worst}, {"max_constraint", im.max_constraint}};
        o.methods["intrinsic"] = "linear program per pair";
        o.scalars.push_back({"intrinsic_gap", 0, worst});
    } else {
        throw ConfigError("op: expected energy, gamma, laplacian, mod2 or intrinsic");
    }
    o.result["op"] = op;
    o.methods["form"] = param<std::string>(t, "form", "calibrated");
    return o;
}

void add_check(Output& o, json& checks, InequalityReport r, const json& spec) {
    if (spec.contains("assert")) {
        assert_tolerance(r, param<double>(spec, "assert", 0.0));
        if (r.status == CheckStatus::fail) o.assertion_failed = true;
    }
    o.scalars.push_back({r.name + "_worst", 0, r.worst});
    checks.push_back(report_to_json(r));
}

Output task_flow(const json& t, const Session& s) {
    Output o;
    const DirichletForm form = make_form(t, s.space());
    const ProbMeasure mu0 = s.measure(need(t, "f0"));
    const auto flavor = param<std::string>(t, "flavor", "semigroup");
    FlowTrace tr;
    if (flavor == "semigroup") {
        std::vector<double> times = doubles(t, "times");
        if (t.contains("centred_dt")) times = centred_times(times, param<double>(t, "centred_dt", 1e-3));
        tr = semigroup_flow(form, mu0, times, parse_semigroup(t));
    } else if (flavor == "jko") {
        need(t, "tau");
        tr = jko_flow(form, mu0, param<double>(t, "tau", 0.0), param<std::size_t>(t, "steps", 10),
                      s.tolerances().inner);
    } else {
        throw ConfigError("flavor: expected semigroup or jko");
    }
    json ms = json::array();
    for (const auto& m : tr.measures) ms.push_back(io::to_json(m.weights()));
    o.result = {{"flavor", to_string(tr.flavor)}, {"times", tr.times}, {"measures", ms},
                {"entropy", tr.entropy}, {"fisher", tr.fisher}, {"w2_speed", tr.w2_speed},
                {"gaps", tr.gaps}, {"clipped", tr.clipped}};
    o.methods["flow"] = tr.method;

    json checks = json::array();
    if (t.contains("checks")) {
        const json& c = t.at("checks");
        if (c.contains("evi")) {
            const json& e = c.at("evi");
            add_check(o, checks, evi_check(tr, s.measure(need(e, "sigma")), param<double>(e, "K", 0.0),
                                           param<double>(e, "dt", 1e-3)), e);
        }
        if (c.contains("ede")) add_check(o, checks, ede_check(tr), c.at("ede"));
        if (c.contains("dw2")) {
            const json& e = c.at("dw2");
            Dw2Report r = dw2_derivative_check(form, tr, s.measure(need(e, "sigma")), param<double>(e, "dt", 1e-3),
                                               parse_rule(e));
            add_check(o, checks, std::move(r.identity), e);
            add_check(o, checks, std::move(r.envelope), json::object());
        }
    }
    o.result["checks"] = checks;
    scalar_series(o, "entropy", tr.times, tr.entropy);
    scalar_series(o, "fisher", tr.times, tr.fisher);
    o.times = tr.times;
    o.measures = tr.measures;
    return o;
}

Output task_verify(const json& t, const Session& s) {
    Output o;
    VerifySuite suite;
    suite.K = param<double>(t, "K", 0.0);
    if (t.contains("t_grid")) suite.t_grid = doubles(t, "t_grid");
    suite.dt = param<double>(t, "dt", suite.dt);
    suite.seed = param<std::uint64_t>(t, "seed", s.seed());
    suite.samples = param<std::size_t>(t, "samples", suite.samples);
    suite.tol_quadratic = s.tolerances().quadratic;
    suite.tol_additivity = s.tolerances().additivity;
    suite.tol_evi = s.tolerances().evi;
    suite.assert_evi = param<std::string>(t, "mode", "assert") == "assert";
    suite.threads = s.threads();
    const VerifyReport r = rcd_verify(make_form(t, s.space()), suite);
    json checks = json::array();
    for (const auto& c : r.checks) {
        checks.push_back(report_to_json(c));
        o.scalars.push_back({c.name + "_worst", 0, c.worst});
    }
    o.result = {{"checks", checks}, {"verdict", r.verdict}};
    o.methods["flow"] = method_tag(make_form(t, s.space()), {});
    o.methods["ot"] = "transport simplex";
    o.assertion_failed = !r.verdict;
    return o;
}

std::string describe(const std::exception_ptr& e) {
    try {
        std::rethrow_exception(e);
    } catch (const std::exception& x) {
        return x.what();
    } catch (...) {
        return "unknown error";
    }
}

}  // namespace

void Tolerances::overlay(const json& j) {
    if (j.is_null()) return;
    if (!j.is_object()) throw ConfigError("tolerances: expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number()) throw ConfigError("tolerances." + it.key() + ": expected a number");
        const double v = it.value().get<double>();
        if (!(v > 0.0)) throw ConfigError("tolerances." + it.key() + ": must be positive");
        if (it.key() == "gap") gap = v;
        else if (it.key() == "inner") inner = v;
        else if (it.key() == "geodesic") geodesic = v;
        else if (it.key() == "quadratic") quadratic = v;
        else if (it.key() == "additivity") additivity = v;
        else if (it.key() == "evi") evi = v;
        else throw ConfigError("tolerances: unknown key " + it.key());
    }
}

json Tolerances::to_json() const {
    return {{"gap", gap}, {"inner", inner}, {"geodesic", geodesic},
            {"quadratic", quadratic}, {"additivity", additivity}, {"evi", evi}};
}

Session::Session(SpacePtr space, std::uint64_t seed, Tolerances tol, unsigned threads, fs::path base_dir,
                 std::string config_hash)
    : space_(std::move(space)), seed_(seed), tol_(tol), threads_(std::max(1u, threads)),
      base_dir_(std::move(base_dir)), hash_(std::move(config_hash)) {}

ProbMeasure Session::measure(const json& spec) const {
    if (spec.is_object() && spec.contains("from_task")) {
        const auto id = param<std::string>(spec, "from_task", "");
        const auto it = produced_.find(id);
        if (it == produced_.end()) throw ConfigError("from_task: no earlier task " + id + " produced measures");
        const auto& [times, ms] = it->second;
        if (spec.contains("time")) {
            const double tt = param<double>(spec, "time", 0.0);
            for (std::size_t i = 0; i < times.size(); ++i)
                if (std::abs(times[i] - tt) <= 1e-12 * std::max(1.0, tt)) return ms[i];
            throw ConfigError("from_task: task " + id + " has no measure at that time");
        }
        const auto k = param<long long>(spec, "index", -1);
        const long long n = static_cast<long long>(ms.size());
        const long long i = k < 0 ? n + k : k;
        if (i < 0 || i >= n) throw ConfigError("from_task: index out of range");
        return ms[static_cast<std::size_t>(i)];
    }
    return io::measure_from_json(spec, space_, seed_, base_dir_);
}

void Session::publish(const std::string& task, const std::vector<double>& times, std::vector<ProbMeasure> measures) {
    if (!measures.empty()) produced_.insert_or_assign(task, std::make_pair(times, std::move(measures)));
}

json report_to_json(const InequalityReport& r) {
    json res = json::array();
    for (double v : r.residuals) res.push_back(maybe(v));
    return {{"name", r.name},
            {"worst", maybe(r.worst)},
            {"grid", r.grid},
            {"residuals", res},
            {"trend", r.trend ? json(*r.trend) : json(nullptr)},
            {"status", to_string(r.status)},
            {"tolerance", r.tolerance},
            {"notes", r.notes}};
}

TaskArtifact run_task(const json& task, const Session& session) {
    TaskArtifact a;
    a.id = param<std::string>(task, "id", "task");
    a.kind = param<std::string>(task, "kind", "");
    Output o;
    try {
        try {
            if (a.kind == "validate") o = task_validate(task, session);
            else if (a.kind == "ot") o = task_ot(task, session);
            else if (a.kind == "geodesic") o = task_geodesic(task, session);
            else if (a.kind == "form") o = task_form(task, session);
            else if (a.kind == "flow") o = task_flow(task, session);
            else if (a.kind == "verify") o = task_verify(task, session);
            else throw ConfigError("kind: expected validate, ot, geodesic, form, flow or verify");
        } catch (const json::exception& e) {
            throw ConfigError(e.what());
        }
    } catch (...) {
        const auto e = std::current_exception();
        throw TaskFailure(a.id, e, describe(e));
    }
    a.document = {{"schema", io::schema_version()},
                  {"config_hash", session.config_hash()},
                  {"task", {{"id", a.id}, {"kind", a.kind}}},
                  {"seed", session.seed()},
                  {"methods", o.methods},
                  {"tolerances", session.tolerances().to_json()},
                  {"assertion_failed", o.assertion_failed},
                  {"result", o.result}};
    a.assertion_failed = o.assertion_failed;
    a.scalars = std::move(o.scalars);
    a.measures = std::move(o.measures);
    a.document["task"]["times"] = o.times;
    return a;
}

namespace {

bool mentions_random(const json& j) {
    if (j.is_object()) {
        if (j.contains("random") && !(j.at("random").is_object() && j.at("random").contains("seed"))) return true;
        if (j.contains("kind") && j.at("kind") == "verify" && !j.contains("seed")) return true;
        for (const auto& [k, v] : j.items())
            if (mentions_random(v)) return true;
    } else if (j.is_array()) {
        for (const auto& v : j)
            if (mentions_random(v)) return true;
    }
    return false;
}

std::string csv_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

RunResult run_config(const json& config, const fs::path& base_dir, const fs::path& out_dir, const RunOptions& options) {
    if (!config.is_object()) throw ConfigError("config: expected an object");
    if (config.contains("schema") && config.at("schema") != io::schema_version())
        throw ConfigError("config: schema " + config.at("schema").dump() + " is not " + io::schema_version());
    const json& tasks = need(config, "tasks");
    if (!tasks.is_array() || tasks.empty()) throw ConfigError("tasks: expected a nonempty array");

    std::optional<std::uint64_t> seed = options.seed;
    if (!seed && config.contains("seed")) seed = param<std::uint64_t>(config, "seed", 0);
    if (!seed && mentions_random(tasks)) throw ConfigError("seed: required when a task uses randomness");

    Tolerances tol;
    if (config.contains("tolerances")) tol.overlay(config.at("tolerances"));
    tol.overlay(options.tolerance_overrides);

    // the hash covers the effective inputs
    json effective = config;
    effective["seed"] = seed.value_or(0);
    effective["tolerances"] = tol.to_json();
    const std::string hash = io::config_hash(effective);

    auto space = std::make_shared<const FiniteMMSpace>(io::space_from_json(need(config, "space"), base_dir, false));
    bool needs_valid = false;
    std::vector<std::vector<json>> groups;
    std::set<std::string> ids;
    std::size_t counter = 0;
    auto add = [&](json t, std::vector<json>& group) {
        if (!t.is_object()) throw ConfigError("tasks: every task is an object");
        ++counter;
        if (!t.contains("id")) t["id"] = "task" + std::to_string(counter);
        const auto id = param<std::string>(t, "id", "");
        if (id.empty() || id.find_first_of("/\\") != std::string::npos || id == "run" || id == "diagnostics")
            throw ConfigError("tasks: bad id '" + id + "'");
        if (!ids.insert(id).second) throw ConfigError("tasks: duplicate id " + id);
        if (param<std::string>(t, "kind", "") != "validate") needs_valid = true;
        group.push_back(std::move(t));
    };
    for (const auto& t : tasks) {
        std::vector<json> group;
        if (t.is_object() && t.contains("parallel")) {
            for (const auto& u : t.at("parallel")) add(u, group);
        } else {
            add(t, group);
        }
        groups.push_back(std::move(group));
    }
    if (needs_valid) {
        const ValidationReport rep = validate_space(*space);
        if (!rep.passed) {
            std::string msg = "space: invalid:";
            for (const auto& v : rep.violations) msg += " " + v.check;
            throw ConfigError(msg);
        }
    }

    Session session(space, seed.value_or(0), tol, options.threads, base_dir, hash);
    RunResult result;
    std::string csv = "task,quantity,index,value\n";
    json summary_tasks = json::array();
    for (const auto& group : groups) {
        std::vector<std::optional<TaskArtifact>> done(group.size());
        detail::parallel_for(group.size(), group.size() > 1 ? options.threads : 1,
                             [&](std::size_t i) { done[i] = run_task(group[i], session); });
        for (auto& a : done) {
            const fs::path path = out_dir / (a->id + ".json");
            io::write_atomic(path, io::dump(a->document));
            result.artifacts.push_back(path);
            for (const auto& sc : a->scalars)
                csv += a->id + "," + sc.quantity + "," + csv_number(sc.index) + "," + csv_number(sc.value) + "\n";
            summary_tasks.push_back({{"id", a->id}, {"kind", a->kind}, {"artifact", a->id + ".json"},
                                     {"assertion_failed", a->assertion_failed}});
            if (a->assertion_failed && !result.assertion_failed) {
                result.assertion_failed = true;
                result.failed_task = a->id;
                result.report_path = path;
            }
            session.publish(a->id, a->document["task"]["times"].get<std::vector<double>>(), std::move(a->measures));
        }
    }
    io::write_atomic(out_dir / "diagnostics.csv", csv);
    result.summary = {{"schema", io::schema_version()}, {"config_hash", hash}, {"seed", session.seed()},
                      {"tolerances", tol.to_json()}, {"tasks", summary_tasks}, {"verdict", !result.assertion_failed}};
    io::write_atomic(out_dir / "run.json", io::dump(result.summary));
    return result;
}

}  // namespace rcdlab
