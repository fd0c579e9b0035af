#include "rcdlab/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <system_error>

namespace rcdlab::io {

namespace fs = std::filesystem;

std::string schema_version() { return "1"; }

json parse_json(std::string_view text, const std::string& origin) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string msg = e.what();
        // nlohmann prefixes "[json.exception.parse_error.101] parse error at line L, column C: "
        if (auto p = msg.find(": "); p != std::string::npos) msg = msg.substr(p + 2);
        throw ConfigError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg, line, col);
    }
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str(), path.string());
}

namespace {

void write_number(std::string& out, double v) {
    if (!std::isfinite(v)) {
        out += "null";
        return;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

void write_value(std::string& out, const json& j, int indent, int depth) {
    auto newline = [&](int d) {
        if (indent < 0) return;
        out += '\n';
        out.append(static_cast<std::size_t>(indent * d), ' ');
    };
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += '{';
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ',';
                first = false;
                newline(depth + 1);
                out += json(it.key()).dump();
                out += indent < 0 ? ":" : ": ";
                write_value(out, it.value(), indent, depth + 1);
            }
            newline(depth);
            out += '}';
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            // flat numeric arrays stay on one line
            const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
            out += '[';
            bool first = true;
            for (const auto& e : j) {
                if (!first) out += flat ? ", " : ",";
                first = false;
                if (!flat) newline(depth + 1);
                write_value(out, e, indent, depth + 1);
            }
            if (!flat) newline(depth);
            out += ']';
            return;
        }
        case json::value_t::number_float:
            write_number(out, j.get<double>());
            return;
        default:
            out += j.dump();
    }
}

}  // namespace

std::string dump(const json& j, int indent) {
    std::string out;
    write_value(out, j, indent, 0);
    if (indent >= 0) out += '\n';
    return out;
}

void write_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error("cannot rename into " + path.string() + ": " + ec.message());
    }
}

std::string config_hash(const json& j) {
    const std::string canon = dump(j, -1);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: expected a number");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing \"" + key + "\"");
    return j.at(key);
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

FiniteMMSpace model_from_json(const json& j, const std::string& where) {
    ModelKind kind;
    try {
        kind = parse_model_kind(require(j, "model", where).get<std::string>());
    } catch (const Error& e) {
        throw ConfigError(where + ".model: " + e.what());
    } catch (const json::exception&) {
        throw ConfigError(where + ".model: expected a string");
    }
    const auto n = get_or<std::size_t>(j, "n", 0, where);
    ModelParams p;
    const auto profile = get_or<std::string>(j, "profile", "uniform", where);
    if (profile == "uniform") {
        p.profile = MeasureProfile::Kind::uniform;
    } else if (profile == "gaussian") {
        p.profile = MeasureProfile::Kind::gaussian;
    } else if (profile == "custom") {
        p.profile = MeasureProfile::Kind::custom;
        const Eigen::VectorXd c = vector_from_json(require(j, "custom", where), where + ".custom");
        p.custom.assign(c.data(), c.data() + c.size());
    } else {
        throw ConfigError(where + ".profile: unknown profile " + profile);
    }
    p.c = get_or<double>(j, "c", 0.0, where);
    p.cols = get_or<std::size_t>(j, "cols", 0, where);
    p.distance = get_or<double>(j, "distance", 1.0, where);
    p.seed = get_or<std::uint64_t>(j, "seed", 0, where);
    p.extra_edge_probability = get_or<double>(j, "extra_edge_probability", 0.15, where);
    try {
        return make_model_space(kind, n, p);
    } catch (const Error& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

FiniteMMSpace explicit_from_json(const json& j, const std::string& where) {
    const json& pts = require(j, "points", where);
    if (!pts.is_array()) throw ConfigError(where + ".points: expected an array");
    std::vector<std::string> names;
    for (const auto& p : pts) names.push_back(p.is_string() ? p.get<std::string>() : p.dump());
    const json& met = require(j, "metric", where);
    if (!met.is_array() || met.size() != names.size())
        throw ConfigError(where + ".metric: expected " + std::to_string(names.size()) + " rows");
    const auto n = static_cast<Eigen::Index>(names.size());
    Eigen::MatrixXd d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd row =
            vector_from_json(met[static_cast<std::size_t>(i)], where + ".metric[" + std::to_string(i) + "]");
        if (row.size() != n) throw ConfigError(where + ".metric[" + std::to_string(i) + "]: wrong length");
        d.row(i) = row.transpose();
    }
    const Eigen::VectorXd m = vector_from_json(require(j, "measure", where), where + ".measure");
    if (m.size() != n) throw ConfigError(where + ".measure: wrong length");
    std::optional<std::vector<Edge>> edges;
    if (j.contains("edges")) {
        edges.emplace();
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 3) throw ConfigError(where + ".edges: expected [i, j, w] triples");
            edges->push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>(), e[2].get<double>()});
        }
    }
    std::optional<std::size_t> base;
    if (j.contains("base_point") && !j.at("base_point").is_null()) {
        const json& b = j.at("base_point");
        if (b.is_string()) {
            const auto it = std::find(names.begin(), names.end(), b.get<std::string>());
            if (it == names.end()) throw ConfigError(where + ".base_point: unknown point");
            base = static_cast<std::size_t>(it - names.begin());
        } else {
            base = b.get<std::size_t>();
        }
    }
    try {
        return FiniteMMSpace(std::move(names), std::move(d), m, std::move(edges), base);
    } catch (const Error& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const std::string& file) {
    fs::path p(file);
    return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

FiniteMMSpace space_from_json(const json& j, const fs::path& base_dir, bool validate) {
    const std::string where = "space";
    if (j.is_object() && j.contains("file")) {
        const fs::path p = resolve(base_dir, j.at("file").get<std::string>());
        return space_from_json(read_json_file(p), p.parent_path(), validate);
    }
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    FiniteMMSpace s = j.contains("model") ? model_from_json(j, where) : explicit_from_json(j, where);
    if (!validate) return s;
    const ValidationReport rep = validate_space(s);
    if (!rep.passed) {
        std::string msg = where + ": invalid space:";
        for (const auto& v : rep.violations) msg += " " + v.check;
        throw ConfigError(msg);
    }
    return s;
}

json space_to_json(const FiniteMMSpace& space) {
    json j;
    j["points"] = space.points();
    json met = json::array();
    for (Eigen::Index i = 0; i < space.metric().rows(); ++i) met.push_back(to_json(space.metric().row(i).transpose()));
    j["metric"] = met;
    j["measure"] = to_json(space.measure());
    if (space.graph()) {
        json e = json::array();
        for (const auto& ed : *space.graph()) e.push_back(json::array({ed.a, ed.b, ed.weight}));
        j["edges"] = e;
    }
    j["base_point"] = space.base_point() ? json(*space.base_point()) : json(nullptr);
    return j;
}

std::size_t point_from_json(const FiniteMMSpace& space, const json& j, const std::string& where) {
    if (j.is_string()) {
        if (auto i = space.index_of(j.get<std::string>())) return *i;
        throw ConfigError(where + ": unknown point " + j.get<std::string>());
    }
    if (!j.is_number_integer() || j.get<long long>() < 0 || static_cast<std::size_t>(j.get<long long>()) >= space.size())
        throw ConfigError(where + ": point index out of range");
    return j.get<std::size_t>();
}

ProbMeasure measure_from_json(const json& j, const SpacePtr& space, std::uint64_t seed, const fs::path& base_dir) {
    const std::string where = "measure";
    const FiniteMMSpace& s = *space;
    const auto n = static_cast<Eigen::Index>(s.size());
    auto from_weights = [&](Eigen::VectorXd w, const std::string& w_where) {
        if (w.size() != n) throw ConfigError(w_where + ": expected " + std::to_string(n) + " entries");
        if ((w.array() < 0.0).any() || !(w.sum() > 0.0))
            throw ConfigError(w_where + ": needs nonnegative entries of positive total");
        return ProbMeasure::normalized(space, std::move(w));
    };
    auto from_density = [&](const Eigen::VectorXd& f, const std::string& f_where) {
        if (f.size() != n) throw ConfigError(f_where + ": expected " + std::to_string(n) + " entries");
        return from_weights(f.cwiseProduct(s.measure()), f_where);
    };
    if (j.is_array()) return from_weights(vector_from_json(j, where), where);
    if (!j.is_object() || j.empty()) throw ConfigError(where + ": expected an array or an object");
    if (j.contains("file")) {
        const fs::path p = resolve(base_dir, j.at("file").get<std::string>());
        return measure_from_json(read_json_file(p), space, seed, p.parent_path());
    }
    if (j.contains("weights")) return from_weights(vector_from_json(j.at("weights"), "weights"), "weights");
    if (j.contains("density")) return from_density(vector_from_json(j.at("density"), "density"), "density");
    if (j.contains("dirac")) return ProbMeasure::dirac(space, point_from_json(s, j.at("dirac"), "dirac"));
    if (j.contains("reference")) return ProbMeasure::reference(space);

    auto centre = [&](const json& p, const std::string& w) {
        return p.contains("center") ? point_from_json(s, p.at("center"), w + ".center") : s.base_point().value_or(0);
    };
    Eigen::VectorXd f(n);
    if (j.contains("cosine")) {
        // 1 + a cos(2 pi d(x, x0) / period)
        const json& p = j.at("cosine");
        const std::size_t x0 = centre(p, "cosine");
        const double a = get_or<double>(p, "amplitude", 0.5, "cosine");
        const double period = get_or<double>(p, "period", 1.0, "cosine");
        if (std::abs(a) >= 1.0 || !(period > 0.0)) throw ConfigError("cosine: needs |amplitude| < 1 and period > 0");
        for (Eigen::Index i = 0; i < n; ++i)
            f(i) = 1.0 + a * std::cos(2.0 * std::numbers::pi * s.distance(static_cast<std::size_t>(i), x0) / period);
        return from_density(f, "cosine");
    }
    if (j.contains("bump")) {
        const json& p = j.at("bump");
        const std::size_t x0 = centre(p, "bump");
        const double r = get_or<double>(p, "radius", 0.25, "bump");
        if (!(r > 0.0)) throw ConfigError("bump: radius must be positive");
        for (Eigen::Index i = 0; i < n; ++i)
            f(i) = std::max(0.0, 1.0 - s.distance(static_cast<std::size_t>(i), x0) / r);
        return from_density(f, "bump");
    }
    if (j.contains("gaussian")) {
        const json& p = j.at("gaussian");
        const std::size_t x0 = centre(p, "gaussian");
        const double c = get_or<double>(p, "c", 1.0, "gaussian");
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = s.distance(static_cast<std::size_t>(i), x0);
            f(i) = std::exp(-c * d * d);
        }
        return from_density(f, "gaussian");
    }
    if (j.contains("random")) {
        const json& p = j.at("random");
        std::mt19937_64 rng(get_or<std::uint64_t>(p, "seed", seed, "random"));
        std::uniform_real_distribution<double> u(get_or<double>(p, "low", 0.2, "random"),
                                                 get_or<double>(p, "high", 1.8, "random"));
        for (Eigen::Index i = 0; i < n; ++i) f(i) = u(rng);
        return from_density(f, "random");
    }
    throw ConfigError(where + ": unknown measure spec " + j.dump(-1).substr(0, 60));
}

json measure_to_json(const ProbMeasure& mu) { return json{{"weights", to_json(mu.weights())}}; }

}  // namespace rcdlab::io
