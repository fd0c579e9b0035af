#include "rcdlab/mmspace.hpp"

#include "rcdlab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <utility>

namespace rcdlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::string> numbered_ids(std::size_t n) {
    std::vector<std::string> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(i);
    return ids;
}

// Records the worst instance of a named check.
class ViolationLog {
public:
    void add(const std::string& check, std::vector<std::size_t> witness, double magnitude) {
        auto it = index_.find(check);
        if (it == index_.end()) {
            index_.emplace(check, entries_.size());
            entries_.push_back({check, std::move(witness), magnitude, 1});
            return;
        }
        Violation& v = entries_[it->second];
        ++v.count;
        if (magnitude > v.magnitude) {
            v.magnitude = magnitude;
            v.witness = std::move(witness);
        }
    }
    std::vector<Violation> take() { return std::move(entries_); }

private:
    std::map<std::string, std::size_t> index_;
    std::vector<Violation> entries_;
};

Eigen::VectorXd profiled_measure(const FiniteMMSpace& shape, const ModelParams& params,
                                 std::size_t center) {
    const std::size_t n = shape.size();
    Eigen::VectorXd m(n);
    switch (params.profile) {
        case MeasureProfile::Kind::uniform:
            m.setConstant(1.0 / static_cast<double>(n));
            break;
        case MeasureProfile::Kind::gaussian: {
            if (!(params.c > 0.0)) throw InvalidArgument("gaussian profile needs c > 0");
            for (std::size_t i = 0; i < n; ++i) {
                const double v = shape.distance(i, center);
                m(i) = std::exp(-params.c * v * v);
            }
            m /= m.sum();
            break;
        }
        case MeasureProfile::Kind::custom: {
            if (params.custom.size() != n)
                throw InvalidArgument("custom measure has " + std::to_string(params.custom.size()) +
                                      " entries, expected " + std::to_string(n));
            for (std::size_t i = 0; i < n; ++i) m(i) = params.custom[i];
            if ((m.array() <= 0.0).any()) throw InvalidArgument("custom measure must be positive");
            m /= m.sum();
            break;
        }
    }
    return m;
}

FiniteMMSpace from_graph(std::size_t n, std::vector<Edge> edges, std::size_t center,
                         const ModelParams& params) {
    Eigen::MatrixXd d = shortest_path_metric(n, edges);
    // Shape-only space used to evaluate the profile distances.
    FiniteMMSpace shape(numbered_ids(n), d, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n)));
    Eigen::VectorXd m = profiled_measure(shape, params, center);
    MeasureProfile profile;
    profile.kind = params.profile;
    profile.c = params.profile == MeasureProfile::Kind::gaussian ? params.c : 0.0;
    profile.center = center;
    return FiniteMMSpace(numbered_ids(n), std::move(d), std::move(m), std::move(edges), center,
                         profile);
}

}  // namespace

FiniteMMSpace::FiniteMMSpace(std::vector<std::string> points, Eigen::MatrixXd metric,
                             Eigen::VectorXd measure, std::optional<std::vector<Edge>> graph,
                             std::optional<std::size_t> base_point, MeasureProfile profile,
                             bool graph_induces_metric)
    : points_(std::move(points)),
      metric_(std::move(metric)),
      measure_(std::move(measure)),
      graph_(std::move(graph)),
      base_point_(base_point),
      profile_(profile),
      graph_induces_metric_(graph_induces_metric) {
    const auto n = static_cast<Eigen::Index>(points_.size());
    if (n == 0) throw StructuralError("space must contain at least one point");
    if (metric_.rows() != n || metric_.cols() != n)
        throw StructuralError("metric is " + std::to_string(metric_.rows()) + "x" +
                              std::to_string(metric_.cols()) + " but there are " +
                              std::to_string(n) + " points");
    if (measure_.size() != n)
        throw StructuralError("measure has " + std::to_string(measure_.size()) +
                              " entries but there are " + std::to_string(n) + " points");
    if (base_point_ && *base_point_ >= points_.size())
        throw StructuralError("base point index out of range");
    neighbours_.assign(points_.size(), {});
    if (graph_) {
        for (const Edge& e : *graph_) {
            if (e.a >= points_.size() || e.b >= points_.size())
                throw StructuralError("graph edge references a missing point");
            if (e.a == e.b) continue;
            neighbours_[e.a].push_back(e.b);
            neighbours_[e.b].push_back(e.a);
        }
        for (auto& nb : neighbours_) {
            std::sort(nb.begin(), nb.end());
            nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
        }
    }
}

std::optional<std::size_t> FiniteMMSpace::index_of(const std::string& id) const {
    auto it = std::find(points_.begin(), points_.end(), id);
    if (it == points_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - points_.begin());
}

ValidationReport validate_space(const FiniteMMSpace& space) {
    const std::size_t n = space.size();
    const Eigen::MatrixXd& d = space.metric();
    ViolationLog log;

    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(d(i, i)) || std::abs(d(i, i)) > kMetricTolerance)
            log.add("diagonal_zero", {i}, std::abs(d(i, i)));
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(d(i, j))) {
                log.add("finite", {i, j}, kInf);
                continue;
            }
            if (d(i, j) < 0.0) log.add("nonnegative", {i, j}, -d(i, j));
            if (i < j) {
                const double asym = std::abs(d(i, j) - d(j, i));
                if (asym > kMetricTolerance) log.add("symmetric", {i, j}, asym);
                if (d(i, j) <= kMetricTolerance) log.add("separation", {i, j}, d(i, j));
            }
        }
    }
    // Witness (a, b, c) means d(a, c) > d(a, b) + d(b, c).
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            if (b == a) continue;
            for (std::size_t c = 0; c < n; ++c) {
                if (c == a || c == b) continue;
                const double excess = d(a, c) - d(a, b) - d(b, c);
                if (excess > kMetricTolerance) log.add("triangle", {a, b, c}, excess);
            }
        }

    const Eigen::VectorXd& m = space.measure();
    for (std::size_t i = 0; i < n; ++i)
        if (!(m(i) > 0.0) || !std::isfinite(m(i)))
            log.add("measure_positive", {i}, std::isfinite(m(i)) ? -m(i) : kInf);

    if (space.has_graph()) {
        const auto& edges = *space.graph();
        for (std::size_t k = 0; k < edges.size(); ++k)
            if (!(edges[k].weight > 0.0) || !std::isfinite(edges[k].weight))
                log.add("edge_weight_positive", {edges[k].a, edges[k].b}, -edges[k].weight);
        if (space.graph_induces_metric()) {
            const Eigen::MatrixXd sp = shortest_path_metric(n, edges);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j) {
                    const double gap = std::isfinite(sp(i, j)) ? std::abs(sp(i, j) - d(i, j)) : kInf;
                    if (gap > kMetricTolerance) log.add("graph_metric", {i, j}, gap);
                }
        } else {
            for (const Edge& e : edges) {
                const double gap = std::abs(e.weight - d(e.a, e.b));
                if (gap > kMetricTolerance) log.add("edge_length", {e.a, e.b}, gap);
            }
        }
    }

    ValidationReport report;
    report.violations = log.take();
    report.passed = report.violations.empty();
    return report;
}

ModelKind parse_model_kind(const std::string& name) {
    if (name == "segment") return ModelKind::segment;
    if (name == "cycle") return ModelKind::cycle;
    if (name == "grid") return ModelKind::grid;
    if (name == "two_point") return ModelKind::two_point;
    if (name == "random_metric") return ModelKind::random_metric;
    throw InvalidArgument("unknown model space kind '" + name + "'");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::segment: return "segment";
        case ModelKind::cycle: return "cycle";
        case ModelKind::grid: return "grid";
        case ModelKind::two_point: return "two_point";
        case ModelKind::random_metric: return "random_metric";
    }
    return "unknown";
}

FiniteMMSpace make_model_space(ModelKind kind, std::size_t n, const ModelParams& params) {
    if (n == 0) throw InvalidArgument("model space needs n >= 1");
    if (params.profile == MeasureProfile::Kind::gaussian && !(params.c > 0.0))
        throw InvalidArgument("gaussian profile needs c > 0");
    std::vector<Edge> edges;
    switch (kind) {
        case ModelKind::segment: {
            const double h = n > 1 ? 1.0 / static_cast<double>(n - 1) : 1.0;
            for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, h});
            return from_graph(n, std::move(edges), (n - 1) / 2, params);
        }
        case ModelKind::cycle: {
            if (n < 3 && n != 1) throw InvalidArgument("cycle needs n >= 3");
            const double h = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; n > 1 && i < n; ++i) edges.push_back({i, (i + 1) % n, h});
            return from_graph(n, std::move(edges), 0, params);
        }
        case ModelKind::grid: {
            const std::size_t rows = n;
            const std::size_t cols = params.cols ? params.cols : n;
            const std::size_t span = std::max(rows, cols);
            const double h = span > 1 ? 1.0 / static_cast<double>(span - 1) : 1.0;
            auto id = [cols](std::size_t r, std::size_t c) { return r * cols + c; };
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    if (c + 1 < cols) edges.push_back({id(r, c), id(r, c + 1), h});
                    if (r + 1 < rows) edges.push_back({id(r, c), id(r + 1, c), h});
                }
            return from_graph(rows * cols, std::move(edges), id(rows / 2, cols / 2), params);
        }
        case ModelKind::two_point: {
            if (n != 2) throw InvalidArgument("two_point space has exactly 2 points");
            if (!(params.distance > 0.0)) throw InvalidArgument("two_point distance must be > 0");
            edges.push_back({0, 1, params.distance});
            return from_graph(2, std::move(edges), 0, params);
        }
        case ModelKind::random_metric: {
            std::mt19937_64 rng(params.seed);
            std::uniform_real_distribution<double> length(0.5, 1.5);
            std::uniform_real_distribution<double> coin(0.0, 1.0);
            // random spanning tree, then sparse extra edges
            for (std::size_t i = 1; i < n; ++i) {
                std::uniform_int_distribution<std::size_t> parent(0, i - 1);
                edges.push_back({parent(rng), i, length(rng)});
            }
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = i + 1; j < n; ++j)
                    if (coin(rng) < params.extra_edge_probability) edges.push_back({i, j, length(rng)});
            return from_graph(n, std::move(edges), 0, params);
        }
    }
    throw InvalidArgument("unknown model space kind");
}

FiniteMMSpace product_space(const FiniteMMSpace& a, const FiniteMMSpace& b) {
    const std::size_t na = a.size();
    const std::size_t nb = b.size();
    const std::size_t n = na * nb;
    auto id = [nb](std::size_t i, std::size_t j) { return i * nb + j; };
    std::vector<std::string> points(n);
    Eigen::MatrixXd d(n, n);
    Eigen::VectorXd m(n);
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j) {
            points[id(i, j)] = "(" + a.points()[i] + "," + b.points()[j] + ")";
            m(id(i, j)) = a.measure()(i) * b.measure()(j);
            for (std::size_t k = 0; k < na; ++k)
                for (std::size_t l = 0; l < nb; ++l) {
                    const double da = a.distance(i, k);
                    const double db = b.distance(j, l);
                    d(id(i, j), id(k, l)) = std::sqrt(da * da + db * db);
                }
        }
    std::optional<std::vector<Edge>> graph;
    if (a.has_graph() && b.has_graph()) {
        std::vector<Edge> edges;
        for (const Edge& e : *a.graph())
            for (std::size_t j = 0; j < nb; ++j) edges.push_back({id(e.a, j), id(e.b, j), e.weight});
        for (const Edge& e : *b.graph())
            for (std::size_t i = 0; i < na; ++i) edges.push_back({id(i, e.a), id(i, e.b), e.weight});
        graph = std::move(edges);
    }
    std::optional<std::size_t> base;
    if (a.base_point() && b.base_point()) base = id(*a.base_point(), *b.base_point());
    return FiniteMMSpace(std::move(points), std::move(d), std::move(m), std::move(graph), base,
                         MeasureProfile{MeasureProfile::Kind::custom, 0.0, std::nullopt},
                         /*graph_induces_metric=*/false);
}

double check_growth_condition(const FiniteMMSpace& space, double c, std::size_t x0) {
    if (!(c > 0.0)) throw InvalidArgument("growth condition needs c > 0");
    if (x0 >= space.size()) throw InvalidArgument("base point out of range");
    double z = 0.0;
    for (std::size_t x = 0; x < space.size(); ++x) {
        const double v = space.distance(x, x0);
        z += std::exp(-c * v * v) * space.measure()(x);
    }
    return z;
}

Eigen::MatrixXd shortest_path_metric(std::size_t n, const std::vector<Edge>& edges) {
    Eigen::MatrixXd d = Eigen::MatrixXd::Constant(n, n, kInf);
    for (std::size_t i = 0; i < n; ++i) d(i, i) = 0.0;
    for (const Edge& e : edges) {
        if (e.a >= n || e.b >= n) throw StructuralError("edge index out of range");
        if (e.a == e.b) continue;
        d(e.a, e.b) = std::min(d(e.a, e.b), e.weight);
        d(e.b, e.a) = d(e.a, e.b);
    }
    return shortest_path_closure(d);
}

Eigen::MatrixXd shortest_path_closure(const Eigen::MatrixXd& dissimilarity) {
    Eigen::MatrixXd d = dissimilarity;
    const Eigen::Index n = d.rows();
    for (Eigen::Index k = 0; k < n; ++k)
        for (Eigen::Index i = 0; i < n; ++i) {
            const double dik = d(i, k);
            if (!std::isfinite(dik)) continue;
            for (Eigen::Index j = 0; j < n; ++j) {
                const double via = dik + d(k, j);
                if (via < d(i, j)) d(i, j) = via;
            }
        }
    return d;
}

}  // namespace rcdlab
