#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rcdlab {

/// Absolute tolerance for every metric consistency check.
inline constexpr double kMetricTolerance = 1e-12;

struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;
    double weight = 0.0;  // edge length (distance units)
};

/// How the reference measure of a generated space was profiled.
struct MeasureProfile {
    enum class Kind { uniform, gaussian, custom };
    Kind kind = Kind::uniform;
    double c = 0.0;                       // gaussian strength, m ∝ exp(-c d(x, x0)^2)
    std::optional<std::size_t> center;    // x0 of the gaussian profile
};

/// Finite metric measure space: dense distance matrix, strictly positive
/// reference measure and an optional graph carrier for Dirichlet forms.
///
/// Instances are immutable. The constructor only checks dimensions; the
/// metric/measure invariants are checked by validate_space().
class FiniteMMSpace {
public:
    FiniteMMSpace(std::vector<std::string> points, Eigen::MatrixXd metric,
                  Eigen::VectorXd measure, std::optional<std::vector<Edge>> graph = std::nullopt,
                  std::optional<std::size_t> base_point = std::nullopt,
                  MeasureProfile profile = {}, bool graph_induces_metric = true);

    std::size_t size() const noexcept { return static_cast<std::size_t>(measure_.size()); }
    const std::vector<std::string>& points() const noexcept { return points_; }
    const Eigen::MatrixXd& metric() const noexcept { return metric_; }
    double distance(std::size_t i, std::size_t j) const { return metric_(i, j); }
    const Eigen::VectorXd& measure() const noexcept { return measure_; }
    double total_mass() const noexcept { return measure_.sum(); }
    const std::optional<std::vector<Edge>>& graph() const noexcept { return graph_; }
    bool has_graph() const noexcept { return graph_.has_value(); }
    std::optional<std::size_t> base_point() const noexcept { return base_point_; }
    const MeasureProfile& profile() const noexcept { return profile_; }

    /// False for carriers (e.g. product graphs) whose path metric is not the
    /// stored metric; validation then only checks edge lengths.
    bool graph_induces_metric() const noexcept { return graph_induces_metric_; }

    /// Neighbour lists of the graph carrier (empty lists when absent).
    const std::vector<std::vector<std::size_t>>& neighbours() const noexcept { return neighbours_; }

    std::optional<std::size_t> index_of(const std::string& id) const;

private:
    std::vector<std::string> points_;
    Eigen::MatrixXd metric_;
    Eigen::VectorXd measure_;
    std::optional<std::vector<Edge>> graph_;
    std::optional<std::size_t> base_point_;
    MeasureProfile profile_;
    bool graph_induces_metric_ = true;
    std::vector<std::vector<std::size_t>> neighbours_;
};

struct Violation {
    std::string check;
    std::vector<std::size_t> witness;
    double magnitude = 0.0;
    std::size_t count = 1;  // how many instances of this check failed
};

struct ValidationReport {
    bool passed = true;
    std::vector<Violation> violations;
};

ValidationReport validate_space(const FiniteMMSpace& space);

enum class ModelKind { segment, cycle, grid, two_point, random_metric };

ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

struct ModelParams {
    MeasureProfile::Kind profile = MeasureProfile::Kind::uniform;
    double c = 0.0;                     // gaussian strength
    std::vector<double> custom;         // custom measure (normalised to mass 1)
    std::size_t cols = 0;               // grid: columns (defaults to n)
    double distance = 1.0;              // two_point: separation
    std::uint64_t seed = 0;             // random_metric: generator seed
    double extra_edge_probability = 0.15;
};

FiniteMMSpace make_model_space(ModelKind kind, std::size_t n, const ModelParams& params = {});

/// Cartesian product with the l2 product metric and product measure.
FiniteMMSpace product_space(const FiniteMMSpace& a, const FiniteMMSpace& b);

/// z = sum_x exp(-c d(x, x0)^2) m(x).
double check_growth_condition(const FiniteMMSpace& space, double c, std::size_t x0);

/// All-pairs shortest path distances (Floyd-Warshall); +inf between components.
Eigen::MatrixXd shortest_path_metric(std::size_t n, const std::vector<Edge>& edges);

/// Shortest-path closure of a (possibly non-metric) dissimilarity matrix.
Eigen::MatrixXd shortest_path_closure(const Eigen::MatrixXd& dissimilarity);

}  // namespace rcdlab
