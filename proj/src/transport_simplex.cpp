#include "rcdlab/error.hpp"
#include "rcdlab/ot.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace rcdlab {

namespace {

struct Cell {
    int row;
    int col;
};

class TreeBasis {
public:
    TreeBasis(int m, int n) : m_(m), n_(n), basic_(static_cast<std::size_t>(m) * n, false) {}

    int nodes() const { return m_ + n_; }
    std::vector<Cell>& cells() { return cells_; }
    const std::vector<Cell>& cells() const { return cells_; }
    bool is_basic(int i, int j) const { return basic_[static_cast<std::size_t>(i) * n_ + j]; }

    void add(Cell c) {
        cells_.push_back(c);
        basic_[static_cast<std::size_t>(c.row) * n_ + c.col] = true;
    }
    void replace(std::size_t slot, Cell c) {
        basic_[static_cast<std::size_t>(cells_[slot].row) * n_ + cells_[slot].col] = false;
        cells_[slot] = c;
        basic_[static_cast<std::size_t>(c.row) * n_ + c.col] = true;
    }

    // adjacency: node -> list of basis slots
    std::vector<std::vector<int>> adjacency() const {
        std::vector<std::vector<int>> adj(static_cast<std::size_t>(nodes()));
        for (std::size_t k = 0; k < cells_.size(); ++k) {
            adj[cells_[k].row].push_back(static_cast<int>(k));
            adj[m_ + cells_[k].col].push_back(static_cast<int>(k));
        }
        return adj;
    }

    int other(int slot, int node) const {
        const Cell& c = cells_[slot];
        return node == c.row ? m_ + c.col : c.row;
    }

private:
    int m_;
    int n_;
    std::vector<bool> basic_;
    std::vector<Cell> cells_;
};

// Least-cost start; closing exactly one line per chosen cell keeps a spanning tree.
TreeBasis initial_basis(const Eigen::MatrixXd& cost, Eigen::VectorXd a, Eigen::VectorXd b) {
    const int m = static_cast<int>(cost.rows());
    const int n = static_cast<int>(cost.cols());
    std::vector<int> order(static_cast<std::size_t>(m) * n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&cost, n](int x, int y) {
        return cost(x / n, x % n) < cost(y / n, y % n);
    });
    std::vector<bool> row_open(m, true);
    std::vector<bool> col_open(n, true);
    int open_rows = m;
    int open_cols = n;
    TreeBasis basis(m, n);
    for (int idx : order) {
        const int i = idx / n;
        const int j = idx % n;
        if (!row_open[i] || !col_open[j]) continue;
        const double x = std::min(a(i), b(j));
        a(i) -= x;
        b(j) -= x;
        basis.add({i, j});
        // roundoff in the marginals must not close every column while rows remain
        if (open_rows > 1 && (a(i) <= b(j) || open_cols == 1)) {
            row_open[i] = false;
            --open_rows;
        } else {
            col_open[j] = false;
            --open_cols;
        }
        if (static_cast<int>(basis.cells().size()) == m + n - 1) break;
    }
    return basis;
}

// Flows of the unique basic solution, by repeatedly peeling leaves of the tree.
Eigen::MatrixXd basic_flows(const TreeBasis& basis, const Eigen::VectorXd& a,
                            const Eigen::VectorXd& b, std::vector<double>& cell_flow) {
    const int m = static_cast<int>(a.size());
    const int n = static_cast<int>(b.size());
    std::vector<double> rest(static_cast<std::size_t>(m + n));
    for (int i = 0; i < m; ++i) rest[i] = a(i);
    for (int j = 0; j < n; ++j) rest[m + j] = b(j);
    const auto adj = basis.adjacency();
    std::vector<int> degree(static_cast<std::size_t>(m + n));
    for (int v = 0; v < m + n; ++v) degree[v] = static_cast<int>(adj[v].size());
    std::vector<bool> used(basis.cells().size(), false);
    std::deque<int> leaves;
    for (int v = 0; v < m + n; ++v)
        if (degree[v] == 1) leaves.push_back(v);
    cell_flow.assign(basis.cells().size(), 0.0);
    while (!leaves.empty()) {
        const int v = leaves.front();
        leaves.pop_front();
        if (degree[v] != 1) continue;
        int slot = -1;
        for (int s : adj[v])
            if (!used[s]) {
                slot = s;
                break;
            }
        if (slot < 0) continue;
        used[slot] = true;
        const int w = basis.other(slot, v);
        cell_flow[slot] = rest[v];
        rest[w] -= rest[v];
        rest[v] = 0.0;
        --degree[v];
        if (--degree[w] == 1) leaves.push_back(w);
    }
    Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(m, n);
    for (std::size_t k = 0; k < basis.cells().size(); ++k) {
        cell_flow[k] = std::max(cell_flow[k], 0.0);
        flow(basis.cells()[k].row, basis.cells()[k].col) = cell_flow[k];
    }
    return flow;
}

void basic_potentials(const TreeBasis& basis, const Eigen::MatrixXd& cost, Eigen::VectorXd& u,
                      Eigen::VectorXd& v) {
    const int m = static_cast<int>(cost.rows());
    const int n = static_cast<int>(cost.cols());
    const auto adj = basis.adjacency();
    std::vector<double> pot(static_cast<std::size_t>(m + n), 0.0);
    std::vector<bool> seen(static_cast<std::size_t>(m + n), false);
    std::deque<int> queue{0};
    seen[0] = true;
    while (!queue.empty()) {
        const int x = queue.front();
        queue.pop_front();
        for (int s : adj[x]) {
            const int y = basis.other(s, x);
            if (seen[y]) continue;
            seen[y] = true;
            const Cell& c = basis.cells()[s];
            pot[y] = cost(c.row, c.col) - pot[x];
            queue.push_back(y);
        }
    }
    u.resize(m);
    v.resize(n);
    for (int i = 0; i < m; ++i) u(i) = pot[i];
    for (int j = 0; j < n; ++j) v(j) = pot[m + j];
}

// Basis slots on the tree path from row node i to column node (m + j), in order.
std::vector<int> tree_path(const TreeBasis& basis, int from, int to) {
    const auto adj = basis.adjacency();
    std::vector<int> via(static_cast<std::size_t>(basis.nodes()), -1);
    std::vector<bool> seen(static_cast<std::size_t>(basis.nodes()), false);
    std::deque<int> queue{from};
    seen[from] = true;
    while (!queue.empty() && !seen[to]) {
        const int x = queue.front();
        queue.pop_front();
        for (int s : adj[x]) {
            const int y = basis.other(s, x);
            if (seen[y]) continue;
            seen[y] = true;
            via[y] = s;
            queue.push_back(y);
        }
    }
    std::vector<int> path;
    for (int x = to; x != from;) {
        const int s = via[x];
        path.push_back(s);
        x = basis.other(s, x);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

TransportSolution solve_transport(const Eigen::MatrixXd& cost, const Eigen::VectorXd& a,
                                  const Eigen::VectorXd& b) {
    const int m = static_cast<int>(cost.rows());
    const int n = static_cast<int>(cost.cols());
    if (a.size() != m || b.size() != n) throw StructuralError("transport: marginal sizes differ");
    if (m == 0 || n == 0) throw InvalidArgument("transport: empty marginal");
    if (std::abs(a.sum() - b.sum()) > 1e-9 * std::max(1.0, a.sum()))
        throw InvalidArgument("transport: marginals have different mass");

    TreeBasis basis = initial_basis(cost, a, b);
    const double scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
    const double tol = 1e-13 * scale;
    constexpr int kDegenerateStreak = 32;
    const int max_pivots = 50 * (m + n) * std::max(1, std::min(m, n)) + 1000;

    TransportSolution sol;
    std::vector<double> cell_flow;
    Eigen::MatrixXd flow = basic_flows(basis, a, b, cell_flow);
    int streak = 0;
    for (;;) {
        basic_potentials(basis, cost, sol.u, sol.v);
        int ei = -1;
        int ej = -1;
        double best = -tol;
        const bool bland = streak >= kDegenerateStreak;
        for (int i = 0; i < m && !(bland && ei >= 0); ++i)
            for (int j = 0; j < n; ++j) {
                if (basis.is_basic(i, j)) continue;
                const double r = cost(i, j) - sol.u(i) - sol.v(j);
                if (r < best) {
                    best = r;
                    ei = i;
                    ej = j;
                    if (bland) break;
                }
            }
        if (ei < 0) break;
        if (++sol.pivots > max_pivots)
            throw SolverError("transport simplex exceeded its pivot cap", -best);

        const std::vector<int> path = tree_path(basis, ei, m + ej);
        // odd positions (0-based even) of the path lose flow
        double theta = std::numeric_limits<double>::infinity();
        int leave = -1;
        std::size_t leave_key = 0;
        for (std::size_t p = 0; p < path.size(); p += 2) {
            const int s = path[p];
            const Cell& c = basis.cells()[s];
            const std::size_t key = static_cast<std::size_t>(c.row) * n + c.col;
            const double f = cell_flow[s];
            if (f < theta - 1e-300 || (f == theta && key < leave_key)) {
                theta = f;
                leave = s;
                leave_key = key;
            }
        }
        basis.replace(static_cast<std::size_t>(leave), {ei, ej});
        flow = basic_flows(basis, a, b, cell_flow);
        streak = theta <= 1e-15 ? streak + 1 : 0;
    }
    sol.flow = std::move(flow);
    sol.cost = sol.flow.cwiseProduct(cost).sum();
    for (double f : cell_flow)
        if (f <= 1e-15) sol.degenerate = true;
    return sol;
}

}  // namespace rcdlab
