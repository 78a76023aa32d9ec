#include "sir/fortet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>

#include "sir/spectral.hpp"

namespace sir {

double SnappedMeasure::total() const {
    double t = 0.0;
    for (double m : mass) t += m;
    return t;
}

SnappedMeasure snap_points(const WeightedPoints& points, int resolution) {
    SnappedMeasure out;
    out.resolution = resolution;
    out.mass.assign(static_cast<std::size_t>(resolution) * resolution, 0.0);
    for (std::size_t k = 0; k < points.points.size(); ++k) {
        int i = static_cast<int>(points.points[k].x1 * resolution);
        int j = static_cast<int>(points.points[k].x2 * resolution);
        if (i >= resolution) i = resolution - 1;
        if (j >= resolution) j = resolution - 1;
        out.mass[static_cast<std::size_t>(i) * resolution + j] += points.weights[k];
    }
    return out;
}

SnappedMeasure snap_grid(const GridField& field, int resolution) {
    SIR_CHECK(field.n() % resolution == 0, "snap_grid: resolution must divide the grid");
    const GridField coarse = field.coarsened(field.n() / resolution);
    SnappedMeasure out;
    out.resolution = resolution;
    out.mass.resize(coarse.size());
    const double cell = coarse.h() * coarse.h();
    for (std::size_t k = 0; k < coarse.size(); ++k) out.mass[k] = coarse[k] * cell;
    return out;
}

namespace {

/// Min-cost flow with integer capacities and real costs: successive shortest
/// paths with potentials, augmenting along all zero-reduced-cost paths per
/// Dijkstra phase (DFS with on-stack marking).
class MinCostFlow {
public:
    explicit MinCostFlow(int nodes) : head_(nodes, -1) {}

    void add_arc(int u, int v, std::int64_t cap, double cost) {
        arcs_.push_back({v, head_[u], cap, cost});
        head_[u] = static_cast<int>(arcs_.size()) - 1;
        arcs_.push_back({u, head_[v], 0, -cost});
        head_[v] = static_cast<int>(arcs_.size()) - 1;
    }

    /// Route as much flow as possible from s to t; returns its total cost.
    double solve(int s, int t) {
        const int n = static_cast<int>(head_.size());
        potential_.assign(n, 0.0);
        std::vector<double> dist(n);
        std::vector<char> done(n), onstack(n);
        std::vector<int> cur(n);
        const double inf = std::numeric_limits<double>::infinity();
        long phases = 0;
        for (;;) {
            if (++phases > 100000) throw std::runtime_error("fortet LP: phase cap exceeded");
            std::fill(dist.begin(), dist.end(), inf);
            std::fill(done.begin(), done.end(), 0);
            dist[s] = 0.0;
            using Item = std::pair<double, int>;
            std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
            pq.push({0.0, s});
            while (!pq.empty()) {
                const auto [d, u] = pq.top();
                pq.pop();
                if (done[u]) continue;
                done[u] = 1;
                for (int e = head_[u]; e >= 0; e = arcs_[e].next) {
                    if (arcs_[e].cap <= 0) continue;
                    const int v = arcs_[e].to;
                    double rc = arcs_[e].cost + potential_[u] - potential_[v];
                    if (rc < 0) rc = 0;  // floating-point dust
                    if (d + rc < dist[v] - 1e-15) {
                        dist[v] = d + rc;
                        pq.push({dist[v], v});
                    }
                }
            }
            if (dist[t] == inf) break;
            for (int v = 0; v < n; ++v)
                potential_[v] += std::min(dist[v], dist[t]);

            for (int v = 0; v < n; ++v) cur[v] = head_[v];
            std::fill(onstack.begin(), onstack.end(), 0);
            while (dfs_push(s, t, std::numeric_limits<std::int64_t>::max(), cur, onstack) > 0) {
            }
        }
        double total_cost = 0.0;
        for (std::size_t e = 1; e < arcs_.size(); e += 2)
            if (arcs_[e].cap > 0)  // the reverse arc holds the flow
                total_cost += -arcs_[e].cost * static_cast<double>(arcs_[e].cap);
        return total_cost;
    }

    const std::vector<double>& potentials() const { return potential_; }

private:
    struct Arc {
        int to;
        int next;
        std::int64_t cap;
        double cost;
    };

    std::int64_t dfs_push(int u, int t, std::int64_t limit, std::vector<int>& cur,
                          std::vector<char>& onstack) {
        if (u == t) return limit;
        onstack[u] = 1;
        for (int& e = cur[u]; e >= 0; e = arcs_[e].next) {
            const int v = arcs_[e].to;
            if (arcs_[e].cap <= 0 || onstack[v]) continue;
            const double rc = arcs_[e].cost + potential_[u] - potential_[v];
            if (std::fabs(rc) > 1e-11) continue;
            const std::int64_t pushed = dfs_push(v, t, std::min(limit, arcs_[e].cap), cur, onstack);
            if (pushed > 0) {
                arcs_[e].cap -= pushed;
                arcs_[e ^ 1].cap += pushed;
                onstack[u] = 0;
                return pushed;
            }
        }
        onstack[u] = 0;
        return 0;
    }

    std::vector<int> head_;
    std::vector<Arc> arcs_;
    std::vector<double> potential_;
};

struct Edge {
    int a, b;
    double length;
};

/// 8-neighbor stencil edges with torus wraparound, each pair listed once.
std::vector<Edge> stencil_edges(int res) {
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(res) * res * 4);
    const double h = 1.0 / res;
    const double hd = h * std::sqrt(2.0);
    auto id = [res](int i, int j) {
        return ((i % res + res) % res) * res + ((j % res + res) % res);
    };
    for (int i = 0; i < res; ++i)
        for (int j = 0; j < res; ++j) {
            edges.push_back({id(i, j), id(i + 1, j), h});
            edges.push_back({id(i, j), id(i, j + 1), h});
            edges.push_back({id(i, j), id(i + 1, j + 1), hd});
            edges.push_back({id(i, j), id(i + 1, j - 1), hd});
        }
    return edges;
}

/// Dictionary of bounded 1-Lipschitz functions: the constant 1 plus basis
/// functions rescaled by max(sup norm, Lipschitz bound).
double dictionary_bound(const SnappedMeasure& a, const SnappedMeasure& b) {
    const int res = a.resolution;
    std::vector<double> diff(a.mass.size());
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = a.mass[k] - b.mass[k];

    double md = 0.0;
    for (double d : diff) md += d;
    double best = std::fabs(md);

    const BasisSet basis(8);
    for (std::size_t k = 1; k < basis.size(); ++k) {
        const BasisIndex& idx = basis[k];
        const double sup = idx.family <= 4 ? 2.0 : std::sqrt(2.0);
        const double lip = sup * kPi *
                           std::sqrt(static_cast<double>(idx.n1) * idx.n1 +
                                     static_cast<double>(idx.n2) * idx.n2);
        const double scale = 1.0 / std::max(sup, lip);
        double acc = 0.0;
        for (int i = 0; i < res; ++i)
            for (int j = 0; j < res; ++j)
                acc += diff[static_cast<std::size_t>(i) * res + j] *
                       basis_eval(idx, {(i + 0.5) / res, (j + 0.5) / res});
        best = std::max(best, std::fabs(acc * scale));
    }
    return best;
}

}  // namespace

FortetEstimate fortet_distance(const SnappedMeasure& a, const SnappedMeasure& b) {
    SIR_CHECK(a.resolution == b.resolution, "fortet_distance: resolutions differ");
    const int res = a.resolution;
    const int cells = res * res;

    std::vector<double> supply(cells);
    double sum_abs = 0.0;
    std::int64_t itotal = 0;
    for (int c = 0; c < cells; ++c) {
        supply[c] = a.mass[c] - b.mass[c];
        sum_abs += std::fabs(supply[c]);
    }
    FortetEstimate out;
    out.dictionary = dictionary_bound(a, b);
    if (sum_abs < 1e-15) {
        out.lp = 0.0;
        return out;
    }

    // Integerize supplies; the quantization error in the LP value is at most
    // max-cost * cells / scale, far below the O(h) snapping error.
    const double scale = 9.0e15 / std::max(1.0, sum_abs);
    std::vector<std::int64_t> isup(cells);
    for (int c = 0; c < cells; ++c) {
        isup[c] = std::llround(supply[c] * scale);
        itotal += isup[c];
    }

    const int omega = cells;  // mass creation/destruction node
    const int source = cells + 1;
    const int sink = cells + 2;
    const std::int64_t big = std::numeric_limits<std::int64_t>::max() / 4;
    MinCostFlow mcf(cells + 3);
    const auto edges = stencil_edges(res);
    for (const Edge& e : edges) {
        mcf.add_arc(e.a, e.b, big, e.length);
        mcf.add_arc(e.b, e.a, big, e.length);
    }
    for (int c = 0; c < cells; ++c) {
        mcf.add_arc(c, omega, big, 1.0);
        mcf.add_arc(omega, c, big, 1.0);
    }
    for (int c = 0; c < cells; ++c) {
        if (isup[c] > 0) mcf.add_arc(source, c, isup[c], 0.0);
        if (isup[c] < 0) mcf.add_arc(c, sink, -isup[c], 0.0);
    }
    // Omega absorbs any overall mass imbalance at zero cost.
    if (itotal > 0)
        mcf.add_arc(omega, sink, itotal, 0.0);
    else if (itotal < 0)
        mcf.add_arc(source, omega, -itotal, 0.0);

    const double cost = mcf.solve(source, sink) / scale;

    // Strong-duality certificate: phi_c = y_Omega - y_c is feasible for the
    // potential LP (box and stencil Lipschitz constraints) and its objective
    // must equal the flow cost.
    const auto& y = mcf.potentials();
    double dual = 0.0;
    for (int c = 0; c < cells; ++c) {
        const double phi = y[omega] - y[c];
        if (std::fabs(phi) > 1.0 + 1e-7)
            throw std::runtime_error("fortet LP: dual infeasible (box)");
        dual += phi * supply[c];
    }
    for (const Edge& e : edges)
        if (std::fabs(y[e.a] - y[e.b]) > e.length + 1e-7)
            throw std::runtime_error("fortet LP: dual infeasible (Lipschitz)");
    if (std::fabs(dual - cost) > 1e-6 * std::max(1.0, std::fabs(cost)) + 1e-9)
        throw std::runtime_error("fortet LP: duality gap " + std::to_string(dual - cost));

    out.lp = cost;
    return out;
}

FortetEstimate fortet_distance(const WeightedPoints& a, const WeightedPoints& b, int resolution) {
    return fortet_distance(snap_points(a, resolution), snap_points(b, resolution));
}

FortetEstimate fortet_distance(const WeightedPoints& a, const GridField& b, int resolution) {
    return fortet_distance(snap_points(a, resolution), snap_grid(b, resolution));
}

FortetEstimate fortet_distance(const GridField& a, const GridField& b, int resolution) {
    return fortet_distance(snap_grid(a, resolution), snap_grid(b, resolution));
}

}  // namespace sir
