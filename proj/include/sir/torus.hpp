#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sir {

/// Always-on invariant check (these guard mathematical contracts, not user input).
#define SIR_CHECK(cond, msg)                                            \
    do {                                                                \
        if (!(cond)) throw std::logic_error(std::string("invariant: ") + (msg)); \
    } while (0)

/// A point on the flat unit torus; both coordinates live in [0,1).
struct TorusPoint {
    double x1 = 0.0;
    double x2 = 0.0;
};

/// Reduce a raw R^2 point mod 1 into [0,1)^2. Rejects non-finite input.
TorusPoint wrap(double raw1, double raw2);

/// Geodesic distance on the unit torus: per-coordinate min(|d|, 1-|d|).
/// Range [0, sqrt(2)/2].
double torus_distance(const TorusPoint& a, const TorusPoint& b);

enum class KernelMode { Bump, Constant };

/// Interaction kernel K(x,y) = k(d^2(x,y)) with k(u) = amplitude*(1-u/R^2)^m
/// on [0,R^2], zero outside. m >= 4 keeps k in C^3 at the support edge.
/// The Constant mode (K == amplitude everywhere) exists only for the
/// homogeneous-SIR reduction and is excluded from support-based invariants.
struct KernelSpec {
    double radius = 0.2;
    int exponent = 4;
    double amplitude = 1.0;
    KernelMode mode = KernelMode::Bump;

    void validate() const;

    /// k(u) for u = squared distance.
    double profile(double u) const;

    /// |k'| is maximal at u=0: C_k = amplitude*m/R^2.
    double profile_lipschitz() const;

    /// \int K(x,y) dy = amplitude*pi*R^2/(m+1), independent of x.
    double mass() const;
};

double kernel_eval(const KernelSpec& spec, const TorusPoint& a, const TorusPoint& b);

/// Uniform spatial binning with cell size >= max(R, 1/64); neighbor scans
/// cover the 3x3 ring. Falls back to a single cell (full scan) when the
/// support is too large for a 3-cell ring.
class SpatialGrid {
public:
    SpatialGrid(double interaction_radius, std::size_t point_hint);

    void rebuild(const std::vector<double>& x1, const std::vector<double>& x2);

    int cells_per_side() const { return nc_; }

    /// Visit indices of all points in the 3x3 cell neighborhood of p
    /// (or all points when binning is degenerate).
    template <typename Visitor>
    void for_neighbors(const TorusPoint& p, Visitor&& visit) const {
        if (nc_ < 3) {
            for (int idx : all_) visit(idx);
            return;
        }
        const int ci = cell_coord(p.x1);
        const int cj = cell_coord(p.x2);
        for (int di = -1; di <= 1; ++di) {
            const int i = (ci + di + nc_) % nc_;
            for (int dj = -1; dj <= 1; ++dj) {
                const int j = (cj + dj + nc_) % nc_;
                for (int idx : buckets_[static_cast<std::size_t>(i) * nc_ + j]) visit(idx);
            }
        }
    }

private:
    int cell_coord(double x) const {
        int c = static_cast<int>(x * nc_);
        if (c >= nc_) c = nc_ - 1;  // x just below 1 can round up
        return c;
    }

    int nc_;
    std::vector<std::vector<int>> buckets_;
    std::vector<int> all_;
};

/// For each j: sum_l K(X_l, X_j). Strictly positive (self term k(0) > 0).
std::vector<double> kernel_column_sums(const KernelSpec& spec,
                                       const std::vector<TorusPoint>& points);

/// Axis-aligned rectangle or disc on the torus, with exact membership test.
struct Region {
    enum class Shape { Rectangle, Disc, Everything, Nothing };
    Shape shape = Shape::Everything;
    // Rectangle: [lo1, hi1) x [lo2, hi2) with wraparound if hi < lo.
    double lo1 = 0, hi1 = 1, lo2 = 0, hi2 = 1;
    // Disc: center and radius in torus metric.
    TorusPoint center{};
    double disc_radius = 0;

    bool contains(const TorusPoint& p) const;

    static Region everything() { return Region{}; }
    static Region nothing() {
        Region r;
        r.shape = Shape::Nothing;
        return r;
    }
    static Region rectangle(double a1, double b1, double a2, double b2) {
        Region r;
        r.shape = Shape::Rectangle;
        r.lo1 = a1; r.hi1 = b1; r.lo2 = a2; r.hi2 = b2;
        return r;
    }
    static Region disc(TorusPoint c, double radius) {
        Region r;
        r.shape = Shape::Disc;
        r.center = c;
        r.disc_radius = radius;
        return r;
    }
};

}  // namespace sir
