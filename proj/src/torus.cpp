#include "sir/torus.hpp"

#include <algorithm>
#include <cmath>

namespace sir {

TorusPoint wrap(double raw1, double raw2) {
    if (!std::isfinite(raw1) || !std::isfinite(raw2))
        throw std::invalid_argument("wrap: non-finite coordinate");
    double u = raw1 - std::floor(raw1);
    double v = raw2 - std::floor(raw2);
    if (u >= 1.0) u = 0.0;  // floor rounding at the seam
    if (v >= 1.0) v = 0.0;
    return TorusPoint{u, v};
}

double torus_distance(const TorusPoint& a, const TorusPoint& b) {
    double d1 = std::fabs(a.x1 - b.x1);
    double d2 = std::fabs(a.x2 - b.x2);
    d1 = std::min(d1, 1.0 - d1);
    d2 = std::min(d2, 1.0 - d2);
    return std::sqrt(d1 * d1 + d2 * d2);
}

void KernelSpec::validate() const {
    if (mode == KernelMode::Constant) {
        if (!(amplitude > 0)) throw std::invalid_argument("kernel: amplitude must be positive");
        return;
    }
    if (!(radius > 0 && radius < 0.5))
        throw std::invalid_argument("kernel: radius must lie in (0, 1/2)");
    if (exponent < 4) throw std::invalid_argument("kernel: exponent must be >= 4");
    if (!(amplitude > 0)) throw std::invalid_argument("kernel: amplitude must be positive");
}

double KernelSpec::profile(double u) const {
    if (mode == KernelMode::Constant) return amplitude;
    const double r2 = radius * radius;
    if (u >= r2) return 0.0;
    const double b = 1.0 - u / r2;
    double p = 1.0;
    for (int i = 0; i < exponent; ++i) p *= b;
    return amplitude * p;
}

double KernelSpec::profile_lipschitz() const {
    if (mode == KernelMode::Constant) return 0.0;
    return amplitude * exponent / (radius * radius);
}

double KernelSpec::mass() const {
    if (mode == KernelMode::Constant) return amplitude;
    const double pi = 3.14159265358979323846;
    return amplitude * pi * radius * radius / (exponent + 1);
}

double kernel_eval(const KernelSpec& spec, const TorusPoint& a, const TorusPoint& b) {
    if (spec.mode == KernelMode::Constant) return spec.amplitude;
    const double d = torus_distance(a, b);
    if (d >= spec.radius) return 0.0;
    return spec.profile(d * d);
}

SpatialGrid::SpatialGrid(double interaction_radius, std::size_t point_hint) {
    const double cell = std::max(interaction_radius, 1.0 / 64.0);
    nc_ = std::max(1, static_cast<int>(std::floor(1.0 / cell)));
    if (nc_ >= 3) {
        buckets_.resize(static_cast<std::size_t>(nc_) * nc_);
        for (auto& b : buckets_) b.reserve(1 + point_hint / buckets_.size());
    }
}

void SpatialGrid::rebuild(const std::vector<double>& x1, const std::vector<double>& x2) {
    const int n = static_cast<int>(x1.size());
    if (nc_ < 3) {
        all_.resize(n);
        for (int i = 0; i < n; ++i) all_[i] = i;
        return;
    }
    for (auto& b : buckets_) b.clear();
    for (int i = 0; i < n; ++i) {
        const int ci = cell_coord(x1[i]);
        const int cj = cell_coord(x2[i]);
        buckets_[static_cast<std::size_t>(ci) * nc_ + cj].push_back(i);
    }
}

std::vector<double> kernel_column_sums(const KernelSpec& spec,
                                       const std::vector<TorusPoint>& points) {
    const std::size_t n = points.size();
    if (n == 0) throw std::invalid_argument("kernel_column_sums: empty point list");
    std::vector<double> sums(n, 0.0);
    if (spec.mode == KernelMode::Constant) {
        std::fill(sums.begin(), sums.end(), spec.amplitude * static_cast<double>(n));
        return sums;
    }
    std::vector<double> x1(n), x2(n);
    for (std::size_t i = 0; i < n; ++i) {
        x1[i] = points[i].x1;
        x2[i] = points[i].x2;
    }
    SpatialGrid grid(spec.radius, n);
    grid.rebuild(x1, x2);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        grid.for_neighbors(points[j], [&](int l) {
            acc += kernel_eval(spec, points[static_cast<std::size_t>(l)], points[j]);
        });
        sums[j] = acc;
        SIR_CHECK(sums[j] > 0.0, "kernel column sum must be positive (self term)");
    }
    return sums;
}

bool Region::contains(const TorusPoint& p) const {
    switch (shape) {
        case Shape::Everything: return true;
        case Shape::Nothing: return false;
        case Shape::Disc: return torus_distance(p, center) < disc_radius;
        case Shape::Rectangle: {
            auto in_interval = [](double x, double lo, double hi) {
                if (lo <= hi) return x >= lo && x < hi;
                return x >= lo || x < hi;  // wraps the seam
            };
            return in_interval(p.x1, lo1, hi1) && in_interval(p.x2, lo2, hi2);
        }
    }
    return false;
}

}  // namespace sir
