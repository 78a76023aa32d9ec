#pragma once

#include <vector>

#include "sir/grid_field.hpp"
#include "sir/simulator.hpp"
#include "sir/torus.hpp"

namespace sir {

/// A measure snapped to cell centers of a resolution x resolution grid.
struct SnappedMeasure {
    int resolution = 0;
    std::vector<double> mass;  // per cell, row-major

    double total() const;
};

SnappedMeasure snap_points(const WeightedPoints& points, int resolution);
SnappedMeasure snap_grid(const GridField& field, int resolution);

struct FortetEstimate {
    double lp = 0.0;          // authoritative: exact at the grid resolution
    double dictionary = 0.0;  // fast lower bound from a fixed function dictionary
};

/// Bounded-Lipschitz (Fortet) distance between two snapped measures:
/// sup over grid potentials with |f| <= 1 and |f_c - f_c'| <= d(c,c') on the
/// 8-neighbor stencil. Solved exactly as an uncapacitated min-cost flow
/// (transport at graph distance plus mass creation/destruction at cost 1),
/// and certified by LP strong duality.
FortetEstimate fortet_distance(const SnappedMeasure& a, const SnappedMeasure& b);

FortetEstimate fortet_distance(const WeightedPoints& a, const WeightedPoints& b, int resolution);
FortetEstimate fortet_distance(const WeightedPoints& a, const GridField& b, int resolution);
FortetEstimate fortet_distance(const GridField& a, const GridField& b, int resolution);

}  // namespace sir
