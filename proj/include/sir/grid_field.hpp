#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "sir/torus.hpp"

namespace sir {

/// Real values on the periodic uniform n x n grid, row-major, cell centers at
/// ((i+1/2)h, (j+1/2)h) with h = 1/n. Used for densities and test-function
/// tables; piecewise-constant when sampled at a point.
class GridField {
public:
    GridField() = default;
    GridField(int n, double fill = 0.0)
        : n_(n), data_(static_cast<std::size_t>(n) * n, fill) {}

    static GridField from_function(int n, const std::function<double(double, double)>& f);

    int n() const { return n_; }
    double h() const { return 1.0 / n_; }
    std::size_t size() const { return data_.size(); }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * n_ + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * n_ + j]; }
    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }
    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    double cell_center_1(int i) const { return (i + 0.5) / n_; }
    double cell_center_2(int j) const { return (j + 0.5) / n_; }

    int cell_index_1(double x) const;
    int cell_index_2(double x) const;

    /// Value of the piecewise-constant field at a torus point.
    double sample(const TorusPoint& p) const;

    double mass() const;          // h^2 * sum
    double min_value() const;
    double max_value() const;
    double dot(const GridField& other) const;  // h^2 * sum of products

    GridField& operator+=(const GridField& o);
    GridField& operator-=(const GridField& o);
    GridField& operator*=(double c);

    /// Coarsen by an integer factor (block averages); n must be divisible.
    GridField coarsened(int factor) const;

private:
    int n_ = 0;
    std::vector<double> data_;
};

}  // namespace sir
