#include "sir/grid_field.hpp"

#include <algorithm>
#include <cmath>

namespace sir {

GridField GridField::from_function(int n, const std::function<double(double, double)>& f) {
    GridField g(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g.at(i, j) = f(g.cell_center_1(i), g.cell_center_2(j));
    return g;
}

int GridField::cell_index_1(double x) const {
    int c = static_cast<int>(std::floor(x * n_));
    c %= n_;
    if (c < 0) c += n_;
    return c;
}

int GridField::cell_index_2(double x) const { return cell_index_1(x); }

double GridField::sample(const TorusPoint& p) const {
    return at(cell_index_1(p.x1), cell_index_2(p.x2));
}

double GridField::mass() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s * h() * h();
}

double GridField::min_value() const { return *std::min_element(data_.begin(), data_.end()); }
double GridField::max_value() const { return *std::max_element(data_.begin(), data_.end()); }

double GridField::dot(const GridField& other) const {
    SIR_CHECK(other.n() == n_, "GridField::dot: mismatched grids");
    double s = 0.0;
    for (std::size_t k = 0; k < data_.size(); ++k) s += data_[k] * other.data_[k];
    return s * h() * h();
}

GridField& GridField::operator+=(const GridField& o) {
    SIR_CHECK(o.n() == n_, "GridField: mismatched grids");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
}

GridField& GridField::operator-=(const GridField& o) {
    SIR_CHECK(o.n() == n_, "GridField: mismatched grids");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
}

GridField& GridField::operator*=(double c) {
    for (double& v : data_) v *= c;
    return *this;
}

GridField GridField::coarsened(int factor) const {
    SIR_CHECK(factor >= 1 && n_ % factor == 0, "GridField::coarsened: bad factor");
    const int m = n_ / factor;
    GridField out(m);
    const double w = 1.0 / (factor * factor);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) out.at(i / factor, j / factor) += at(i, j) * w;
    return out;
}

}  // namespace sir
