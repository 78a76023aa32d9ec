#include "sir/spectral.hpp"

#include <cmath>

namespace sir {

namespace {
constexpr double kSqrt2 = 1.41421356237309504880;

// Kahan accumulator; the norm sums mix very different magnitudes.
struct Kahan {
    double sum = 0.0, c = 0.0;
    void add(double v) {
        const double y = v - c;
        const double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
};
}  // namespace

void BasisIndex::validate() const {
    auto fail = [](const char* m) { throw std::invalid_argument(std::string("BasisIndex: ") + m); };
    if (family < 0 || family > 8) fail("family out of range");
    if (n1 < 0 || n2 < 0 || n1 % 2 != 0 || n2 % 2 != 0) fail("n1,n2 must be even >= 0");
    switch (family) {
        case 0:
            if (n1 != 0 || n2 != 0) fail("family 0 requires n1=n2=0");
            break;
        case 1: case 2: case 3: case 4:
            if (n1 <= 0 || n2 <= 0) fail("families 1-4 require n1>0 and n2>0");
            break;
        case 5: case 6:
            if (n1 <= 0 || n2 != 0) fail("families 5-6 require n1>0, n2=0");
            break;
        default:
            if (n1 != 0 || n2 <= 0) fail("families 7-8 require n1=0, n2>0");
    }
}

double basis_eval(const BasisIndex& idx, const TorusPoint& p) {
    const double a1 = kPi * idx.n1 * p.x1;
    const double a2 = kPi * idx.n2 * p.x2;
    switch (idx.family) {
        case 0: return 1.0;
        case 1: return 2.0 * std::sin(a1) * std::cos(a2);
        case 2: return 2.0 * std::sin(a1) * std::sin(a2);
        case 3: return 2.0 * std::cos(a1) * std::cos(a2);
        case 4: return 2.0 * std::cos(a1) * std::sin(a2);
        case 5: return kSqrt2 * std::cos(a1);
        case 6: return kSqrt2 * std::sin(a1);
        case 7: return kSqrt2 * std::cos(a2);
        case 8: return kSqrt2 * std::sin(a2);
    }
    throw std::invalid_argument("basis_eval: bad family");
}

std::array<double, 2> basis_grad(const BasisIndex& idx, const TorusPoint& p) {
    const double w1 = kPi * idx.n1;
    const double w2 = kPi * idx.n2;
    const double a1 = w1 * p.x1;
    const double a2 = w2 * p.x2;
    switch (idx.family) {
        case 0: return {0.0, 0.0};
        case 1: return {2.0 * w1 * std::cos(a1) * std::cos(a2), -2.0 * w2 * std::sin(a1) * std::sin(a2)};
        case 2: return {2.0 * w1 * std::cos(a1) * std::sin(a2), 2.0 * w2 * std::sin(a1) * std::cos(a2)};
        case 3: return {-2.0 * w1 * std::sin(a1) * std::cos(a2), -2.0 * w2 * std::cos(a1) * std::sin(a2)};
        case 4: return {-2.0 * w1 * std::sin(a1) * std::sin(a2), 2.0 * w2 * std::cos(a1) * std::cos(a2)};
        case 5: return {-kSqrt2 * w1 * std::sin(a1), 0.0};
        case 6: return {kSqrt2 * w1 * std::cos(a1), 0.0};
        case 7: return {0.0, -kSqrt2 * w2 * std::sin(a2)};
        case 8: return {0.0, kSqrt2 * w2 * std::cos(a2)};
    }
    throw std::invalid_argument("basis_grad: bad family");
}

double basis_laplacian(const BasisIndex& idx, const TorusPoint& p) {
    const double k2 = kPi * kPi * (static_cast<double>(idx.n1) * idx.n1 +
                                   static_cast<double>(idx.n2) * idx.n2);
    return -k2 * basis_eval(idx, p);
}

double eigenvalue(const BasisIndex& idx, double gamma) {
    if (gamma < 0) throw std::invalid_argument("eigenvalue: gamma must be >= 0");
    return gamma * kPi * kPi *
           (static_cast<double>(idx.n1) * idx.n1 + static_cast<double>(idx.n2) * idx.n2);
}

double sobolev_weight(const BasisIndex& idx, double gamma) {
    return 1.0 + gamma * kPi * kPi *
                     (static_cast<double>(idx.n1) * idx.n1 + static_cast<double>(idx.n2) * idx.n2);
}

BasisSet::BasisSet(int cutoff) : cutoff_(cutoff) {
    if (cutoff < 0 || cutoff % 2 != 0)
        throw std::invalid_argument("BasisSet: cutoff must be even and >= 0");
    indices_.push_back(BasisIndex{0, 0, 0});
    for (int fam = 1; fam <= 4; ++fam)
        for (int n1 = 2; n1 <= cutoff; n1 += 2)
            for (int n2 = 2; n2 <= cutoff; n2 += 2) indices_.push_back(BasisIndex{fam, n1, n2});
    for (int fam = 5; fam <= 6; ++fam)
        for (int n1 = 2; n1 <= cutoff; n1 += 2) indices_.push_back(BasisIndex{fam, n1, 0});
    for (int fam = 7; fam <= 8; ++fam)
        for (int n2 = 2; n2 <= cutoff; n2 += 2) indices_.push_back(BasisIndex{fam, 0, n2});
}

std::size_t BasisSet::position(const BasisIndex& idx) const {
    idx.validate();
    const int half = cutoff_ / 2;
    auto h1 = [&](int n) { return n / 2 - 1; };  // 2,4,... -> 0,1,...
    if (idx.family == 0) return 0;
    if (idx.n1 > cutoff_ || idx.n2 > cutoff_)
        throw std::invalid_argument("BasisSet::position: index beyond cutoff");
    std::size_t off = 1;
    if (idx.family <= 4) {
        return off + (static_cast<std::size_t>(idx.family - 1) * half + h1(idx.n1)) * half +
               h1(idx.n2);
    }
    off += static_cast<std::size_t>(4) * half * half;
    if (idx.family <= 6)
        return off + static_cast<std::size_t>(idx.family - 5) * half + h1(idx.n1);
    off += static_cast<std::size_t>(2) * half;
    return off + static_cast<std::size_t>(idx.family - 7) * half + h1(idx.n2);
}

double SpectralField::coeff(const BasisIndex& idx) const {
    return coeffs[BasisSet(cutoff).position(idx)];
}

SpectralField project_measure(const std::vector<TorusPoint>& points,
                              const std::vector<double>& weights, int cutoff,
                              double gamma) {
    SIR_CHECK(points.size() == weights.size(), "project_measure: size mismatch");
    for (double w : weights)
        if (!std::isfinite(w)) throw std::invalid_argument("project_measure: non-finite weight");
    const BasisSet basis(cutoff);
    SpectralField out{gamma, cutoff, std::vector<double>(basis.size(), 0.0)};
    for (std::size_t j = 0; j < points.size(); ++j)
        for (std::size_t k = 0; k < basis.size(); ++k)
            out.coeffs[k] += weights[j] * basis_eval(basis[k], points[j]);
    return out;
}

SpectralField project_grid(const GridField& field, int cutoff, double gamma) {
    const int n = field.n();
    if (n % 4 != 0 || n <= 2 * cutoff)
        throw std::invalid_argument("project_grid: grid must be a multiple of 4 and > 2*cutoff");
    const BasisSet basis(cutoff);
    SpectralField out{gamma, cutoff, std::vector<double>(basis.size(), 0.0)};
    const double cell = field.h() * field.h();
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const BasisIndex& idx = basis[k];
        Kahan acc;
        for (int i = 0; i < n; ++i) {
            const double x1 = field.cell_center_1(i);
            for (int j = 0; j < n; ++j)
                acc.add(field.at(i, j) * basis_eval(idx, TorusPoint{x1, field.cell_center_2(j)}));
        }
        out.coeffs[k] = acc.sum * cell;
    }
    return out;
}

double h_neg_s_norm(const SpectralField& field, double s) {
    if (!(s > 0)) throw std::invalid_argument("h_neg_s_norm: s must be positive");
    const BasisSet basis(field.cutoff);
    Kahan acc;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const double w = sobolev_weight(basis[k], field.gamma);
        acc.add(field.coeffs[k] * field.coeffs[k] / std::pow(w, s));
    }
    return std::sqrt(acc.sum);
}

double hs_norm(const SpectralField& field, double s) {
    if (!(s > 0)) throw std::invalid_argument("hs_norm: s must be positive");
    const BasisSet basis(field.cutoff);
    Kahan acc;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const double w = sobolev_weight(basis[k], field.gamma);
        acc.add(field.coeffs[k] * field.coeffs[k] * std::pow(w, s));
    }
    return std::sqrt(acc.sum);
}

SpectralField heat_apply(const SpectralField& field, double t) {
    if (t < 0) throw std::invalid_argument("heat_apply: t must be >= 0");
    SpectralField out = field;
    const BasisSet basis(field.cutoff);
    for (std::size_t k = 0; k < basis.size(); ++k)
        out.coeffs[k] *= std::exp(-eigenvalue(basis[k], field.gamma) * t);
    return out;
}

std::vector<DiagnosticRow> appendix_sum_diagnostic(double s, double gamma,
                                                   const TorusPoint& x,
                                                   const std::vector<int>& cutoffs) {
    if (!(s > 0) || !(gamma > 0))
        throw std::invalid_argument("appendix_sum_diagnostic: needs s>0 and gamma>0");
    std::vector<DiagnosticRow> rows;
    rows.reserve(cutoffs.size());
    for (int cutoff : cutoffs) {
        const BasisSet basis(cutoff);
        Kahan plain, grad;
        for (std::size_t k = 0; k < basis.size(); ++k) {
            const BasisIndex& idx = basis[k];
            const double w = std::pow(sobolev_weight(idx, gamma), s);
            const double f = basis_eval(idx, x);
            plain.add(f * f / w);
            const auto g = basis_grad(idx, x);
            grad.add((g[0] * g[0] + g[1] * g[1]) / w);
        }
        rows.push_back(DiagnosticRow{cutoff, plain.sum, grad.sum});
    }
    return rows;
}

TailClass classify_tail(const std::vector<DiagnosticRow>& rows, bool gradient) {
    SIR_CHECK(rows.size() >= 3, "classify_tail: need at least three cutoffs");
    // Tail increments between successive cutoffs, then increment ratios.
    std::vector<double> inc;
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const double a = gradient ? rows[k - 1].sum_grad_rho_sq : rows[k - 1].sum_rho_sq;
        const double b = gradient ? rows[k].sum_grad_rho_sq : rows[k].sum_rho_sq;
        inc.push_back(b - a);
    }
    double lo = 1e300, hi = -1e300;
    for (std::size_t k = 1; k < inc.size(); ++k) {
        if (inc[k - 1] <= 0.0) return TailClass::Convergent;  // tail already flat
        const double r = inc[k] / inc[k - 1];
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    if (hi < 0.9) return TailClass::Convergent;
    if (lo > 1.1) return TailClass::Divergent;
    return TailClass::Marginal;
}

const char* tail_class_name(TailClass c) {
    switch (c) {
        case TailClass::Convergent: return "convergent";
        case TailClass::Marginal: return "marginal";
        case TailClass::Divergent: return "divergent";
    }
    return "?";
}

}  // namespace sir
