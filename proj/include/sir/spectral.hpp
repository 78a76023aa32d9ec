#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "sir/grid_field.hpp"
#include "sir/torus.hpp"

namespace sir {

inline constexpr double kPi = 3.14159265358979323846;

/// Index into the trigonometric Laplacian eigenbasis on the torus.
/// family 0: constant 1 (n1=n2=0)
/// families 1..4: 2*{sin,cos}(pi n1 x1)*{cos,sin}(pi n2 x2), n1,n2 > 0 even
/// families 5,6: sqrt(2)*{cos,sin}(pi n1 x1), n2 = 0
/// families 7,8: sqrt(2)*{cos,sin}(pi n2 x2), n1 = 0
/// n1, n2 are even by convention (frequency in cycles is n/2).
struct BasisIndex {
    int family = 0;
    int n1 = 0;
    int n2 = 0;

    void validate() const;
    bool operator==(const BasisIndex&) const = default;
};

double basis_eval(const BasisIndex& idx, const TorusPoint& p);
std::array<double, 2> basis_grad(const BasisIndex& idx, const TorusPoint& p);
/// Laplacian of the basis function: -pi^2 (n1^2+n2^2) * f.
double basis_laplacian(const BasisIndex& idx, const TorusPoint& p);

/// lambda_{n1,n2} = gamma * pi^2 * (n1^2 + n2^2); zero for the constant mode.
double eigenvalue(const BasisIndex& idx, double gamma);

/// Sobolev weight 1 + gamma pi^2 (n1^2 + n2^2).
double sobolev_weight(const BasisIndex& idx, double gamma);

/// All indices with n1, n2 <= cutoff (cutoff even), in a fixed deterministic
/// order: constant first, then families 1..8 with n1 ascending then n2.
class BasisSet {
public:
    explicit BasisSet(int cutoff);

    int cutoff() const { return cutoff_; }
    std::size_t size() const { return indices_.size(); }
    const BasisIndex& operator[](std::size_t k) const { return indices_[k]; }
    const std::vector<BasisIndex>& indices() const { return indices_; }

    /// Position of idx in the enumeration; throws if absent.
    std::size_t position(const BasisIndex& idx) const;

private:
    int cutoff_;
    std::vector<BasisIndex> indices_;
};

/// Truncated coefficient table of a measure or function in the eigenbasis.
/// Coefficients are raw pairings c_k = (A, f_k) with the unnormalized basis
/// functions; H^{+-s} norms apply the Sobolev weights on top. Norms computed
/// from this object are truncated norms, reported with the cutoff.
struct SpectralField {
    double gamma = 1.0;
    int cutoff = 0;
    std::vector<double> coeffs;  // aligned with BasisSet(cutoff)

    double coeff(const BasisIndex& idx) const;
};

/// Pairing coefficients of an atomic measure: c_k = sum_j w_j f_k(X_j).
SpectralField project_measure(const std::vector<TorusPoint>& points,
                              const std::vector<double>& weights, int cutoff,
                              double gamma);

/// Rectangle-rule L^2 coefficients of a grid field; exact for band-limited
/// fields. Requires n_grid a multiple of 4 and > 2*cutoff (anti-aliasing).
SpectralField project_grid(const GridField& field, int cutoff, double gamma);

/// Truncated H^{-s} norm: sqrt( sum_k c_k^2 / w_k^s ).
double h_neg_s_norm(const SpectralField& field, double s);

/// Truncated H^{s} norm: sqrt( sum_k c_k^2 * w_k^s ).
double hs_norm(const SpectralField& field, double s);

/// Heat semigroup: multiply each coefficient by exp(-lambda_k t).
SpectralField heat_apply(const SpectralField& field, double t);

/// One row of the basis-sum convergence table.
struct DiagnosticRow {
    int cutoff = 0;
    double sum_rho_sq = 0.0;       // sum over modes of rho^{i,s}(x)^2
    double sum_grad_rho_sq = 0.0;  // sum of |grad rho^{i,s}(x)|^2
};

/// Partial sums of sum (rho^{i,s}(x))^2 and sum |grad rho^{i,s}(x)|^2 at each
/// cutoff. The first converges iff s > 1, the second iff s > 2.
std::vector<DiagnosticRow> appendix_sum_diagnostic(double s, double gamma,
                                                   const TorusPoint& x,
                                                   const std::vector<int>& cutoffs);

enum class TailClass { Convergent, Marginal, Divergent };

/// Trend classification from tail increments across cutoff doublings.
/// The increment ratio tends to 2^(2-2s) for the plain sum and 2^(4-2s) for
/// the gradient sum, so the convergence boundary is ratio = 1. Ratios below
/// 0.9 are classified convergent, above 1.1 divergent, in between marginal.
TailClass classify_tail(const std::vector<DiagnosticRow>& rows, bool gradient);

const char* tail_class_name(TailClass c);

}  // namespace sir
