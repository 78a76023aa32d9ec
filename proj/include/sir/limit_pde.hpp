#pragma once

#include <memory>
#include <vector>

#include "sir/grid_field.hpp"
#include "sir/torus.hpp"

namespace sir {

/// Periodic real 2-D FFT pair on an n x n grid (plans cached per instance).
class Fft2 {
public:
    explicit Fft2(int n);
    ~Fft2();
    Fft2(const Fft2&) = delete;
    Fft2& operator=(const Fft2&) = delete;

    int n() const { return n_; }

    /// field -> complex spectrum (row-major n x (n/2+1)), unnormalized.
    void forward(const GridField& field, std::vector<double>& re, std::vector<double>& im) const;

    /// complex spectrum -> field, including the 1/n^2 normalization.
    void inverse(const std::vector<double>& re, const std::vector<double>& im,
                 GridField& field) const;

    /// Signed integer frequency of row index i.
    int freq(int i) const { return i <= n_ / 2 ? i : i - n_; }

private:
    struct Impl;
    int n_;
    std::unique_ptr<Impl> impl_;
};

/// Cached FFT plans, kernel spectrum, and heat multipliers for one grid size;
/// use this instead of the one-shot helpers inside loops.
class KernelConvolver {
public:
    KernelConvolver(int n, const KernelSpec& kernel);

    int n() const { return n_; }
    GridField convolve(const GridField& field) const;
    void heat_inplace(GridField& field, double dt, double gamma) const;

private:
    int n_;
    Fft2 fft_;
    KernelSpec kernel_;
    std::vector<double> kre_, kim_;
    mutable std::vector<double> fr_, fi_;
};

/// Periodic convolution (K * u)(x) = h^2 sum_y K(x - y) u(y) via FFT.
/// Requires h <= R/4 so the grid resolves the kernel (bump mode).
GridField kernel_convolve(const GridField& field, const KernelSpec& kernel);

/// Brute-force reference: direct double loop over the kernel support.
GridField kernel_convolve_direct(const GridField& field, const KernelSpec& kernel);

/// Exact heat semigroup action on grid modes; gamma*dt = 0 is the identity.
/// Mass (mode 0) is preserved.
GridField heat_step(const GridField& field, double dt, double gamma);

/// beta * f_S(x) * ( K * ( f_I / (K*f) ) )(x). Throws if the denominator
/// K*f drops below 1e-12 anywhere (the limit densities keep it positive).
GridField infection_term(const GridField& f_S, const GridField& f_I, const GridField& f,
                         const KernelSpec& kernel, double beta);

struct PdeConfig {
    int n_grid = 128;
    double dt = 0.005;
    double T = 1.0;
    double beta = 0.6;
    double alpha = 0.3;
    double gamma = 0.05;
    KernelSpec kernel{};
    Region region_A = Region::everything();
    double p = 0.5;
    GridField g;  // initial total density; empty means uniform 1
    std::vector<double> output_times;  // defaults to {0, T}

    void validate() const;
    GridField density() const;       // g, or uniform if empty
    GridField initial_f_S() const;   // ((1-p) 1_A + 1_{A^c}) g, cell-center sampled
    GridField initial_f_I() const;   // p 1_A g
};

struct PdeSolution {
    std::vector<double> times;
    std::vector<GridField> f_S, f_I, f;

    struct Diag {
        double mass_S, mass_I, mass_f, min_S, min_I, max_S, max_I;
        double int_mass_I;  // integral of mass_I dt, RK4 stage-consistent
    };
    std::vector<Diag> diagnostics;

    std::size_t index_of_time(double t) const;  // closest stored time
};

/// Strang splitting: half heat, RK4 reaction, half heat. The total density f
/// is advanced by the same heat steps and therefore stays the exact heat flow
/// of g. Aborts if a field drops below -1e-8 (step too large).
PdeSolution solve(const PdeConfig& config);

/// Frozen-position variant: no heat flow, denominator field K*g precomputed
/// once, RK4 in time. Requires gamma == 0 in the config.
PdeSolution solve_gamma_zero(const PdeConfig& config);

}  // namespace sir
