#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sir/limit_pde.hpp"
#include "sir/rng.hpp"
#include "sir/spectral.hpp"

using namespace sir;

namespace {
const double pi = 3.14159265358979323846;

KernelSpec bump(double radius = 0.2, int m = 4) {
    KernelSpec k;
    k.radius = radius;
    k.exponent = m;
    return k;
}

KernelSpec constant_kernel() {
    KernelSpec k;
    k.mode = KernelMode::Constant;
    return k;
}

double sup_diff(const GridField& a, const GridField& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a[k] - b[k]));
    return m;
}
}  // namespace

TEST_CASE("kernel_convolve of a constant field is the kernel mass", "[pde]") {
    const KernelSpec k = bump();
    const GridField field(128, 3.0);
    const GridField out = kernel_convolve(field, k);
    for (int i = 0; i < 128; i += 17)
        for (int j = 0; j < 128; j += 13)
            CHECK(out.at(i, j) == Catch::Approx(3.0 * k.mass()).epsilon(1e-6));
}

TEST_CASE("kernel_convolve of a spike copies the kernel shape", "[pde]") {
    const KernelSpec k = bump();
    const int n = 128;
    GridField spike(n);
    spike.at(40, 40) = 1.0;
    const GridField out = kernel_convolve(spike, k);
    const double cell = 1.0 / (static_cast<double>(n) * n);
    // (K * spike)(x) = h^2 K(x - x0)
    const TorusPoint x0{spike.cell_center_1(40), spike.cell_center_2(40)};
    for (int i = 30; i < 50; ++i)
        for (int j = 30; j < 50; ++j) {
            const TorusPoint x{out.cell_center_1(i), out.cell_center_2(j)};
            CHECK(out.at(i, j) == Catch::Approx(cell * kernel_eval(k, x, x0)).margin(1e-12));
        }
}

TEST_CASE("fft and direct convolution agree to 1e-10", "[pde]") {
    const KernelSpec k = bump();
    Rng rng(55);
    GridField field(64);
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = rng.uniform();
    const GridField fast = kernel_convolve(field, k);
    const GridField slow = kernel_convolve_direct(field, k);
    CHECK(sup_diff(fast, slow) < 1e-10);
}

TEST_CASE("kernel_convolve resolution guard", "[pde]") {
    KernelSpec tight = bump(0.05);
    CHECK_THROWS_AS(kernel_convolve(GridField(64, 1.0), tight), std::invalid_argument);
}

TEST_CASE("heat_step identity, constants, single-mode factor, mass", "[pde]") {
    Rng rng(9);
    GridField field(64);
    for (std::size_t i = 0; i < field.size(); ++i) field[i] = rng.uniform();

    const GridField same = heat_step(field, 0.0, 1.0);
    CHECK(sup_diff(same, field) == 0.0);
    const GridField same2 = heat_step(field, 0.1, 0.0);
    CHECK(sup_diff(same2, field) == 0.0);  // gamma=0 is the identity, bit-exact

    const GridField c(64, 2.0);
    CHECK(sup_diff(heat_step(c, 0.5, 1.0), c) < 1e-13);

    const auto mode = GridField::from_function(
        64, [](double x, double y) { return basis_eval({3, 2, 2}, {x, y}); });
    const GridField cooled = heat_step(mode, 0.1, 1.0);
    const double factor = std::exp(-0.8 * pi * pi);
    for (int i = 0; i < 64; i += 7)
        for (int j = 0; j < 64; j += 7)
            CHECK(cooled.at(i, j) == Catch::Approx(factor * mode.at(i, j)).margin(1e-12));

    CHECK(heat_step(field, 0.37, 0.8).mass() == Catch::Approx(field.mass()).margin(1e-13));

    // Positivity preservation for a non-negative field.
    GridField bumpfield(64);
    for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j)
            bumpfield.at(i, j) = (i > 20 && i < 30 && j > 40 && j < 44) ? 5.0 : 0.0;
    for (double t : {0.001, 0.01, 0.1})
        CHECK(heat_step(bumpfield, t, 1.0).min_value() >= -1e-10);
}

TEST_CASE("infection_term special cases", "[pde]") {
    const int n = 64;
    const GridField f(n, 1.0);
    const GridField fS(n, 0.7);
    const GridField zero(n, 0.0);

    const GridField none = infection_term(fS, zero, f, bump(), 0.6);
    CHECK(sup_diff(none, zero) == 0.0);

    const GridField nobeta = infection_term(fS, f, f, bump(), 0.0);
    CHECK(sup_diff(nobeta, zero) == 0.0);

    // Constant kernel, uniform f: term = beta * f_S * mass(f_I).
    GridField fI(n, 0.25);
    const GridField term = infection_term(fS, fI, f, constant_kernel(), 0.6);
    for (int i = 0; i < n; i += 11)
        CHECK(term.at(i, i) == Catch::Approx(0.6 * 0.7 * 0.25).epsilon(1e-12));

    CHECK_THROWS_AS(infection_term(fS, fI, zero, bump(), 0.6), std::runtime_error);
}

TEST_CASE("solve with beta=0: heat flow for f_S, exponential decay of I mass", "[pde]") {
    PdeConfig cfg;
    cfg.n_grid = 64;
    cfg.dt = 0.005;
    cfg.T = 1.0;
    cfg.beta = 0.0;
    cfg.alpha = 0.4;
    cfg.gamma = 0.3;
    cfg.kernel = bump();
    cfg.region_A = Region::rectangle(0.0, 0.5, 0.0, 1.0);
    cfg.p = 0.5;
    cfg.output_times = {0.0, 1.0};

    const PdeSolution sol = solve(cfg);
    REQUIRE(sol.times.size() == 2);

    // f_S(t) = heat flow of f_S(0), compared in spectral coefficients.
    const SpectralField c0 = project_grid(cfg.initial_f_S(), 16, cfg.gamma);
    const SpectralField expect = heat_apply(c0, 1.0);
    const SpectralField got = project_grid(sol.f_S.back(), 16, cfg.gamma);
    for (std::size_t k = 0; k < got.coeffs.size(); ++k)
        CHECK(got.coeffs[k] == Catch::Approx(expect.coeffs[k]).margin(1e-8));

    // mass f_I decays exactly exponentially.
    CHECK(sol.diagnostics.back().mass_I ==
          Catch::Approx(sol.diagnostics.front().mass_I * std::exp(-0.4)).margin(1e-8));

    // f stays inside the density window [delta1, delta2] = [1,1] here.
    CHECK(sol.f.back().min_value() >= 1.0 - 1e-10);
    CHECK(sol.f.back().max_value() <= 1.0 + 1e-10);
}

TEST_CASE("solve: alpha=0 with no infected is stationary / pure heat", "[pde]") {
    PdeConfig cfg;
    cfg.n_grid = 64;
    cfg.dt = 0.005;
    cfg.T = 0.5;
    cfg.beta = 0.5;
    cfg.alpha = 0.0;
    cfg.gamma = 0.0;
    cfg.kernel = bump();
    cfg.region_A = Region::nothing();  // f_I(0) = 0
    cfg.p = 0.5;
    cfg.output_times = {0.0, 0.5};
    const PdeSolution frozen = solve(cfg);
    CHECK(sup_diff(frozen.f_S.back(), frozen.f_S.front()) < 1e-14);

    cfg.gamma = 0.4;
    GridField wobble = GridField::from_function(
        64, [](double x, double y) { return 1.0 + 0.25 * basis_eval({3, 2, 2}, {x, y}); });
    cfg.g = wobble;
    const PdeSolution heat_only = solve(cfg);
    const GridField expect = heat_step(cfg.initial_f_S(), 0.5, 0.4);
    CHECK(sup_diff(heat_only.f_S.back(), expect) < 1e-10);
}

TEST_CASE("constant kernel + uniform g reduces to the scalar SIR ODE", "[pde]") {
    PdeConfig cfg;
    cfg.n_grid = 64;
    cfg.dt = 0.005;
    cfg.T = 5.0;
    cfg.beta = 0.6;
    cfg.alpha = 0.3;
    cfg.gamma = 0.7;  // arbitrary: uniform fields are heat-invariant
    cfg.kernel = constant_kernel();
    cfg.region_A = Region::everything();
    cfg.p = 0.05;
    cfg.output_times = {0.0, 5.0};
    const PdeSolution sol = solve(cfg);

    // Scalar RK4 oracle for S' = -b S I, I' = b S I - a I.
    double S = 1.0 - cfg.p, I = cfg.p;
    const double dt = 1e-4;
    const auto fS = [&](double s, double i) { return -cfg.beta * s * i; };
    const auto fI = [&](double s, double i) { return cfg.beta * s * i - cfg.alpha * i; };
    for (long k = 0; k < std::lround(cfg.T / dt); ++k) {
        const double k1s = fS(S, I), k1i = fI(S, I);
        const double k2s = fS(S + 0.5 * dt * k1s, I + 0.5 * dt * k1i),
                     k2i = fI(S + 0.5 * dt * k1s, I + 0.5 * dt * k1i);
        const double k3s = fS(S + 0.5 * dt * k2s, I + 0.5 * dt * k2i),
                     k3i = fI(S + 0.5 * dt * k2s, I + 0.5 * dt * k2i);
        const double k4s = fS(S + dt * k3s, I + dt * k3i), k4i = fI(S + dt * k3s, I + dt * k3i);
        S += dt / 6 * (k1s + 2 * k2s + 2 * k3s + k4s);
        I += dt / 6 * (k1i + 2 * k2i + 2 * k3i + k4i);
    }
    CHECK(sol.diagnostics.back().mass_S == Catch::Approx(S).margin(1e-6));
    CHECK(sol.diagnostics.back().mass_I == Catch::Approx(I).margin(1e-6));
}

TEST_CASE("solve_gamma_zero closed forms and cross-oracle", "[pde]") {
    PdeConfig cfg;
    cfg.n_grid = 64;
    cfg.dt = 0.005;
    cfg.T = 1.0;
    cfg.beta = 0.8;
    cfg.alpha = 0.5;
    cfg.gamma = 0.0;
    cfg.kernel = bump();
    cfg.region_A = Region::disc({0.5, 0.5}, 0.25);
    cfg.p = 0.6;
    cfg.output_times = {0.0, 1.0};

    const PdeSolution a = solve(cfg);
    const PdeSolution b = solve_gamma_zero(cfg);
    CHECK(sup_diff(a.f_S.back(), b.f_S.back()) < 1e-9);
    CHECK(sup_diff(a.f_I.back(), b.f_I.back()) < 1e-9);

    // f_I(0) = 0 freezes the system.
    PdeConfig frozen = cfg;
    frozen.region_A = Region::nothing();
    const PdeSolution fz = solve_gamma_zero(frozen);
    CHECK(sup_diff(fz.f_S.back(), fz.f_S.front()) == 0.0);

    // beta = 0: pointwise exponential decay of f_I.
    PdeConfig nobeta = cfg;
    nobeta.beta = 0.0;
    const PdeSolution nb = solve_gamma_zero(nobeta);
    const double factor = std::exp(-0.5);
    for (std::size_t k = 0; k < nb.f_I.back().size(); ++k)
        CHECK(nb.f_I.back()[k] == Catch::Approx(nb.f_I.front()[k] * factor).margin(1e-10));
}

TEST_CASE("pde invariants: order bound, density window, mass balance", "[pde]") {
    PdeConfig cfg;
    cfg.n_grid = 64;
    cfg.dt = 0.005;
    cfg.T = 2.0;
    cfg.beta = 0.9;
    cfg.alpha = 0.4;
    cfg.gamma = 0.05;
    cfg.kernel = bump();
    cfg.region_A = Region::rectangle(0.25, 0.75, 0.25, 0.75);
    cfg.p = 0.8;
    GridField g = GridField::from_function(
        64, [](double x, double y) { return 1.0 + 0.3 * basis_eval({3, 2, 2}, {x, y}); });
    g *= 1.0 / g.mass();
    cfg.g = g;
    cfg.output_times = {0.0, 0.5, 1.0, 2.0};

    const PdeSolution sol = solve(cfg);
    const double delta1 = cfg.g.min_value(), delta2 = cfg.g.max_value();
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        CHECK(sol.f_S[k].min_value() >= -1e-8);
        CHECK(sol.f_I[k].min_value() >= -1e-8);
        // order bound f_S + f_I <= f + 1e-6 pointwise
        double worst = -1e300;
        for (std::size_t i = 0; i < sol.f_S[k].size(); ++i)
            worst = std::max(worst, sol.f_S[k][i] + sol.f_I[k][i] - sol.f[k][i]);
        CHECK(worst <= 1e-6);
        // density window for f
        CHECK(sol.f[k].min_value() >= delta1 - 1e-10);
        CHECK(sol.f[k].max_value() <= delta2 + 1e-10);
    }
    // mass balance per unit time
    for (std::size_t k = 1; k < sol.times.size(); ++k) {
        const auto &d0 = sol.diagnostics[k - 1], &d1 = sol.diagnostics[k];
        const double defect = (d1.mass_S + d1.mass_I) - (d0.mass_S + d0.mass_I) +
                              cfg.alpha * (d1.int_mass_I - d0.int_mass_I);
        CHECK(std::fabs(defect) / (sol.times[k] - sol.times[k - 1]) <= 1e-6);
    }
}

TEST_CASE("grid refinement self-convergence", "[pde]") {
    // Smooth initial data (disc sampled on the grid dominates otherwise);
    // differences between successive grids must shrink.
    PdeConfig cfg;
    cfg.T = 0.5;
    cfg.dt = 0.005;
    cfg.beta = 0.9;
    cfg.alpha = 0.4;
    cfg.gamma = 0.1;
    cfg.kernel = bump();
    cfg.region_A = Region::rectangle(0.0, 0.5, 0.0, 1.0);
    cfg.p = 0.6;
    cfg.output_times = {0.5};

    auto run_n = [&](int n) {
        PdeConfig c = cfg;
        c.n_grid = n;
        return solve(c).f_I.back();
    };
    const GridField a = run_n(64), b = run_n(128), c = run_n(256);
    const double e1 = sup_diff(a, b.coarsened(2));
    const double e2 = sup_diff(b, c.coarsened(2));
    CHECK(e2 < e1);
}

TEST_CASE("dt halving gives second-order self-convergence", "[pde]") {
    PdeConfig cfg;
    cfg.n_grid = 64;
    cfg.T = 0.5;
    cfg.beta = 0.9;
    cfg.alpha = 0.4;
    cfg.gamma = 0.2;
    cfg.kernel = bump();
    cfg.region_A = Region::rectangle(0.0, 0.5, 0.0, 1.0);
    cfg.p = 0.6;
    cfg.output_times = {0.5};

    auto run_dt = [&](double dt) {
        PdeConfig c = cfg;
        c.dt = dt;
        return solve(c).f_I.back();
    };
    const GridField a = run_dt(0.008), b = run_dt(0.004), c = run_dt(0.002);
    const double ratio = sup_diff(a, b) / sup_diff(b, c);
    CHECK(ratio > 3.2);
    CHECK(ratio < 4.8);
}
