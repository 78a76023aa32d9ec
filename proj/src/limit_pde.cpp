#include "sir/limit_pde.hpp"

#include <fftw3.h>

#include <cmath>

#include "sir/spectral.hpp"

namespace sir {

struct Fft2::Impl {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
    double* real_buf = nullptr;
    fftw_complex* cplx_buf = nullptr;
    int nc = 0;  // n * (n/2 + 1)
};

Fft2::Fft2(int n) : n_(n), impl_(new Impl) {
    impl_->nc = n * (n / 2 + 1);
    impl_->real_buf = fftw_alloc_real(static_cast<std::size_t>(n) * n);
    impl_->cplx_buf = fftw_alloc_complex(impl_->nc);
    // FFTW_ESTIMATE keeps plan selection deterministic across runs.
    impl_->fwd = fftw_plan_dft_r2c_2d(n, n, impl_->real_buf, impl_->cplx_buf, FFTW_ESTIMATE);
    impl_->bwd = fftw_plan_dft_c2r_2d(n, n, impl_->cplx_buf, impl_->real_buf, FFTW_ESTIMATE);
    SIR_CHECK(impl_->fwd && impl_->bwd, "fftw plan creation failed");
}

Fft2::~Fft2() {
    fftw_destroy_plan(impl_->fwd);
    fftw_destroy_plan(impl_->bwd);
    fftw_free(impl_->real_buf);
    fftw_free(impl_->cplx_buf);
}

void Fft2::forward(const GridField& field, std::vector<double>& re,
                   std::vector<double>& im) const {
    SIR_CHECK(field.n() == n_, "Fft2::forward: wrong grid size");
    const std::size_t total = static_cast<std::size_t>(n_) * n_;
    for (std::size_t k = 0; k < total; ++k) impl_->real_buf[k] = field[k];
    fftw_execute(impl_->fwd);
    re.resize(impl_->nc);
    im.resize(impl_->nc);
    for (int k = 0; k < impl_->nc; ++k) {
        re[k] = impl_->cplx_buf[k][0];
        im[k] = impl_->cplx_buf[k][1];
    }
}

void Fft2::inverse(const std::vector<double>& re, const std::vector<double>& im,
                   GridField& field) const {
    SIR_CHECK(static_cast<int>(re.size()) == impl_->nc, "Fft2::inverse: wrong spectrum size");
    for (int k = 0; k < impl_->nc; ++k) {
        impl_->cplx_buf[k][0] = re[k];
        impl_->cplx_buf[k][1] = im[k];
    }
    fftw_execute(impl_->bwd);
    if (field.n() != n_) field = GridField(n_);
    const double scale = 1.0 / (static_cast<double>(n_) * n_);
    const std::size_t total = static_cast<std::size_t>(n_) * n_;
    for (std::size_t k = 0; k < total; ++k) field[k] = impl_->real_buf[k] * scale;
}

namespace {

/// Kernel image K(offset) on the grid, for circular convolution.
GridField kernel_image(int n, const KernelSpec& kernel) {
    GridField img(n);
    const TorusPoint origin{0.0, 0.0};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const TorusPoint q = wrap(static_cast<double>(i) / n, static_cast<double>(j) / n);
            img.at(i, j) = kernel_eval(kernel, origin, q);
        }
    return img;
}

void check_resolution(const GridField& field, const KernelSpec& kernel) {
    if (kernel.mode == KernelMode::Bump && field.h() > kernel.radius / 4.0)
        throw std::invalid_argument("kernel_convolve: grid too coarse, need h <= R/4");
}

}  // namespace

KernelConvolver::KernelConvolver(int n, const KernelSpec& kernel)
    : n_(n), fft_(n), kernel_(kernel) {
    if (kernel.mode == KernelMode::Bump) {
        fft_.forward(kernel_image(n, kernel), kre_, kim_);
        const double cell = 1.0 / (static_cast<double>(n) * n);
        for (std::size_t k = 0; k < kre_.size(); ++k) {
            kre_[k] *= cell;
            kim_[k] *= cell;
        }
    }
}

GridField KernelConvolver::convolve(const GridField& field) const {
    if (kernel_.mode == KernelMode::Constant)
        return GridField(n_, kernel_.amplitude * field.mass());
    fft_.forward(field, fr_, fi_);
    for (std::size_t k = 0; k < fr_.size(); ++k) {
        const double a = fr_[k], b = fi_[k];
        fr_[k] = a * kre_[k] - b * kim_[k];
        fi_[k] = a * kim_[k] + b * kre_[k];
    }
    GridField out;
    fft_.inverse(fr_, fi_, out);
    return out;
}

void KernelConvolver::heat_inplace(GridField& field, double dt, double gamma) const {
    if (gamma * dt == 0.0) return;
    fft_.forward(field, fr_, fi_);
    const double c = 4.0 * kPi * kPi * gamma * dt;
    const int half = n_ / 2 + 1;
    for (int i = 0; i < n_; ++i) {
        const double k1 = fft_.freq(i);
        for (int j = 0; j < half; ++j) {
            const double m = std::exp(-c * (k1 * k1 + static_cast<double>(j) * j));
            const std::size_t k = static_cast<std::size_t>(i) * half + j;
            fr_[k] *= m;
            fi_[k] *= m;
        }
    }
    fft_.inverse(fr_, fi_, field);
}

GridField kernel_convolve(const GridField& field, const KernelSpec& kernel) {
    check_resolution(field, kernel);
    KernelConvolver engine(field.n(), kernel);
    return engine.convolve(field);
}

GridField kernel_convolve_direct(const GridField& field, const KernelSpec& kernel) {
    check_resolution(field, kernel);
    const int n = field.n();
    if (kernel.mode == KernelMode::Constant)
        return GridField(n, kernel.amplitude * field.mass());
    const GridField img = kernel_image(n, kernel);
    // Support-truncated double loop over offsets where the kernel is nonzero.
    const int reach = static_cast<int>(std::ceil(kernel.radius * n)) + 1;
    GridField out(n);
    const double cell = field.h() * field.h();
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int di = -reach; di <= reach; ++di) {
                const int si = ((i - di) % n + n) % n;
                const int ki = (di % n + n) % n;
                for (int dj = -reach; dj <= reach; ++dj) {
                    const double kv = img.at(ki, (dj % n + n) % n);
                    if (kv == 0.0) continue;
                    acc += kv * field.at(si, ((j - dj) % n + n) % n);
                }
            }
            out.at(i, j) = acc * cell;
        }
    }
    return out;
}

GridField heat_step(const GridField& field, double dt, double gamma) {
    if (dt < 0) throw std::invalid_argument("heat_step: dt must be >= 0");
    if (gamma * dt == 0.0) return field;
    KernelSpec dummy;
    dummy.mode = KernelMode::Constant;
    KernelConvolver engine(field.n(), dummy);
    GridField out = field;
    engine.heat_inplace(out, dt, gamma);
    return out;
}

GridField infection_term(const GridField& f_S, const GridField& f_I, const GridField& f,
                         const KernelSpec& kernel, double beta) {
    const GridField denom = kernel_convolve(f, kernel);
    const double dmin = denom.min_value();
    if (dmin < 1e-12)
        throw std::runtime_error("infection_term: K*f fell below 1e-12 (min " +
                                 std::to_string(dmin) + "), density bounds violated");
    const int n = f_S.n();
    GridField ratio(n);
    for (std::size_t k = 0; k < ratio.size(); ++k) ratio[k] = f_I[k] / denom[k];
    GridField conv = kernel_convolve(ratio, kernel);
    GridField out(n);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = beta * f_S[k] * conv[k];
    return out;
}

void PdeConfig::validate() const {
    auto fail = [](const char* m) { throw std::invalid_argument(std::string("PdeConfig: ") + m); };
    if (n_grid < 64 || (n_grid & (n_grid - 1)) != 0) fail("n_grid must be a power of two >= 64");
    if (!(dt > 0) || dt > 0.01) fail("dt must lie in (0, 0.01]");
    if (!(T >= 0)) fail("T must be >= 0");
    if (!(beta >= 0) || !(alpha >= 0) || !(gamma >= 0)) fail("rates must be >= 0");
    if (!(p > 0) || p > 1) fail("p must lie in (0, 1]");
    kernel.validate();
    if (g.n() != 0 && g.n() != n_grid) fail("g must live on the configured grid");
}

GridField PdeConfig::density() const {
    if (g.n() == n_grid) return g;
    return GridField(n_grid, 1.0);
}

GridField PdeConfig::initial_f_S() const {
    GridField dens = density();
    GridField out(n_grid);
    for (int i = 0; i < n_grid; ++i)
        for (int j = 0; j < n_grid; ++j) {
            const TorusPoint c{dens.cell_center_1(i), dens.cell_center_2(j)};
            const double ind = region_A.contains(c) ? 1.0 - p : 1.0;
            out.at(i, j) = ind * dens.at(i, j);
        }
    return out;
}

GridField PdeConfig::initial_f_I() const {
    GridField dens = density();
    GridField out(n_grid);
    for (int i = 0; i < n_grid; ++i)
        for (int j = 0; j < n_grid; ++j) {
            const TorusPoint c{dens.cell_center_1(i), dens.cell_center_2(j)};
            out.at(i, j) = region_A.contains(c) ? p * dens.at(i, j) : 0.0;
        }
    return out;
}

std::size_t PdeSolution::index_of_time(double t) const {
    std::size_t best = 0;
    double err = 1e300;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double e = std::fabs(times[k] - t);
        if (e < err) {
            err = e;
            best = k;
        }
    }
    return best;
}

namespace {

void record(PdeSolution& sol, double t, const GridField& fS, const GridField& fI,
            const GridField& f, double int_mass_I) {
    sol.times.push_back(t);
    sol.f_S.push_back(fS);
    sol.f_I.push_back(fI);
    sol.f.push_back(f);
    sol.diagnostics.push_back(PdeSolution::Diag{fS.mass(), fI.mass(), f.mass(), fS.min_value(),
                                                fI.min_value(), fS.max_value(), fI.max_value(),
                                                int_mass_I});
}

/// Map requested output times to step indices, so outputs land on the grid.
std::vector<long> output_steps(const std::vector<double>& outputs, double dt, long steps) {
    std::vector<long> idx;
    for (double t : outputs) {
        long k = std::lround(t / dt);
        if (k < 0) k = 0;
        if (k > steps) k = steps;
        idx.push_back(k);
    }
    return idx;
}

bool wants_step(const std::vector<long>& idx, long step) {
    for (long k : idx)
        if (k == step) return true;
    return false;
}

void check_positivity(const GridField& fS, const GridField& fI, double t) {
    if (fS.min_value() < -1e-8 || fI.min_value() < -1e-8)
        throw std::runtime_error("pde solve: negativity beyond -1e-8 at t=" + std::to_string(t) +
                                 " (reduce dt)");
}

/// RK4 update of the reaction system df_S = -G, df_I = G - alpha f_I over dt,
/// with the total density (hence the denominator K*f) frozen. Returns the
/// stage-weighted increment of integral mass_I dt; accumulated this way,
/// mass_S + mass_I + alpha * int_mass_I is a linear invariant that RK4
/// preserves exactly.
double reaction_rk4(GridField& fS, GridField& fI, const GridField& denom,
                    const KernelConvolver& engine, double beta, double alpha, double dt) {
    const std::size_t m = fS.size();
    const int n = fS.n();
    auto rate = [&](const GridField& s, const GridField& i, GridField& dS, GridField& dI) {
        GridField ratio(n);
        for (std::size_t k = 0; k < m; ++k) ratio[k] = i[k] / denom[k];
        const GridField conv = engine.convolve(ratio);
        for (std::size_t k = 0; k < m; ++k) {
            const double g = beta * s[k] * conv[k];
            dS[k] = -g;
            dI[k] = g - alpha * i[k];
        }
    };
    GridField k1S(n), k1I(n), k2S(n), k2I(n), k3S(n), k3I(n), k4S(n), k4I(n), tS(n), tI(n);
    rate(fS, fI, k1S, k1I);
    const double m1 = fI.mass();
    for (std::size_t k = 0; k < m; ++k) {
        tS[k] = fS[k] + 0.5 * dt * k1S[k];
        tI[k] = fI[k] + 0.5 * dt * k1I[k];
    }
    rate(tS, tI, k2S, k2I);
    const double m2 = tI.mass();
    for (std::size_t k = 0; k < m; ++k) {
        tS[k] = fS[k] + 0.5 * dt * k2S[k];
        tI[k] = fI[k] + 0.5 * dt * k2I[k];
    }
    rate(tS, tI, k3S, k3I);
    const double m3 = tI.mass();
    for (std::size_t k = 0; k < m; ++k) {
        tS[k] = fS[k] + dt * k3S[k];
        tI[k] = fI[k] + dt * k3I[k];
    }
    rate(tS, tI, k4S, k4I);
    const double m4 = tI.mass();
    for (std::size_t k = 0; k < m; ++k) {
        fS[k] += dt / 6.0 * (k1S[k] + 2.0 * k2S[k] + 2.0 * k3S[k] + k4S[k]);
        fI[k] += dt / 6.0 * (k1I[k] + 2.0 * k2I[k] + 2.0 * k3I[k] + k4I[k]);
    }
    return dt / 6.0 * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
}

}  // namespace

PdeSolution solve(const PdeConfig& config) {
    config.validate();
    GridField fS = config.initial_f_S();
    GridField fI = config.initial_f_I();
    GridField f = config.density();
    const KernelConvolver engine(config.n_grid, config.kernel);

    std::vector<double> outputs = config.output_times;
    if (outputs.empty()) outputs = {0.0, config.T};

    const long steps = std::lround(config.T / config.dt);
    const double dt = steps > 0 ? config.T / static_cast<double>(steps) : config.dt;
    const std::vector<long> out_steps = output_steps(outputs, dt, steps);

    PdeSolution sol;
    double int_mass_I = 0.0;
    if (wants_step(out_steps, 0)) record(sol, 0.0, fS, fI, f, int_mass_I);
    for (long step = 0; step < steps; ++step) {
        engine.heat_inplace(fS, 0.5 * dt, config.gamma);
        engine.heat_inplace(fI, 0.5 * dt, config.gamma);
        engine.heat_inplace(f, 0.5 * dt, config.gamma);
        const GridField denom = engine.convolve(f);
        if (denom.min_value() < 1e-12)
            throw std::runtime_error("pde solve: K*f fell below 1e-12");
        int_mass_I += reaction_rk4(fS, fI, denom, engine, config.beta, config.alpha, dt);
        engine.heat_inplace(fS, 0.5 * dt, config.gamma);
        engine.heat_inplace(fI, 0.5 * dt, config.gamma);
        engine.heat_inplace(f, 0.5 * dt, config.gamma);
        const double t = (step + 1) * dt;
        check_positivity(fS, fI, t);
        if (wants_step(out_steps, step + 1)) record(sol, t, fS, fI, f, int_mass_I);
    }
    SIR_CHECK(!sol.times.empty(), "pde solve: no output times recorded");
    return sol;
}

PdeSolution solve_gamma_zero(const PdeConfig& config) {
    config.validate();
    if (config.gamma != 0.0)
        throw std::invalid_argument("solve_gamma_zero: config.gamma must be 0");
    GridField fS = config.initial_f_S();
    GridField fI = config.initial_f_I();
    const GridField f = config.density();
    const KernelConvolver engine(config.n_grid, config.kernel);
    const GridField denom = engine.convolve(f);
    if (denom.min_value() < 1e-12)
        throw std::runtime_error("solve_gamma_zero: K*g fell below 1e-12");

    std::vector<double> outputs = config.output_times;
    if (outputs.empty()) outputs = {0.0, config.T};

    const long steps = std::lround(config.T / config.dt);
    const double dt = steps > 0 ? config.T / static_cast<double>(steps) : config.dt;
    const std::vector<long> out_steps = output_steps(outputs, dt, steps);

    PdeSolution sol;
    double int_mass_I = 0.0;
    if (wants_step(out_steps, 0)) record(sol, 0.0, fS, fI, f, int_mass_I);
    for (long step = 0; step < steps; ++step) {
        int_mass_I += reaction_rk4(fS, fI, denom, engine, config.beta, config.alpha, dt);
        const double t = (step + 1) * dt;
        check_positivity(fS, fI, t);
        if (wants_step(out_steps, step + 1)) record(sol, t, fS, fI, f, int_mass_I);
    }
    SIR_CHECK(!sol.times.empty(), "solve_gamma_zero: no output times recorded");
    return sol;
}

}  // namespace sir
