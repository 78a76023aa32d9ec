#include "sir/fluctuations.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <thread>

namespace sir {

namespace {

/// Deterministic replicate-parallel map: result slots are indexed by r.
void parallel_replicates(int replicates, int threads, const std::function<void(int)>& body) {
    threads = std::max(1, threads);
    if (threads == 1) {
        for (int r = 0; r < replicates; ++r) body(r);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic_int next{0};
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (;;) {
                const int r = next.fetch_add(1);
                if (r >= replicates) return;
                body(r);
            }
        });
    for (auto& th : pool) th.join();
}

/// Symmetric PSD square root with eigenvalue clipping at zero. Eigenvalues
/// below a relative tolerance are zeroed too, so exactly-degenerate noise
/// directions (e.g. the conserved mass mode) carry no roundoff noise.
/// Returns the smallest eigenvalue seen (diagnostic).
double psd_sqrt(const Eigen::MatrixXd& m, Eigen::MatrixXd& root) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    const double min_ev = ev.minCoeff();
    const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (int i = 0; i < ev.size(); ++i) ev[i] = ev[i] > tol ? std::sqrt(ev[i]) : 0.0;
    root = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return min_ev;
}

/// Pseudo-inverse of a symmetric PSD matrix (eigenvalues below tol dropped).
Eigen::MatrixXd psd_pinv(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    Eigen::VectorXd ev = es.eigenvalues();
    const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
    for (int i = 0; i < ev.size(); ++i) ev[i] = ev[i] > tol ? 1.0 / ev[i] : 0.0;
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::array<std::array<double, 3>, 3> CovarianceReport::matrix() const {
    return {{{alpha_p, gamma_p, eta_p}, {gamma_p, beta_p, lambda_p}, {eta_p, lambda_p, sigma_sq}}};
}

double CovarianceReport::min_eigenvalue() const {
    Eigen::Matrix3d m;
    m << alpha_p, gamma_p, eta_p, gamma_p, beta_p, lambda_p, eta_p, lambda_p, sigma_sq;
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(m).eigenvalues().minCoeff();
}

CovarianceReport initial_covariances(const ScalarField& phi, const ScalarField& psi,
                                     const ScalarField& phi2, const Region& A, double p,
                                     const GridField& g) {
    if (g.n() < 128)
        throw std::invalid_argument("initial_covariances: quadrature grid must be >= 128");
    const int n = g.n();
    const double cell = g.h() * g.h();
    // One quadrature pass for every integral in the closed forms.
    double IA_phi = 0, IA_phisq = 0, IAc_phi = 0, IAc_phisq = 0;
    double IA_psi = 0, IA_psisq = 0;
    double I_phi2 = 0, I_phi2sq = 0;
    double IA_phiphi2 = 0, IAc_phiphi2 = 0, IA_psiphi2 = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const TorusPoint x{g.cell_center_1(i), g.cell_center_2(j)};
            const double w = g.at(i, j) * cell;
            const double vphi = phi(x), vpsi = psi(x), vphi2 = phi2(x);
            I_phi2 += vphi2 * w;
            I_phi2sq += vphi2 * vphi2 * w;
            if (A.contains(x)) {
                IA_phi += vphi * w;
                IA_phisq += vphi * vphi * w;
                IA_psi += vpsi * w;
                IA_psisq += vpsi * vpsi * w;
                IA_phiphi2 += vphi * vphi2 * w;
                IA_psiphi2 += vpsi * vphi2 * w;
            } else {
                IAc_phi += vphi * w;
                IAc_phisq += vphi * vphi * w;
                IAc_phiphi2 += vphi * vphi2 * w;
            }
        }
    CovarianceReport r;
    const double q = 1.0 - p;
    r.alpha_p = q * IA_phisq - q * q * IA_phi * IA_phi + IAc_phisq - IAc_phi * IAc_phi -
                2.0 * q * IA_phi * IAc_phi;
    r.beta_p = p * IA_psisq - p * p * IA_psi * IA_psi;
    r.sigma_sq = I_phi2sq - I_phi2 * I_phi2;
    r.gamma_p = -p * q * IA_phi * IA_psi - p * IAc_phi * IA_psi;
    r.eta_p = q * IA_phiphi2 - q * IA_phi * I_phi2 + IAc_phiphi2 - IAc_phi * I_phi2;
    r.lambda_p = p * IA_psiphi2 - p * IA_psi * I_phi2;
    return r;
}

Eigen::Matrix3d McCltResult::z_scores() const {
    const auto m = predicted.matrix();
    Eigen::Matrix3d z;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            z(i, j) = (sample_cov(i, j) - m[i][j]) / bootstrap_se(i, j);
    return z;
}

McCltResult mc_initial_clt(int N, int M, const InitialCondition& initial, const ScalarField& phi,
                           const ScalarField& psi, const ScalarField& phi2,
                           const GridField& quad_g, std::uint64_t base_seed, int threads) {
    if (M < 1000) throw std::invalid_argument("mc_initial_clt: need at least 1000 replicates");
    initial.validate();

    // Deterministic reference pairings against the limit measures.
    const int nq = quad_g.n();
    const double cell = quad_g.h() * quad_g.h();
    double ref_S = 0, ref_I = 0, ref_Z = 0;
    for (int i = 0; i < nq; ++i)
        for (int j = 0; j < nq; ++j) {
            const TorusPoint x{quad_g.cell_center_1(i), quad_g.cell_center_2(j)};
            const double w = quad_g.at(i, j) * cell;
            const bool inA = initial.region_A.contains(x);
            ref_S += (inA ? 1.0 - initial.p : 1.0) * phi(x) * w;
            ref_I += (inA ? initial.p : 0.0) * psi(x) * w;
            ref_Z += phi2(x) * w;
        }

    const double sqn = std::sqrt(static_cast<double>(N));
    std::vector<Eigen::Vector3d> samples(M);
    parallel_replicates(M, threads, [&](int r) {
        Rng rng(replicate_seed(base_seed, r));
        SimConfig cfg;  // only the initial condition matters here
        cfg.N = N;
        cfg.initial = initial;
        const Population pop = sample_initial(cfg, rng);
        double pS = 0, pI = 0, pZ = 0;
        const double w = 1.0 / N;
        for (int i = 0; i < N; ++i) {
            const TorusPoint x = pop.position(i);
            pZ += w * phi2(x);
            if (pop.state[i] == Health::S) pS += w * phi(x);
            if (pop.state[i] == Health::I) pI += w * psi(x);
        }
        samples[r] = Eigen::Vector3d(sqn * (pS - ref_S), sqn * (pI - ref_I), sqn * (pZ - ref_Z));
    });

    auto cov_of = [](const std::vector<Eigen::Vector3d>& xs, const std::vector<int>& idx) {
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (int k : idx) mean += xs[k];
        mean /= static_cast<double>(idx.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (int k : idx) {
            const Eigen::Vector3d d = xs[k] - mean;
            cov += d * d.transpose();
        }
        return Eigen::Matrix3d(cov / static_cast<double>(idx.size() - 1));
    };

    McCltResult out;
    std::vector<int> all(M);
    for (int k = 0; k < M; ++k) all[k] = k;
    out.sample_cov = cov_of(samples, all);

    const int B = 200;  // bootstrap resamples
    std::vector<Eigen::Matrix3d> boots(B);
    parallel_replicates(B, threads, [&](int b) {
        Rng rng(replicate_seed(base_seed ^ 0x9e3779b97f4a7c15ULL, b));
        std::vector<int> idx(M);
        for (int k = 0; k < M; ++k) idx[k] = static_cast<int>(rng.uniform_int(M));
        boots[b] = cov_of(samples, idx);
    });
    Eigen::Matrix3d mean_boot = Eigen::Matrix3d::Zero();
    for (const auto& bm : boots) mean_boot += bm;
    mean_boot /= B;
    Eigen::Matrix3d var_boot = Eigen::Matrix3d::Zero();
    for (const auto& bm : boots) var_boot += (bm - mean_boot).cwiseProduct(bm - mean_boot);
    out.bootstrap_se = (var_boot / (B - 1)).cwiseSqrt();

    out.predicted = initial_covariances(phi, psi, phi2, initial.region_A, initial.p, quad_g);
    return out;
}

double FluctuationField::pair(const ScalarField& f) const {
    double emp = 0.0;
    for (std::size_t k = 0; k < atoms.points.size(); ++k)
        emp += atoms.weights[k] * f(atoms.points[k]);
    double ref = 0.0;
    const int n = reference.n();
    const double cell = reference.h() * reference.h();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            ref += f(TorusPoint{reference.cell_center_1(i), reference.cell_center_2(j)}) *
                   reference.at(i, j) * cell;
    return scale * (emp - ref);
}

SpectralField FluctuationField::project(int cutoff, double gamma) const {
    const SpectralField emp = project_measure(atoms.points, atoms.weights, cutoff, gamma);
    const SpectralField ref = project_grid(reference, cutoff, gamma);
    SpectralField out{gamma, cutoff, std::vector<double>(emp.coeffs.size())};
    for (std::size_t k = 0; k < out.coeffs.size(); ++k)
        out.coeffs[k] = scale * (emp.coeffs[k] - ref.coeffs[k]);
    return out;
}

FluctuationField empirical_fluctuation(const WeightedPoints& empirical, const GridField& reference,
                                       double sqrt_n) {
    FluctuationField f;
    f.atoms = empirical;
    f.reference = reference;
    f.scale = sqrt_n;
    return f;
}

QvReport qv_check(const std::vector<RunResult>& runs, int N) {
    SIR_CHECK(!runs.empty(), "qv_check: need at least one run");
    const auto& proto = runs.front();
    QvReport report;
    const double n = static_cast<double>(N);
    for (std::size_t t = 0; t < proto.tracks.size(); ++t) {
        for (std::size_t s = 0; s < proto.tracks[t].samples.size(); ++s) {
            std::array<std::vector<double>, 3> comp;  // M, L, H compensations
            for (const auto& r : runs) {
                const auto& smp = r.tracks[t].samples[s];
                comp[0].push_back(n * smp.M * smp.M - smp.qv_M);
                comp[1].push_back(n * smp.L * smp.L - smp.qv_L);
                comp[2].push_back(n * smp.H * smp.H - smp.qv_H);
            }
            const char* names[3] = {"M", "L", "H"};
            for (int m = 0; m < 3; ++m) {
                QvEntry e;
                e.martingale = names[m];
                e.test_function = proto.tracks[t].test_function;
                e.time = proto.tracks[t].samples[s].time;
                double mean = 0;
                for (double v : comp[m]) mean += v;
                mean /= static_cast<double>(comp[m].size());
                double var = 0;
                for (double v : comp[m]) var += (v - mean) * (v - mean);
                var /= static_cast<double>(comp[m].size() - 1);
                e.estimate = mean;
                e.se = std::sqrt(var / static_cast<double>(comp[m].size()));
                e.z = e.se > 0 ? mean / e.se : 0.0;
                report.entries.push_back(e);
            }
        }
    }
    return report;
}

QvReport qv_check_mc(const SimConfig& config, const std::vector<TestFunction>& tracked,
                     int replicates, int threads) {
    std::vector<RunResult> runs(replicates);
    parallel_replicates(replicates, threads, [&](int r) {
        SimConfig cfg = config;
        cfg.seed = replicate_seed(config.seed, r);
        runs[r] = run(cfg, tracked);
    });
    return qv_check(runs, config.N);
}

namespace {

struct BasisTables {
    Eigen::MatrixXd val, dx, dy;  // n_modes x n_cells
    double cell = 0;
    int n_grid = 0;

    BasisTables(const BasisSet& basis, int n) {
        n_grid = n;
        cell = 1.0 / (static_cast<double>(n) * n);
        const int modes = static_cast<int>(basis.size());
        val.resize(modes, static_cast<long>(n) * n);
        dx.resize(modes, static_cast<long>(n) * n);
        dy.resize(modes, static_cast<long>(n) * n);
        for (int k = 0; k < modes; ++k) {
            long c = 0;
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j, ++c) {
                    const TorusPoint x{(i + 0.5) / n, (j + 0.5) / n};
                    val(k, c) = basis_eval(basis[k], x);
                    const auto g = basis_grad(basis[k], x);
                    dx(k, c) = g[0];
                    dy(k, c) = g[1];
                }
        }
    }

    Eigen::VectorXd weights(const GridField& w) const {
        Eigen::VectorXd out(static_cast<long>(w.size()));
        for (std::size_t k = 0; k < w.size(); ++k) out[k] = w[k] * cell;
        return out;
    }

    /// Phi diag(w * cell) Phi^T
    Eigen::MatrixXd sandwich(const GridField& w) const {
        const Eigen::VectorXd d = weights(w);
        return val * d.asDiagonal() * val.transpose();
    }

    Eigen::MatrixXd sandwich_grad(const GridField& w) const {
        const Eigen::VectorXd d = weights(w);
        return dx * d.asDiagonal() * dx.transpose() + dy * d.asDiagonal() * dy.transpose();
    }

    Eigen::VectorXd project(const GridField& f) const { return val * weights(f); }
};

OperatorMatrices assemble_with_tables(const GridField& f_S, const GridField& f_I,
                                      const GridField& f, const BasisTables& tables,
                                      const KernelConvolver& conv) {
    const int n = f_S.n();
    const int modes = static_cast<int>(tables.val.rows());
    const GridField denom = conv.convolve(f);
    if (denom.min_value() < 1e-12)
        throw std::runtime_error("assemble_operators: K*f fell below 1e-12");

    OperatorMatrices out;
    // G^I is multiplication by kappa_I = K*(f_I/(K*f)).
    GridField ratio(n);
    for (std::size_t c = 0; c < ratio.size(); ++c) ratio[c] = f_I[c] / denom[c];
    const GridField kappa_I = conv.convolve(ratio);
    out.B_I = tables.sandwich(kappa_I);

    // G^S f_k = (K*(f_k f_S)) / (K*f),
    // G^{S,I} f_k = K*( (K*(f_k f_S)) f_I / (K*f)^2 ).
    out.B_S.resize(modes, modes);
    out.B_SI.resize(modes, modes);
    GridField fk_fS(n), inner(n);
    for (int k = 0; k < modes; ++k) {
        for (std::size_t c = 0; c < fk_fS.size(); ++c)
            fk_fS[c] = tables.val(k, static_cast<long>(c)) * f_S[c];
        const GridField conv1 = conv.convolve(fk_fS);
        GridField gS(n);
        for (std::size_t c = 0; c < gS.size(); ++c) gS[c] = conv1[c] / denom[c];
        out.B_S.col(k) = tables.project(gS);
        for (std::size_t c = 0; c < inner.size(); ++c)
            inner[c] = conv1[c] * f_I[c] / (denom[c] * denom[c]);
        out.B_SI.col(k) = tables.project(conv.convolve(inner));
    }
    return out;
}

}  // namespace

OperatorMatrices assemble_operators(const GridField& f_S, const GridField& f_I, const GridField& f,
                                    const KernelSpec& kernel, int cutoff) {
    const BasisSet basis(cutoff);
    if (f_S.n() <= 2 * cutoff)
        throw std::invalid_argument("assemble_operators: grid too coarse for the cutoff");
    const BasisTables tables(basis, f_S.n());
    const KernelConvolver conv(f_S.n(), kernel);
    return assemble_with_tables(f_S, f_I, f, tables, conv);
}

void GalerkinConfig::validate() const {
    auto fail = [](const char* m) {
        throw std::invalid_argument(std::string("GalerkinConfig: ") + m);
    };
    if (cutoff < 2 || cutoff % 2 != 0) fail("cutoff must be even >= 2");
    if (!(dt > 0)) fail("dt must be positive");
    if (!(T > 0)) fail("T must be positive");
    if (refresh_every < 1) fail("refresh_every must be >= 1");
    if (!(beta >= 0) || !(alpha >= 0) || gamma < 0) fail("rates must be non-negative");
    kernel.validate();
}

GalerkinWorkspace::GalerkinWorkspace(const GalerkinConfig& config, const PdeSolution& pde)
    : config_(config), basis_(config.cutoff), grid_ref_(pde.f.front()) {
    config_.validate();
    steps_ = std::lround(config.T / config.dt);
    SIR_CHECK(steps_ >= 1, "GalerkinWorkspace: T/dt must be >= 1");
    const int n = pde.f.front().n();
    if (n <= 2 * config.cutoff)
        throw std::invalid_argument("GalerkinWorkspace: PDE grid too coarse for cutoff");

    const BasisTables tables(basis_, n);
    phi_table_ = tables.val;
    const KernelConvolver conv(n, config.kernel);
    const int modes = static_cast<int>(basis_.size());

    slot_of_step_.resize(steps_);
    const long n_slots = (steps_ + config.refresh_every - 1) / config.refresh_every;
    slots_.resize(n_slots);
    for (long s = 0; s < n_slots; ++s) {
        const double t_slot = s * config.refresh_every * config.dt;
        const std::size_t pidx = pde.index_of_time(t_slot);
        if (std::fabs(pde.times[pidx] - t_slot) > config.refresh_every * config.dt)
            throw std::invalid_argument(
                "GalerkinWorkspace: PDE solution lacks outputs near the refresh times");
        const GridField& fS = pde.f_S[pidx];
        const GridField& fI = pde.f_I[pidx];
        const GridField& f = pde.f[pidx];
        Slot& slot = slots_[s];
        slot.ops = assemble_with_tables(fS, fI, f, tables, conv);

        // Joint noise covariance blocks in the raw basis (rates per unit time):
        //   H:  2 gamma D(f)     H-W1: 2 gamma D(f_S)     H-W2: 2 gamma D(f_I)
        //   W1: beta Q + 2 gamma D(f_S)
        //   W2: beta Q + 2 gamma D(f_I) + alpha R          W1-W2: -beta Q
        // with Q_jk = int f_S f_j f_k kappa_I, R_jk = int f_I f_j f_k and
        // D(w)_jk = int w grad f_j . grad f_k.
        const GridField denom = conv.convolve(f);
        GridField ratio(n);
        for (std::size_t c = 0; c < ratio.size(); ++c) ratio[c] = fI[c] / denom[c];
        const GridField kappa_I = conv.convolve(ratio);
        GridField qweight(n);
        for (std::size_t c = 0; c < qweight.size(); ++c) qweight[c] = fS[c] * kappa_I[c];
        const Eigen::MatrixXd Q = tables.sandwich(qweight);
        const Eigen::MatrixXd R = tables.sandwich(fI);
        const double g2 = 2.0 * config.gamma;
        Eigen::MatrixXd D_f, D_S, D_I;
        if (config.gamma > 0) {
            D_f = tables.sandwich_grad(f);
            D_S = tables.sandwich_grad(fS);
            D_I = tables.sandwich_grad(fI);
        } else {
            D_f = D_S = D_I = Eigen::MatrixXd::Zero(modes, modes);
        }

        const Eigen::MatrixXd C_hh = g2 * D_f;
        Eigen::MatrixXd C_wh(2 * modes, modes);
        C_wh.topRows(modes) = g2 * D_S;
        C_wh.bottomRows(modes) = g2 * D_I;
        Eigen::MatrixXd C_ww(2 * modes, 2 * modes);
        C_ww.topLeftCorner(modes, modes) = config.beta * Q + g2 * D_S;
        C_ww.topRightCorner(modes, modes) = -config.beta * Q;
        C_ww.bottomLeftCorner(modes, modes) = -config.beta * Q;
        C_ww.bottomRightCorner(modes, modes) = config.beta * Q + g2 * D_I + config.alpha * R;

        const double ev_h = psd_sqrt(C_hh, slot.sqrt_H);
        const Eigen::MatrixXd pinv_hh = psd_pinv(C_hh);
        slot.cond_mean = C_wh * pinv_hh;
        const Eigen::MatrixXd schur = C_ww - slot.cond_mean * C_wh.transpose();
        const double ev_w = psd_sqrt(schur, slot.cond_sqrt);
        slot.min_eigenvalue = std::min(ev_h, ev_w);
        if (slot.min_eigenvalue < -1e-10)
            std::cerr << "galerkin: clipping noise covariance eigenvalue " << slot.min_eigenvalue
                      << " at slot " << s << "\n";
    }
    for (long step = 0; step < steps_; ++step)
        slot_of_step_[step] = std::min<long>(step / config.refresh_every, n_slots - 1);
}

const GalerkinWorkspace::Slot& GalerkinWorkspace::slot_for_step(long step) const {
    return slots_[slot_of_step_[step]];
}

Eigen::VectorXd GalerkinWorkspace::project_function(const ScalarField& f) const {
    const int n = grid_ref_.n();
    const double cell = grid_ref_.h() * grid_ref_.h();
    Eigen::VectorXd w(static_cast<long>(n) * n);
    long c = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j, ++c)
            w[c] = f(TorusPoint{(i + 0.5) / n, (j + 0.5) / n}) * cell;
    return phi_table_ * w;
}

ZTrajectory galerkin_solve_Z(const Eigen::VectorXd& z0, const GalerkinWorkspace& ws, Rng& rng) {
    const GalerkinConfig& cfg = ws.config();
    const long steps = ws.steps();
    const int modes = ws.n_modes();
    SIR_CHECK(z0.size() == modes, "galerkin_solve_Z: z0 has wrong dimension");

    std::vector<double> damp(modes);
    for (int k = 0; k < modes; ++k)
        damp[k] = std::exp(-eigenvalue(ws.basis()[k], cfg.gamma) * cfg.dt);

    ZTrajectory out;
    out.times.push_back(0.0);
    out.coeffs.push_back(z0);
    Eigen::VectorXd z = z0;
    const double sdt = std::sqrt(cfg.dt);
    Eigen::VectorXd normals(modes);
    for (long step = 0; step < steps; ++step) {
        if (cfg.gamma > 0) {
            const auto& slot = ws.slot_for_step(step);
            for (int k = 0; k < modes; ++k) {
                z[k] *= damp[k];
                normals[k] = rng.gaussian();
            }
            const Eigen::VectorXd xi = sdt * (slot.sqrt_H * normals);
            z += xi;
            out.noise.push_back(xi);
        } else {
            out.noise.push_back(Eigen::VectorXd::Zero(modes));
        }
        out.times.push_back((step + 1) * cfg.dt);
        out.coeffs.push_back(z);
    }
    return out;
}

UvTrajectory galerkin_solve_UV(const Eigen::VectorXd& u0, const Eigen::VectorXd& v0,
                               const ZTrajectory& z, const GalerkinWorkspace& ws, Rng& rng) {
    const GalerkinConfig& cfg = ws.config();
    const long steps = ws.steps();
    const int modes = ws.n_modes();
    SIR_CHECK(u0.size() == modes && v0.size() == modes, "galerkin_solve_UV: wrong dimension");
    SIR_CHECK(static_cast<long>(z.noise.size()) == steps,
              "galerkin_solve_UV: Z trajectory does not match the workspace steps");

    std::vector<double> damp(modes);
    for (int k = 0; k < modes; ++k)
        damp[k] = std::exp(-eigenvalue(ws.basis()[k], cfg.gamma) * cfg.dt);
    const double vdamp = std::exp(-cfg.alpha * cfg.dt);

    UvTrajectory out;
    out.times.push_back(0.0);
    out.u.push_back(u0);
    out.v.push_back(v0);
    Eigen::VectorXd u = u0, v = v0;
    const double sdt = std::sqrt(cfg.dt);
    Eigen::VectorXd normals(2 * modes), w12(2 * modes);
    for (long step = 0; step < steps; ++step) {
        const auto& slot = ws.slot_for_step(step);
        const Eigen::VectorXd& zc = z.coeffs[step];
        const Eigen::VectorXd driftU =
            cfg.beta * (slot.ops.B_SI.transpose() * zc - slot.ops.B_I.transpose() * u -
                        slot.ops.B_S.transpose() * v);
        const Eigen::VectorXd driftV =
            cfg.beta * (-slot.ops.B_SI.transpose() * zc + slot.ops.B_I.transpose() * u +
                        slot.ops.B_S.transpose() * v);
        for (int k = 0; k < 2 * modes; ++k) normals[k] = rng.gaussian();
        w12 = slot.cond_mean * z.noise[step] + sdt * (slot.cond_sqrt * normals);
        for (int k = 0; k < modes; ++k) {
            u[k] = damp[k] * u[k] + cfg.dt * driftU[k] + w12[k];
            v[k] = vdamp * damp[k] * v[k] + cfg.dt * driftV[k] + w12[modes + k];
        }
        out.times.push_back((step + 1) * cfg.dt);
        out.u.push_back(u);
        out.v.push_back(v);
    }
    return out;
}

InitialFluctuationSampler::InitialFluctuationSampler(int cutoff, const Region& A, double p,
                                                     const GridField& g)
    : p_(p) {
    const BasisSet basis(cutoff);
    const int modes = static_cast<int>(basis.size());
    const int n = g.n();
    const long cells = static_cast<long>(n) * n;
    const double cell = g.h() * g.h();
    const double sqcell = std::sqrt(cell);

    w1_U_.resize(modes, cells);
    w1_V_.resize(modes, cells);
    w1_Z_.resize(modes, cells);
    w2_UV_.resize(modes, cells);
    corr_U_ = Eigen::VectorXd::Zero(modes);
    corr_V_ = Eigen::VectorXd::Zero(modes);
    corr_Z_ = Eigen::VectorXd::Zero(modes);
    sqrtg_w_.resize(cells);

    long c = 0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j, ++c) {
            const TorusPoint x{g.cell_center_1(i), g.cell_center_2(j)};
            const double gv = g.at(i, j);
            const double sg = std::sqrt(gv);
            const bool inA = A.contains(x);
            sqrtg_w_[c] = sg * sqcell;
            const double mixS = inA ? 1.0 - p : 1.0;
            const double bern = inA ? std::sqrt((p - p * p) * gv) : 0.0;
            for (int k = 0; k < modes; ++k) {
                const double fv = basis_eval(basis[k], x);
                w1_U_(k, c) = fv * sg * mixS * sqcell;
                w1_V_(k, c) = inA ? fv * sg * sqcell : 0.0;
                w1_Z_(k, c) = fv * sg * sqcell;
                w2_UV_(k, c) = fv * bern * sqcell;
                corr_U_[k] += mixS * fv * gv * cell;
                corr_V_[k] += inA ? fv * gv * cell : 0.0;
                corr_Z_[k] += fv * gv * cell;
            }
        }
}

InitialFluctuationSampler::Sample InitialFluctuationSampler::draw(Rng& rng) const {
    const long cells = sqrtg_w_.size();
    Eigen::VectorXd xi1(cells), xi2(cells);
    for (long c = 0; c < cells; ++c) xi1[c] = rng.gaussian();
    for (long c = 0; c < cells; ++c) xi2[c] = rng.gaussian();
    const double w1_sqrtg = sqrtg_w_.dot(xi1);
    Sample s;
    s.u0 = w1_U_ * xi1 - corr_U_ * w1_sqrtg + w2_UV_ * xi2;
    s.v0 = p_ * (w1_V_ * xi1) - p_ * corr_V_ * w1_sqrtg - w2_UV_ * xi2;
    s.z0 = w1_Z_ * xi1 - corr_Z_ * w1_sqrtg;
    return s;
}

}  // namespace sir
