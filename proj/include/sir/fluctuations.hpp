#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <string>
#include <vector>

#include "sir/grid_field.hpp"
#include "sir/limit_pde.hpp"
#include "sir/rng.hpp"
#include "sir/simulator.hpp"
#include "sir/spectral.hpp"
#include "sir/torus.hpp"

namespace sir {

using ScalarField = std::function<double(const TorusPoint&)>;

/// The six initial-fluctuation covariance functionals for test functions
/// (phi, psi, phi2), region A, infection probability p and density g:
/// Var(U0,phi)=alpha_p, Var(V0,psi)=beta_p, Var(Z0,phi2)=sigma_sq,
/// Cov(U,V)=gamma_p, Cov(U,Z)=eta_p, Cov(V,Z)=lambda_p.
struct CovarianceReport {
    double alpha_p = 0, beta_p = 0, sigma_sq = 0;
    double gamma_p = 0, eta_p = 0, lambda_p = 0;

    std::array<std::array<double, 3>, 3> matrix() const;
    double min_eigenvalue() const;  // must be >= -1e-10 (it is a covariance)
};

/// Closed-form covariances by grid quadrature. Requires g.n() >= 128.
CovarianceReport initial_covariances(const ScalarField& phi, const ScalarField& psi,
                                     const ScalarField& phi2, const Region& A, double p,
                                     const GridField& g);

/// Monte Carlo check of the initial CLT: M independent populations of size N,
/// empirical 3x3 covariance of ((U0,phi),(V0,psi),(Z0,phi2)) with bootstrap
/// standard errors.
struct McCltResult {
    Eigen::Matrix3d sample_cov;
    Eigen::Matrix3d bootstrap_se;
    CovarianceReport predicted;
    /// |sample - predicted| / se, entrywise.
    Eigen::Matrix3d z_scores() const;
};

McCltResult mc_initial_clt(int N, int M, const InitialCondition& initial, const ScalarField& phi,
                           const ScalarField& psi, const ScalarField& phi2,
                           const GridField& quad_g, std::uint64_t base_seed, int threads = 2);

/// Signed pairing engine sqrt(N) * (empirical measure - reference density).
struct FluctuationField {
    WeightedPoints atoms;
    GridField reference;
    double scale = 1.0;  // sqrt(N)

    double pair(const ScalarField& f) const;
    SpectralField project(int cutoff, double gamma) const;
};

FluctuationField empirical_fluctuation(const WeightedPoints& empirical, const GridField& reference,
                                       double sqrt_n);

/// Aggregated martingale-compensation report: per martingale, test function
/// and time, the replicate mean of (sqrt(N) martingale)^2 - predicted QV.
struct QvEntry {
    std::string martingale;  // "M", "L" or "H"
    std::string test_function;
    double time = 0;
    double estimate = 0;  // mean of realized^2 - QV
    double se = 0;
    double z = 0;
};

struct QvReport {
    std::vector<QvEntry> entries;
};

/// Aggregate tracks of already-simulated replicates (all runs must share the
/// same tracked test functions and snapshot times).
QvReport qv_check(const std::vector<RunResult>& runs, int N);

/// Run replicates of `config` with the given tracked functions, then qv_check.
QvReport qv_check_mc(const SimConfig& config, const std::vector<TestFunction>& tracked,
                     int replicates, int threads = 2);

/// Operator matrices on the truncated basis at one PDE time:
/// entries B[j][k] = (G f_k, f_j)_{L2}; adjoints act on raw coefficient
/// vectors by transposition.
struct OperatorMatrices {
    Eigen::MatrixXd B_SI;  // G^{S,I}
    Eigen::MatrixXd B_I;   // G^{I}
    Eigen::MatrixXd B_S;   // G^{S}
};

OperatorMatrices assemble_operators(const GridField& f_S, const GridField& f_I, const GridField& f,
                                    const KernelSpec& kernel, int cutoff);

struct GalerkinConfig {
    int cutoff = 12;
    double dt = 0.005;
    double T = 0.5;
    int refresh_every = 10;  // operator/noise refresh interval in steps
    double beta = 0.6;
    double alpha = 0.3;
    double gamma = 0.05;
    KernelSpec kernel{};

    void validate() const;
};

/// Z trajectory together with the noise increments that drove it, so that a
/// subsequent (U,V) solve can be coupled to the same driving noise.
struct ZTrajectory {
    std::vector<double> times;            // step boundaries, size steps+1
    std::vector<Eigen::VectorXd> coeffs;  // raw-basis coefficients of Z
    std::vector<Eigen::VectorXd> noise;   // xi_H per step, size steps
};

struct UvTrajectory {
    std::vector<double> times;
    std::vector<Eigen::VectorXd> u, v;  // raw-basis coefficients
};

/// Shared read-only tables for the spectral Galerkin integrator: basis value
/// and gradient tables on the PDE grid, per-slot operator matrices and noise
/// covariance factorizations (refreshed every refresh_every steps).
class GalerkinWorkspace {
public:
    GalerkinWorkspace(const GalerkinConfig& config, const PdeSolution& pde);

    const GalerkinConfig& config() const { return config_; }
    int n_modes() const { return static_cast<int>(basis_.size()); }
    const BasisSet& basis() const { return basis_; }
    long steps() const { return steps_; }

    /// Coefficients (A, f_k) of a pairing functional for a band-limited test
    /// function expanded on the workspace basis.
    Eigen::VectorXd project_function(const ScalarField& f) const;

    struct Slot {
        OperatorMatrices ops;
        Eigen::MatrixXd sqrt_H;      // n x n, xi_H = sqrt(dt) * sqrt_H * N(0,I)
        Eigen::MatrixXd cond_mean;   // 2n x n, E[(xi1,xi2)|xi_H] = cond_mean * xi_H
        Eigen::MatrixXd cond_sqrt;   // 2n x 2n sqrt of the conditional covariance
        double min_eigenvalue = 0;   // smallest joint-noise eigenvalue before clipping
    };
    const Slot& slot_for_step(long step) const;

private:
    GalerkinConfig config_;
    BasisSet basis_;
    long steps_;
    std::vector<Slot> slots_;
    std::vector<long> slot_of_step_;
    Eigen::MatrixXd phi_table_;  // n_modes x n_cells (values), for projections
    GridField grid_ref_;         // geometry reference
    friend Eigen::VectorXd workspace_project(const GalerkinWorkspace&, const ScalarField&);
};

/// Z_t = Z_0 + gamma int Laplace Z + H-noise, per-mode exponential Euler.
/// gamma = 0 freezes Z bit-exactly.
ZTrajectory galerkin_solve_Z(const Eigen::VectorXd& z0, const GalerkinWorkspace& ws, Rng& rng);

/// (U,V) system driven by the operators and by noise increments conditioned
/// on the Z trajectory's stored noise (the Brownian parts are shared).
UvTrajectory galerkin_solve_UV(const Eigen::VectorXd& u0, const Eigen::VectorXd& v0,
                               const ZTrajectory& z, const GalerkinWorkspace& ws, Rng& rng);

/// Sampler of (U0, V0, Z0) raw-basis coefficients via the white-noise
/// representation of the initial CLT limits, discretized on the grid of g.
class InitialFluctuationSampler {
public:
    InitialFluctuationSampler(int cutoff, const Region& A, double p, const GridField& g);

    struct Sample {
        Eigen::VectorXd u0, v0, z0;
    };
    Sample draw(Rng& rng) const;

    int n_modes() const { return static_cast<int>(w1_U_.rows()); }

private:
    Eigen::MatrixXd w1_U_, w1_V_, w1_Z_, w2_UV_;  // white-noise weights per mode/cell
    Eigen::VectorXd corr_U_, corr_V_, corr_Z_;    // coefficients of W1(sqrt g)
    Eigen::VectorXd sqrtg_w_;                     // weight vector giving W1(sqrt g)
    double p_ = 0.5;
};

}  // namespace sir
