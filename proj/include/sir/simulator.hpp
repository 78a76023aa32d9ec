#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sir/grid_field.hpp"
#include "sir/rng.hpp"
#include "sir/spectral.hpp"
#include "sir/torus.hpp"

namespace sir {

enum class Health : std::uint8_t { S = 0, I = 1, R = 2 };

/// Initial mixture: positions i.i.d. with density g (bounded between delta1
/// and delta2), agents inside region A infected with probability p.
struct InitialCondition {
    Region region_A = Region::everything();
    double p = 0.5;
    GridField g;  // empty means uniform density 1
    double delta1 = 1.0;
    double delta2 = 1.0;

    void validate() const;
    bool uniform() const { return g.n() == 0; }
};

struct SimConfig {
    int N = 1000;
    double beta = 0.6;
    double alpha = 0.3;
    double gamma = 0.05;
    KernelSpec kernel{};
    InitialCondition initial{};
    double T = 1.0;
    std::vector<double> snapshot_times;  // sorted, within [0, T]
    std::uint64_t seed = 1;

    void validate() const;
};

struct Population {
    std::vector<double> x1, x2;
    std::vector<Health> state;
    int count_S = 0, count_I = 0, count_R = 0;
    double time = 0.0;

    int n() const { return static_cast<int>(state.size()); }
    TorusPoint position(int i) const { return TorusPoint{x1[i], x2[i]}; }
};

enum class EventKind : std::uint8_t { Infection, Recovery };

struct EventRecord {
    double time;
    EventKind kind;
    int agent;
};

/// C^2 test function with the derivatives the evolution equations need.
struct TestFunction {
    std::string name;
    std::function<double(const TorusPoint&)> value;
    std::function<double(const TorusPoint&)> dx1;
    std::function<double(const TorusPoint&)> dx2;
    std::function<double(const TorusPoint&)> laplacian;

    static TestFunction from_basis(const BasisIndex& idx);
    static TestFunction constant_one();
};

/// Running martingale values (M for the S-class, L for the I-class, H for the
/// total measure) and the predicted quadratic variations of their sqrt(N)
/// rescalings, sampled at snapshot times. All tracks start at 0.
struct MartingaleSample {
    double time = 0.0;
    double M = 0.0, L = 0.0, H = 0.0;
    double qv_M = 0.0, qv_L = 0.0, qv_H = 0.0;
};

struct MartingaleTrack {
    std::string test_function;
    std::vector<MartingaleSample> samples;
};

struct Snapshot {
    double time;
    Population pop;
};

struct RunResult {
    std::vector<EventRecord> events;
    std::vector<Snapshot> snapshots;
    std::vector<MartingaleTrack> tracks;  // one per tracked test function
};

/// Draw the initial population (positions by rejection sampling against
/// delta2, states by the region/p rule). Fully determined by the rng state.
Population sample_initial(const SimConfig& config, Rng& rng);

/// Per-agent infection rates (zero for non-susceptible agents) and their sum.
/// rate_i = beta * sum_{j infected} K(X_i,X_j) / colsum_j.
struct InfectionRates {
    std::vector<double> rate;
    double total = 0.0;
};
InfectionRates infection_rates(const Population& pop, const KernelSpec& kernel, double beta);

/// Thinning envelope (alpha + beta) * I, valid on the whole inter-event
/// interval because I changes only at events and the aggregate infection
/// intensity is bounded by beta * I.
double total_event_rate_bound(const Population& pop, double alpha, double beta);

/// Exact event simulation by thinning. Tracked test functions get drift and
/// quadratic-variation integrals accumulated by composite midpoint quadrature
/// with sub-step min(0.01, gap), positions advanced exactly to sub-step times.
RunResult run(const SimConfig& config,
              const std::vector<TestFunction>& tracked = {});

/// Weighted atoms (weights 1/N) of one compartment or of the whole population.
struct WeightedPoints {
    std::vector<TorusPoint> points;
    std::vector<double> weights;

    double mass() const;
    double pair(const std::function<double(const TorusPoint&)>& f) const;
    SpectralField project(int cutoff, double gamma) const;
};

struct EmpiricalMeasures {
    WeightedPoints S, I, R, total;
};

EmpiricalMeasures empirical_measures(const Population& pop);

/// Single-step access for tests: one thinning proposal (diffuse, propose,
/// accept/reject). Returns the event if one was accepted.
class Simulation {
public:
    Simulation(const SimConfig& config, const std::vector<TestFunction>& tracked = {});

    const Population& population() const { return pop_; }
    const std::vector<EventRecord>& events() const { return events_; }
    double time() const { return pop_.time; }

    /// Advance positions exactly to time t (no events). Accumulates tracking
    /// integrals along the way.
    void advance_positions(double t);

    /// One proposal of the thinning loop; no-op if no infected remain.
    /// Returns true if an event was accepted.
    bool step();

    /// Run to the horizon, recording snapshots; result mirrors run().
    RunResult finish();

    MartingaleSample current_martingales(std::size_t tracked_index) const;

private:
    void accumulate_integrands(double dt_weight);
    void refresh_rates();
    double draw_proposal_time();
    bool fire_or_reject();

    struct TrackAccum {
        double pair0_S = 0, pair0_I = 0, pair0_all = 0;
        double int_lap_S = 0, int_lap_I = 0, int_lap_all = 0;
        double int_pinf_phi = 0;    // integral of (mu^S, phi (mu^I, K/(mu,K)))
        double int_pinf_phi2 = 0;   // same with phi^2
        double int_rec_phi = 0;     // integral of (mu^I, phi)
        double int_rec_phi2 = 0;    // integral of (mu^I, phi^2)
        double int_grad_S = 0, int_grad_I = 0, int_grad_all = 0;
    };

    SimConfig config_;
    Rng rng_;
    Population pop_;
    std::vector<EventRecord> events_;
    std::vector<TestFunction> tracked_;
    std::vector<TrackAccum> accum_;
    InfectionRates rates_;
    double last_event_time_ = -1.0;
};

}  // namespace sir
