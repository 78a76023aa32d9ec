#include "sir/simulator.hpp"

#include <algorithm>
#include <cmath>

namespace sir {

void InitialCondition::validate() const {
    auto fail = [](const char* m) {
        throw std::invalid_argument(std::string("InitialCondition: ") + m);
    };
    if (!(p > 0) || p > 1) fail("p must lie in (0, 1]");
    if (!(delta1 > 0) || delta2 < delta1) fail("need 0 < delta1 <= delta2");
    if (!uniform()) {
        if (g.min_value() < delta1 - 1e-12 || g.max_value() > delta2 + 1e-12)
            fail("g violates its declared bounds");
        if (std::fabs(g.mass() - 1.0) > 1e-9) fail("g must integrate to 1");
    } else if (delta1 > 1.0 || delta2 < 1.0) {
        fail("uniform density needs delta1 <= 1 <= delta2");
    }
}

void SimConfig::validate() const {
    auto fail = [](const char* m) { throw std::invalid_argument(std::string("SimConfig: ") + m); };
    if (N < 1) fail("N must be >= 1");
    if (!(beta > 0)) fail("beta must be positive");
    if (!(alpha > 0)) fail("alpha must be positive");
    if (gamma < 0) fail("gamma must be >= 0");
    if (!(T >= 0)) fail("T must be >= 0");
    kernel.validate();
    initial.validate();
    for (std::size_t k = 0; k < snapshot_times.size(); ++k) {
        if (snapshot_times[k] < 0 || snapshot_times[k] > T)
            fail("snapshot times must lie in [0, T]");
        if (k > 0 && snapshot_times[k] <= snapshot_times[k - 1])
            fail("snapshot times must be strictly increasing");
    }
}

TestFunction TestFunction::from_basis(const BasisIndex& idx) {
    idx.validate();
    TestFunction f;
    f.name = "f" + std::to_string(idx.family) + "_" + std::to_string(idx.n1) + "," +
             std::to_string(idx.n2);
    f.value = [idx](const TorusPoint& p) { return basis_eval(idx, p); };
    f.dx1 = [idx](const TorusPoint& p) { return basis_grad(idx, p)[0]; };
    f.dx2 = [idx](const TorusPoint& p) { return basis_grad(idx, p)[1]; };
    f.laplacian = [idx](const TorusPoint& p) { return basis_laplacian(idx, p); };
    return f;
}

TestFunction TestFunction::constant_one() {
    TestFunction f;
    f.name = "one";
    f.value = [](const TorusPoint&) { return 1.0; };
    f.dx1 = [](const TorusPoint&) { return 0.0; };
    f.dx2 = [](const TorusPoint&) { return 0.0; };
    f.laplacian = [](const TorusPoint&) { return 0.0; };
    return f;
}

Population sample_initial(const SimConfig& config, Rng& rng) {
    config.validate();
    const int n = config.N;
    Population pop;
    pop.x1.resize(n);
    pop.x2.resize(n);
    pop.state.resize(n);
    const bool uniform = config.initial.uniform();
    const double bound = config.initial.delta2;
    const long cap = 1000000;
    for (int i = 0; i < n; ++i) {
        if (uniform) {
            pop.x1[i] = rng.uniform();
            pop.x2[i] = rng.uniform();
        } else {
            long tries = 0;
            for (;;) {
                const double u1 = rng.uniform();
                const double u2 = rng.uniform();
                const double accept = config.initial.g.sample(TorusPoint{u1, u2}) / bound;
                if (rng.uniform() < accept) {
                    pop.x1[i] = u1;
                    pop.x2[i] = u2;
                    break;
                }
                if (++tries > cap)
                    throw std::runtime_error(
                        "sample_initial: rejection cap hit, g exceeds declared delta2?");
            }
        }
        Health h = Health::S;
        if (config.initial.region_A.contains(pop.position(i)) && rng.bernoulli(config.initial.p))
            h = Health::I;
        pop.state[i] = h;
        if (h == Health::I)
            ++pop.count_I;
        else
            ++pop.count_S;
    }
    pop.time = 0.0;
    return pop;
}

namespace {

/// score_i = sum_{j infected} K(X_i, X_j) / colsum_j for susceptible i.
/// Built by scattering from infected agents; cost O(I * neighborhood).
struct Scores {
    std::vector<double> value;  // per agent, zero unless susceptible
    double total = 0.0;         // sum over susceptibles
};

Scores susceptible_scores(const Population& pop, const KernelSpec& kernel) {
    const int n = pop.n();
    Scores out;
    out.value.assign(n, 0.0);
    if (pop.count_I == 0 || pop.count_S == 0) return out;

    if (kernel.mode == KernelMode::Constant) {
        // Every column sum is N*amplitude and each pair contributes amplitude,
        // so every susceptible sees exactly I/N.
        const double s = static_cast<double>(pop.count_I) / n;
        for (int i = 0; i < n; ++i)
            if (pop.state[i] == Health::S) out.value[i] = s;
        out.total = s * pop.count_S;
        return out;
    }

    SpatialGrid grid(kernel.radius, n);
    grid.rebuild(pop.x1, pop.x2);
    for (int j = 0; j < n; ++j) {
        if (pop.state[j] != Health::I) continue;
        const TorusPoint pj = pop.position(j);
        double colsum = 0.0;
        grid.for_neighbors(pj, [&](int l) { colsum += kernel_eval(kernel, pop.position(l), pj); });
        SIR_CHECK(colsum > 0.0, "column sum must be positive (self term)");
        grid.for_neighbors(pj, [&](int i) {
            if (pop.state[i] != Health::S) return;
            const double k = kernel_eval(kernel, pop.position(i), pj);
            if (k > 0.0) out.value[i] += k / colsum;
        });
    }
    for (int i = 0; i < n; ++i) out.total += out.value[i];
    return out;
}

}  // namespace

InfectionRates infection_rates(const Population& pop, const KernelSpec& kernel, double beta) {
    Scores s = susceptible_scores(pop, kernel);
    InfectionRates rates;
    rates.rate.assign(pop.n(), 0.0);
    for (int i = 0; i < pop.n(); ++i) rates.rate[i] = beta * s.value[i];
    rates.total = beta * s.total;
    SIR_CHECK(rates.total <= beta * pop.count_I * (1.0 + 1e-9) + 1e-12,
              "aggregate infection rate exceeds beta*I");
    return rates;
}

double total_event_rate_bound(const Population& pop, double alpha, double beta) {
    return (alpha + beta) * pop.count_I;
}

double WeightedPoints::mass() const {
    double m = 0.0;
    for (double w : weights) m += w;
    return m;
}

double WeightedPoints::pair(const std::function<double(const TorusPoint&)>& f) const {
    double s = 0.0;
    for (std::size_t k = 0; k < points.size(); ++k) s += weights[k] * f(points[k]);
    return s;
}

SpectralField WeightedPoints::project(int cutoff, double gamma) const {
    return project_measure(points, weights, cutoff, gamma);
}

EmpiricalMeasures empirical_measures(const Population& pop) {
    EmpiricalMeasures out;
    const double w = 1.0 / pop.n();
    for (int i = 0; i < pop.n(); ++i) {
        const TorusPoint p = pop.position(i);
        out.total.points.push_back(p);
        out.total.weights.push_back(w);
        WeightedPoints* cls = pop.state[i] == Health::S   ? &out.S
                              : pop.state[i] == Health::I ? &out.I
                                                          : &out.R;
        cls->points.push_back(p);
        cls->weights.push_back(w);
    }
    return out;
}

Simulation::Simulation(const SimConfig& config, const std::vector<TestFunction>& tracked)
    : config_(config), rng_(config.seed), tracked_(tracked) {
    config_.validate();
    pop_ = sample_initial(config_, rng_);
    accum_.resize(tracked_.size());
    const double w = 1.0 / pop_.n();
    for (std::size_t t = 0; t < tracked_.size(); ++t) {
        const auto& f = tracked_[t];
        for (int i = 0; i < pop_.n(); ++i) {
            const double v = f.value(pop_.position(i));
            accum_[t].pair0_all += w * v;
            if (pop_.state[i] == Health::S) accum_[t].pair0_S += w * v;
            if (pop_.state[i] == Health::I) accum_[t].pair0_I += w * v;
        }
    }
}

void Simulation::accumulate_integrands(double dt_weight) {
    if (tracked_.empty()) return;
    const int n = pop_.n();
    const double w = 1.0 / n;
    const Scores scores = susceptible_scores(pop_, config_.kernel);
    for (std::size_t t = 0; t < tracked_.size(); ++t) {
        const auto& f = tracked_[t];
        auto& a = accum_[t];
        double lapS = 0, lapI = 0, lapAll = 0;
        double pinf = 0, pinf2 = 0, rec = 0, rec2 = 0;
        double gradS = 0, gradI = 0, gradAll = 0;
        for (int i = 0; i < n; ++i) {
            const TorusPoint p = pop_.position(i);
            const double v = f.value(p);
            const double lap = f.laplacian(p);
            const double g1 = f.dx1(p);
            const double g2 = f.dx2(p);
            const double grad2 = g1 * g1 + g2 * g2;
            lapAll += lap;
            gradAll += grad2;
            if (pop_.state[i] == Health::S) {
                lapS += lap;
                gradS += grad2;
                pinf += v * scores.value[i];
                pinf2 += v * v * scores.value[i];
            } else if (pop_.state[i] == Health::I) {
                lapI += lap;
                gradI += grad2;
                rec += v;
                rec2 += v * v;
            }
        }
        a.int_lap_S += dt_weight * w * lapS;
        a.int_lap_I += dt_weight * w * lapI;
        a.int_lap_all += dt_weight * w * lapAll;
        a.int_pinf_phi += dt_weight * w * pinf;
        a.int_pinf_phi2 += dt_weight * w * pinf2;
        a.int_rec_phi += dt_weight * w * rec;
        a.int_rec_phi2 += dt_weight * w * rec2;
        a.int_grad_S += dt_weight * w * gradS;
        a.int_grad_I += dt_weight * w * gradI;
        a.int_grad_all += dt_weight * w * gradAll;
    }
}

void Simulation::advance_positions(double t) {
    SIR_CHECK(t >= pop_.time - 1e-15, "advance_positions: cannot go backwards");
    if (t <= pop_.time) return;
    const int n = pop_.n();
    auto diffuse = [&](double dt) {
        if (dt <= 0) return;
        if (config_.gamma > 0) {
            const double sd = std::sqrt(2.0 * config_.gamma * dt);
            for (int i = 0; i < n; ++i) {
                const TorusPoint q =
                    wrap(pop_.x1[i] + sd * rng_.gaussian(), pop_.x2[i] + sd * rng_.gaussian());
                pop_.x1[i] = q.x1;
                pop_.x2[i] = q.x2;
            }
        }
        pop_.time += dt;
    };
    if (tracked_.empty()) {
        diffuse(t - pop_.time);
        pop_.time = t;
        return;
    }
    // Composite midpoint: advance half a sub-step, sample the integrand,
    // advance the other half.
    while (pop_.time < t - 1e-15) {
        const double h = std::min(0.01, t - pop_.time);
        diffuse(0.5 * h);
        accumulate_integrands(h);
        diffuse(0.5 * h);
    }
    pop_.time = t;
}

void Simulation::refresh_rates() {
    rates_ = infection_rates(pop_, config_.kernel, config_.beta);
}

double Simulation::draw_proposal_time() {
    const double envelope = total_event_rate_bound(pop_, config_.alpha, config_.beta);
    double delta;
    do {
        delta = rng_.exponential(envelope);
    } while (!(delta > 0) || pop_.time + delta == pop_.time);
    return pop_.time + delta;
}

bool Simulation::fire_or_reject() {
    refresh_rates();
    const double envelope = total_event_rate_bound(pop_, config_.alpha, config_.beta);
    const double true_total = config_.alpha * pop_.count_I + rates_.total;
    SIR_CHECK(true_total <= envelope * (1.0 + 1e-9), "true total rate exceeds envelope");
    if (rng_.uniform() >= true_total / envelope) return false;

    // Accepted: recovery with probability alpha*I/true_total, else infection;
    // then the agent proportionally to its rate.
    const double u = rng_.uniform() * true_total;
    int agent = -1;
    EventKind kind;
    if (u < config_.alpha * pop_.count_I) {
        kind = EventKind::Recovery;
        int k = static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(pop_.count_I)));
        for (int i = 0; i < pop_.n(); ++i)
            if (pop_.state[i] == Health::I && k-- == 0) {
                agent = i;
                break;
            }
        pop_.state[agent] = Health::R;
        --pop_.count_I;
        ++pop_.count_R;
    } else {
        kind = EventKind::Infection;
        const double target = rng_.uniform() * rates_.total;
        double acc = 0.0;
        for (int i = 0; i < pop_.n(); ++i) {
            acc += rates_.rate[i];
            if (acc >= target && rates_.rate[i] > 0) {
                agent = i;
                break;
            }
        }
        if (agent < 0) {  // numerical edge: fall back to the last positive rate
            for (int i = pop_.n() - 1; i >= 0; --i)
                if (rates_.rate[i] > 0) {
                    agent = i;
                    break;
                }
        }
        pop_.state[agent] = Health::I;
        --pop_.count_S;
        ++pop_.count_I;
    }
    SIR_CHECK(pop_.count_S + pop_.count_I + pop_.count_R == pop_.n(), "class counts must sum to N");
    SIR_CHECK(pop_.time > last_event_time_, "event times must be strictly increasing");
    last_event_time_ = pop_.time;
    events_.push_back(EventRecord{pop_.time, kind, agent});
    return true;
}

bool Simulation::step() {
    if (pop_.count_I == 0) return false;
    advance_positions(draw_proposal_time());
    return fire_or_reject();
}

MartingaleSample Simulation::current_martingales(std::size_t t) const {
    const auto& f = tracked_[t];
    const auto& a = accum_[t];
    const double w = 1.0 / pop_.n();
    double pS = 0, pI = 0, pAll = 0;
    for (int i = 0; i < pop_.n(); ++i) {
        const double v = f.value(pop_.position(i));
        pAll += w * v;
        if (pop_.state[i] == Health::S) pS += w * v;
        if (pop_.state[i] == Health::I) pI += w * v;
    }
    MartingaleSample s;
    s.time = pop_.time;
    const double g = config_.gamma;
    const double b = config_.beta;
    const double al = config_.alpha;
    s.M = pS - a.pair0_S - g * a.int_lap_S + b * a.int_pinf_phi;
    s.L = pI - a.pair0_I - g * a.int_lap_I - b * a.int_pinf_phi + al * a.int_rec_phi;
    s.H = pAll - a.pair0_all - g * a.int_lap_all;
    s.qv_M = b * a.int_pinf_phi2 + 2.0 * g * a.int_grad_S;
    s.qv_L = b * a.int_pinf_phi2 + 2.0 * g * a.int_grad_I + al * a.int_rec_phi2;
    s.qv_H = 2.0 * g * a.int_grad_all;
    return s;
}

RunResult Simulation::finish() {
    RunResult out;
    out.tracks.resize(tracked_.size());
    for (std::size_t t = 0; t < tracked_.size(); ++t)
        out.tracks[t].test_function = tracked_[t].name;

    std::size_t next_snap = 0;
    auto record_through = [&](double t_limit) {
        while (next_snap < config_.snapshot_times.size() &&
               config_.snapshot_times[next_snap] <= t_limit + 1e-15) {
            advance_positions(config_.snapshot_times[next_snap]);
            out.snapshots.push_back(Snapshot{pop_.time, pop_});
            for (std::size_t t = 0; t < tracked_.size(); ++t)
                out.tracks[t].samples.push_back(current_martingales(t));
            ++next_snap;
        }
    };

    for (;;) {
        if (pop_.count_I == 0) {
            record_through(config_.T);
            break;
        }
        const double t_prop = draw_proposal_time();
        if (t_prop > config_.T) {
            record_through(config_.T);
            break;
        }
        record_through(t_prop);
        advance_positions(t_prop);
        fire_or_reject();
    }
    out.events = events_;
    return out;
}

RunResult run(const SimConfig& config, const std::vector<TestFunction>& tracked) {
    Simulation sim(config, tracked);
    return sim.finish();
}

}  // namespace sir
