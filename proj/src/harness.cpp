#include "sir/harness.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

namespace sir {

using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
    std::uint64_t h = 14695981039346656037ULL;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    return h;
}

void parallel_for_replicates(int replicates, int threads, const std::function<void(int)>& body) {
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

// ---------------------------------------------------------------------------
// JSON (de)serialization

namespace {

json region_to_json(const Region& r) {
    switch (r.shape) {
        case Region::Shape::Everything: return json{{"shape", "everything"}};
        case Region::Shape::Nothing: return json{{"shape", "nothing"}};
        case Region::Shape::Rectangle:
            return json{{"shape", "rectangle"}, {"lo1", r.lo1}, {"hi1", r.hi1},
                        {"lo2", r.lo2},         {"hi2", r.hi2}};
        case Region::Shape::Disc:
            return json{{"shape", "disc"},
                        {"center", {r.center.x1, r.center.x2}},
                        {"radius", r.disc_radius}};
    }
    throw std::invalid_argument("region_to_json: bad shape");
}

Region region_from_json(const json& j) {
    const std::string shape = j.at("shape");
    if (shape == "everything") return Region::everything();
    if (shape == "nothing") return Region::nothing();
    if (shape == "rectangle")
        return Region::rectangle(j.at("lo1"), j.at("hi1"), j.at("lo2"), j.at("hi2"));
    if (shape == "disc") {
        const auto c = j.at("center");
        return Region::disc(TorusPoint{c.at(0), c.at(1)}, j.at("radius"));
    }
    throw std::invalid_argument("region: unknown shape " + shape);
}

json kernel_to_json(const KernelSpec& k) {
    return json{{"radius", k.radius},
                {"exponent", k.exponent},
                {"amplitude", k.amplitude},
                {"mode", k.mode == KernelMode::Bump ? "bump" : "constant"}};
}

KernelSpec kernel_from_json(const json& j) {
    KernelSpec k;
    k.radius = j.value("radius", 0.2);
    k.exponent = j.value("exponent", 4);
    k.amplitude = j.value("amplitude", 1.0);
    const std::string mode = j.value("mode", "bump");
    if (mode == "bump")
        k.mode = KernelMode::Bump;
    else if (mode == "constant")
        k.mode = KernelMode::Constant;
    else
        throw std::invalid_argument("kernel: unknown mode " + mode);
    return k;
}

json basis_to_json(const BasisIndex& b) {
    return json{{"family", b.family}, {"n1", b.n1}, {"n2", b.n2}};
}

BasisIndex basis_from_json(const json& j) {
    BasisIndex b{j.at("family"), j.at("n1"), j.at("n2")};
    b.validate();
    return b;
}

template <typename T>
std::vector<T> vec_from_json(const json& j) {
    std::vector<T> out;
    for (const auto& v : j) out.push_back(v.get<T>());
    return out;
}

}  // namespace

void ExperimentConfig::validate() const {
    static const std::vector<std::string> modes{"simulate",    "pde",      "lln-compare",
                                                "clt-initial", "clt-dynamic", "qv-check",
                                                "spectral-diag"};
    bool known = false;
    for (const auto& m : modes) known = known || m == mode;
    if (!known) throw std::invalid_argument("unknown mode: " + mode);
    if (threads < 1) throw std::invalid_argument("threads must be >= 1");
    if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");
    if (mode == "simulate" || mode == "qv-check" || mode == "lln-compare" ||
        mode == "clt-dynamic")
        sim.validate();
    if (mode == "pde" || mode == "lln-compare") pde.validate();
}

ExperimentConfig parse_config(const std::string& json_text) {
    json j = json::parse(json_text);
    if (j.contains("schema") && j.contains("config")) j = j.at("config");  // manifest

    ExperimentConfig cfg;
    cfg.mode = j.value("mode", "simulate");
    cfg.threads = j.value("threads", 2);
    cfg.replicates = j.value("replicates", 1);
    cfg.write_positions = j.value("write_positions", true);

    const KernelSpec kernel = j.contains("kernel") ? kernel_from_json(j.at("kernel")) : KernelSpec{};
    const Region region = j.contains("region_A") ? region_from_json(j.at("region_A"))
                                                 : Region::rectangle(0.0, 0.5, 0.0, 1.0);
    const double p = j.value("p", 0.5);
    const double beta = j.value("beta", 0.6);
    const double alpha = j.value("alpha", 0.3);
    const double gamma = j.value("gamma", 0.05);
    const std::uint64_t seed = j.value("seed", 1ULL);

    cfg.sim.kernel = kernel;
    cfg.sim.initial.region_A = region;
    cfg.sim.initial.p = p;
    cfg.sim.beta = beta;
    cfg.sim.alpha = alpha;
    cfg.sim.gamma = gamma;
    cfg.sim.seed = seed;
    if (j.contains("density")) {
        const json& d = j.at("density");
        if (d.contains("file")) {
            cfg.sim.initial.g = read_field_binary(d.at("file").get<std::string>());
            cfg.sim.initial.delta1 = d.value("delta1", cfg.sim.initial.g.min_value());
            cfg.sim.initial.delta2 = d.value("delta2", cfg.sim.initial.g.max_value());
            cfg.density_file = d.at("file").get<std::string>();
        }
    }
    if (j.contains("sim")) {
        const json& s = j.at("sim");
        cfg.sim.N = s.value("N", 1000);
        cfg.sim.T = s.value("T", 1.0);
        if (s.contains("snapshot_times"))
            cfg.sim.snapshot_times = vec_from_json<double>(s.at("snapshot_times"));
    }
    if (cfg.sim.snapshot_times.empty()) cfg.sim.snapshot_times = {0.0, cfg.sim.T};

    cfg.pde.kernel = kernel;
    cfg.pde.region_A = region;
    cfg.pde.p = p;
    cfg.pde.beta = beta;
    cfg.pde.alpha = alpha;
    cfg.pde.gamma = gamma;
    if (j.contains("pde")) {
        const json& s = j.at("pde");
        cfg.pde.n_grid = s.value("n_grid", 128);
    }
    if (!cfg.density_file.empty() && cfg.sim.initial.g.n() == cfg.pde.n_grid)
        cfg.pde.g = cfg.sim.initial.g;
    if (j.contains("pde")) {
        const json& s = j.at("pde");
        cfg.pde.n_grid = s.value("n_grid", 128);
        cfg.pde.dt = s.value("dt", 0.005);
        cfg.pde.T = s.value("T", 1.0);
        if (s.contains("output_times"))
            cfg.pde.output_times = vec_from_json<double>(s.at("output_times"));
    }

    if (j.contains("lln")) {
        const json& s = j.at("lln");
        if (s.contains("n_sweep")) cfg.lln.n_sweep = vec_from_json<int>(s.at("n_sweep"));
        cfg.lln.seeds = s.value("seeds", 20);
        if (s.contains("times")) cfg.lln.times = vec_from_json<double>(s.at("times"));
        cfg.lln.resolution = s.value("resolution", 64);
    }

    if (j.contains("clt_initial")) {
        const json& s = j.at("clt_initial");
        cfg.clt_initial.N = s.value("N", 1000);
        cfg.clt_initial.replicates = s.value("replicates", 20000);
        if (s.contains("phi")) cfg.clt_initial.phi = basis_from_json(s.at("phi"));
        if (s.contains("psi")) cfg.clt_initial.psi = basis_from_json(s.at("psi"));
        if (s.contains("phi2")) {
            cfg.clt_initial.phi2.clear();
            for (const auto& term : s.at("phi2"))
                cfg.clt_initial.phi2.push_back(
                    {term.value("coeff", 1.0), basis_from_json(term)});
        }
        cfg.clt_initial.quad_grid = s.value("quad_grid", 128);
    }

    cfg.clt_dynamic.galerkin.kernel = kernel;
    cfg.clt_dynamic.galerkin.beta = beta;
    cfg.clt_dynamic.galerkin.alpha = alpha;
    cfg.clt_dynamic.galerkin.gamma = gamma;
    if (j.contains("clt_dynamic")) {
        const json& s = j.at("clt_dynamic");
        cfg.clt_dynamic.galerkin.cutoff = s.value("cutoff", 12);
        cfg.clt_dynamic.galerkin.dt = s.value("dt", 0.005);
        cfg.clt_dynamic.time = s.value("time", 0.5);
        cfg.clt_dynamic.galerkin.T = cfg.clt_dynamic.time;
        cfg.clt_dynamic.galerkin.refresh_every = s.value("refresh_every", 10);
        cfg.clt_dynamic.galerkin_paths = s.value("galerkin_paths", 1000);
        if (s.contains("particle_N"))
            cfg.clt_dynamic.particle_N = vec_from_json<int>(s.at("particle_N"));
        cfg.clt_dynamic.particle_replicates = s.value("particle_replicates", 600);
        if (s.contains("psi")) cfg.clt_dynamic.psi = basis_from_json(s.at("psi"));
        cfg.clt_dynamic.pde_grid = s.value("pde_grid", 64);
    }

    if (j.contains("qv")) {
        const json& s = j.at("qv");
        cfg.qv.replicates = s.value("replicates", 500);
        if (s.contains("times")) cfg.qv.times = vec_from_json<double>(s.at("times"));
        if (s.contains("phi")) cfg.qv.phi = basis_from_json(s.at("phi"));
    }

    if (j.contains("diag")) {
        const json& s = j.at("diag");
        if (s.contains("s_values")) cfg.diag.s_values = vec_from_json<double>(s.at("s_values"));
        cfg.diag.gamma = s.value("gamma", 1.0);
        if (s.contains("x")) cfg.diag.x = TorusPoint{s.at("x").at(0), s.at("x").at(1)};
        if (s.contains("cutoffs")) cfg.diag.cutoffs = vec_from_json<int>(s.at("cutoffs"));
    }

    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["mode"] = cfg.mode;
    j["threads"] = cfg.threads;
    j["replicates"] = cfg.replicates;
    j["write_positions"] = cfg.write_positions;
    if (!cfg.density_file.empty())
        j["density"] = json{{"file", cfg.density_file},
                            {"delta1", cfg.sim.initial.delta1},
                            {"delta2", cfg.sim.initial.delta2}};
    j["kernel"] = kernel_to_json(cfg.sim.kernel);
    j["region_A"] = region_to_json(cfg.sim.initial.region_A);
    j["p"] = cfg.sim.initial.p;
    j["beta"] = cfg.sim.beta;
    j["alpha"] = cfg.sim.alpha;
    j["gamma"] = cfg.sim.gamma;
    j["seed"] = cfg.sim.seed;
    j["sim"] = json{{"N", cfg.sim.N}, {"T", cfg.sim.T}, {"snapshot_times", cfg.sim.snapshot_times}};
    j["pde"] = json{{"n_grid", cfg.pde.n_grid},
                    {"dt", cfg.pde.dt},
                    {"T", cfg.pde.T},
                    {"output_times", cfg.pde.output_times}};
    j["lln"] = json{{"n_sweep", cfg.lln.n_sweep},
                    {"seeds", cfg.lln.seeds},
                    {"times", cfg.lln.times},
                    {"resolution", cfg.lln.resolution}};
    json phi2 = json::array();
    for (const auto& [c, b] : cfg.clt_initial.phi2) {
        json t = basis_to_json(b);
        t["coeff"] = c;
        phi2.push_back(t);
    }
    j["clt_initial"] = json{{"N", cfg.clt_initial.N},
                            {"replicates", cfg.clt_initial.replicates},
                            {"phi", basis_to_json(cfg.clt_initial.phi)},
                            {"psi", basis_to_json(cfg.clt_initial.psi)},
                            {"phi2", phi2},
                            {"quad_grid", cfg.clt_initial.quad_grid}};
    j["clt_dynamic"] = json{{"cutoff", cfg.clt_dynamic.galerkin.cutoff},
                            {"dt", cfg.clt_dynamic.galerkin.dt},
                            {"time", cfg.clt_dynamic.time},
                            {"refresh_every", cfg.clt_dynamic.galerkin.refresh_every},
                            {"galerkin_paths", cfg.clt_dynamic.galerkin_paths},
                            {"particle_N", cfg.clt_dynamic.particle_N},
                            {"particle_replicates", cfg.clt_dynamic.particle_replicates},
                            {"psi", basis_to_json(cfg.clt_dynamic.psi)},
                            {"pde_grid", cfg.clt_dynamic.pde_grid}};
    j["qv"] = json{{"replicates", cfg.qv.replicates},
                   {"times", cfg.qv.times},
                   {"phi", basis_to_json(cfg.qv.phi)}};
    j["diag"] = json{{"s_values", cfg.diag.s_values},
                     {"gamma", cfg.diag.gamma},
                     {"x", {cfg.diag.x.x1, cfg.diag.x.x2}},
                     {"cutoffs", cfg.diag.cutoffs}};
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// LLN pipeline

std::vector<double> ComparisonReport::mass_error_ratios(double time) const {
    std::vector<const LlnEntry*> at_time;
    for (const auto& e : entries)
        if (std::fabs(e.time - time) < 1e-12) at_time.push_back(&e);
    std::vector<double> ratios;
    for (std::size_t k = 1; k < at_time.size(); ++k)
        ratios.push_back(at_time[k - 1]->median_mass_err_S /
                         std::max(at_time[k]->median_mass_err_S, 1e-300));
    return ratios;
}

bool ComparisonReport::dF_strictly_decreasing(double time) const {
    std::vector<const LlnEntry*> at_time;
    for (const auto& e : entries)
        if (std::fabs(e.time - time) < 1e-12) at_time.push_back(&e);
    for (std::size_t k = 1; k < at_time.size(); ++k)
        if (!(at_time[k]->median_dF_S < at_time[k - 1]->median_dF_S)) return false;
    return true;
}

namespace {

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

ComparisonReport lln_pipeline(const ExperimentConfig& config) {
    ComparisonReport report;
    // One PDE solve shared across the N sweep.
    PdeConfig pde_cfg = config.pde;
    pde_cfg.T = config.sim.T;
    pde_cfg.output_times = config.lln.times;
    const PdeSolution pde =
        pde_cfg.gamma == 0.0 ? solve_gamma_zero(pde_cfg) : solve(pde_cfg);

    for (double t : config.lln.times) {
        const std::size_t pidx = pde.index_of_time(t);
        for (int N : config.lln.n_sweep) {
            std::vector<double> dS(config.lln.seeds), dI(config.lln.seeds),
                dT(config.lln.seeds), mS(config.lln.seeds), mI(config.lln.seeds),
                dictS(config.lln.seeds);
            parallel_for_replicates(config.lln.seeds, config.threads, [&](int r) {
                SimConfig sim = config.sim;
                sim.N = N;
                sim.snapshot_times = config.lln.times;
                sim.seed = replicate_seed(replicate_seed(config.sim.seed, N), r);
                const RunResult run_out = run(sim);
                std::size_t sidx = 0;
                for (std::size_t k = 0; k < run_out.snapshots.size(); ++k)
                    if (std::fabs(run_out.snapshots[k].time - t) < 1e-9) sidx = k;
                const auto meas = empirical_measures(run_out.snapshots[sidx].pop);
                const auto eS = fortet_distance(meas.S, pde.f_S[pidx], config.lln.resolution);
                const auto eI = fortet_distance(meas.I, pde.f_I[pidx], config.lln.resolution);
                const auto eT = fortet_distance(meas.total, pde.f[pidx], config.lln.resolution);
                dS[r] = eS.lp;
                dI[r] = eI.lp;
                dT[r] = eT.lp;
                dictS[r] = eS.dictionary;
                mS[r] = std::fabs(meas.S.mass() - pde.diagnostics[pidx].mass_S);
                mI[r] = std::fabs(meas.I.mass() - pde.diagnostics[pidx].mass_I);
            });
            LlnEntry e;
            e.N = N;
            e.time = t;
            e.median_dF_S = median_of(dS);
            e.median_dF_I = median_of(dI);
            e.median_dF_total = median_of(dT);
            e.median_mass_err_S = median_of(mS);
            e.median_mass_err_I = median_of(mI);
            e.dictionary_dF_S = median_of(dictS);
            report.entries.push_back(e);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Writers

namespace {
void open_or_throw(std::ofstream& out, const std::filesystem::path& path) {
    out.open(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(17);
}
}  // namespace

void write_event_log_csv(const std::filesystem::path& path, const std::vector<EventRecord>& log) {
    std::ofstream out;
    open_or_throw(out, path);
    out << "# schema=" << kSchemaVersion << "\n";
    out << "time,kind,agent_id\n";
    for (const auto& e : log)
        out << e.time << "," << (e.kind == EventKind::Infection ? "infection" : "recovery") << ","
            << e.agent << "\n";
}

void write_snapshots_csv(const std::filesystem::path& path, const std::vector<Snapshot>& snaps,
                         bool with_positions) {
    std::ofstream out;
    open_or_throw(out, path);
    out << "# schema=" << kSchemaVersion << "\n";
    if (with_positions)
        out << "time,agent_id,x1,x2,state\n";
    else
        out << "time,agent_id,state\n";
    const char* names = "SIR";
    for (const auto& s : snaps)
        for (int i = 0; i < s.pop.n(); ++i) {
            out << s.time << "," << i << ",";
            if (with_positions) out << s.pop.x1[i] << "," << s.pop.x2[i] << ",";
            out << names[static_cast<int>(s.pop.state[i])] << "\n";
        }
}

void write_field_binary(const std::filesystem::path& path, const GridField& field, double time) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(field.data().data()),
              static_cast<std::streamsize>(field.size() * sizeof(double)));
    json side{{"schema", kSchemaVersion}, {"n_grid", field.n()}, {"time", time}};
    std::ofstream meta(path.string() + ".json");
    meta << side.dump(2) << "\n";
}

GridField read_field_binary(const std::filesystem::path& path) {
    std::ifstream meta(path.string() + ".json");
    if (!meta) throw std::runtime_error("missing sidecar for " + path.string());
    json side = json::parse(meta);
    const int n = side.at("n_grid");
    GridField field(n);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    in.read(reinterpret_cast<char*>(field.data().data()),
            static_cast<std::streamsize>(field.size() * sizeof(double)));
    if (!in) throw std::runtime_error("truncated field file " + path.string());
    return field;
}

void write_field_csv(const std::filesystem::path& path, const GridField& field) {
    std::ofstream out;
    open_or_throw(out, path);
    out << "# schema=" << kSchemaVersion << "\n";
    out << "i,j,value\n";
    for (int i = 0; i < field.n(); ++i)
        for (int j = 0; j < field.n(); ++j) out << i << "," << j << "," << field.at(i, j) << "\n";
}

void write_spectral_csv(const std::filesystem::path& path, const SpectralField& field) {
    std::ofstream out;
    open_or_throw(out, path);
    out << "# schema=" << kSchemaVersion << "\n";
    out << "family,n1,n2,coeff\n";
    const BasisSet basis(field.cutoff);
    for (std::size_t k = 0; k < basis.size(); ++k)
        out << basis[k].family << "," << basis[k].n1 << "," << basis[k].n2 << ","
            << field.coeffs[k] << "\n";
}

// ---------------------------------------------------------------------------
// CLI

namespace {

struct OutputSet {
    std::filesystem::path dir;
    std::vector<std::filesystem::path> files;

    std::filesystem::path file(const std::string& name) {
        files.push_back(dir / name);
        return files.back();
    }
};

void write_manifest(const OutputSet& outputs, const ExperimentConfig& config) {
    const std::string cfg_text = config_to_json(config);
    json manifest;
    manifest["schema"] = kSchemaVersion;
    manifest["version"] = kToolVersion;
    manifest["config"] = json::parse(cfg_text);
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0')
         << fnv1a64(cfg_text.data(), cfg_text.size());
    manifest["config_hash"] = hash.str();
    manifest["seed"] = config.sim.seed;
    json outs = json::array();
    for (const auto& f : outputs.files) {
        std::ostringstream oh;
        oh << std::hex << std::setw(16) << std::setfill('0') << fnv1a64_file(f);
        outs.push_back(json{{"file", f.filename().string()}, {"fnv1a64", oh.str()}});
    }
    manifest["outputs"] = outs;
    std::ofstream out(outputs.dir / "manifest.json");
    out << manifest.dump(2) << "\n";
}

ScalarField basis_field(const BasisIndex& idx) {
    return [idx](const TorusPoint& p) { return basis_eval(idx, p); };
}

ScalarField combo_field(const std::vector<std::pair<double, BasisIndex>>& terms) {
    return [terms](const TorusPoint& p) {
        double acc = 0.0;
        for (const auto& [c, idx] : terms) acc += c * basis_eval(idx, p);
        return acc;
    };
}

int cmd_simulate(const ExperimentConfig& config, OutputSet& outputs) {
    const std::vector<TestFunction> tracked{TestFunction::from_basis(config.qv.phi)};
    std::vector<RunResult> runs(config.replicates);
    parallel_for_replicates(config.replicates, config.threads, [&](int r) {
        SimConfig cfg = config.sim;
        if (config.replicates > 1) cfg.seed = replicate_seed(config.sim.seed, r);
        runs[r] = run(cfg, tracked);
    });

    std::ofstream summary(outputs.file("summary.jsonl"));
    summary << std::setprecision(17);
    for (int r = 0; r < config.replicates; ++r) {
        std::ostringstream tag;
        tag << "r" << std::setw(3) << std::setfill('0') << r;
        write_event_log_csv(outputs.file("events_" + tag.str() + ".csv"), runs[r].events);
        write_snapshots_csv(outputs.file("snapshots_" + tag.str() + ".csv"), runs[r].snapshots,
                            config.write_positions);
        for (std::size_t s = 0; s < runs[r].snapshots.size(); ++s) {
            const auto& snap = runs[r].snapshots[s];
            const auto meas = empirical_measures(snap.pop);
            json rec;
            rec["replicate"] = r;
            rec["time"] = snap.time;
            rec["S"] = snap.pop.count_S;
            rec["I"] = snap.pop.count_I;
            rec["R"] = snap.pop.count_R;
            rec["pair_phi_S"] = meas.S.pair(basis_field(config.qv.phi));
            rec["pair_phi_I"] = meas.I.pair(basis_field(config.qv.phi));
            if (!runs[r].tracks.empty()) {
                const auto& smp = runs[r].tracks[0].samples[s];
                rec["martingale"] = json{{"phi", runs[r].tracks[0].test_function},
                                         {"M", smp.M},
                                         {"L", smp.L},
                                         {"H", smp.H},
                                         {"qv_M", smp.qv_M},
                                         {"qv_L", smp.qv_L},
                                         {"qv_H", smp.qv_H}};
            }
            summary << rec.dump() << "\n";
        }
    }
    summary.close();
    return 0;
}

int cmd_pde(const ExperimentConfig& config, OutputSet& outputs) {
    const PdeSolution sol =
        config.pde.gamma == 0.0 ? solve_gamma_zero(config.pde) : solve(config.pde);
    std::ofstream diag(outputs.file("diagnostics.csv"));
    diag << std::setprecision(17);
    diag << "# schema=" << kSchemaVersion << "\n";
    diag << "time,mass_S,mass_I,mass_f,min_S,min_I,max_S,max_I,int_mass_I\n";
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        const auto& d = sol.diagnostics[k];
        diag << sol.times[k] << "," << d.mass_S << "," << d.mass_I << "," << d.mass_f << ","
             << d.min_S << "," << d.min_I << "," << d.max_S << "," << d.max_I << ","
             << d.int_mass_I << "\n";
        std::ostringstream tag;
        tag << "t" << std::setw(3) << std::setfill('0') << k;
        write_field_binary(outputs.file("f_S_" + tag.str() + ".bin"), sol.f_S[k], sol.times[k]);
        write_field_binary(outputs.file("f_I_" + tag.str() + ".bin"), sol.f_I[k], sol.times[k]);
        write_field_binary(outputs.file("f_" + tag.str() + ".bin"), sol.f[k], sol.times[k]);
        outputs.files.push_back(outputs.dir / ("f_S_" + tag.str() + ".bin.json"));
        outputs.files.push_back(outputs.dir / ("f_I_" + tag.str() + ".bin.json"));
        outputs.files.push_back(outputs.dir / ("f_" + tag.str() + ".bin.json"));
    }
    return 0;
}

int cmd_lln(const ExperimentConfig& config, OutputSet& outputs) {
    const ComparisonReport report = lln_pipeline(config);
    std::ofstream csv(outputs.file("report.csv"));
    csv << std::setprecision(17);
    csv << "# schema=" << kSchemaVersion << "\n";
    csv << "N,time,median_dF_S,median_dF_I,median_dF_total,median_mass_err_S,median_mass_err_I,"
           "dictionary_dF_S\n";
    json entries = json::array();
    for (const auto& e : report.entries) {
        csv << e.N << "," << e.time << "," << e.median_dF_S << "," << e.median_dF_I << ","
            << e.median_dF_total << "," << e.median_mass_err_S << "," << e.median_mass_err_I
            << "," << e.dictionary_dF_S << "\n";
        entries.push_back(json{{"N", e.N},
                               {"time", e.time},
                               {"median_dF_S", e.median_dF_S},
                               {"median_dF_I", e.median_dF_I},
                               {"median_dF_total", e.median_dF_total},
                               {"median_mass_err_S", e.median_mass_err_S},
                               {"median_mass_err_I", e.median_mass_err_I}});
    }
    json rep;
    rep["entries"] = entries;
    json trends = json::array();
    for (double t : config.lln.times) {
        trends.push_back(json{{"time", t},
                              {"dF_S_strictly_decreasing", report.dF_strictly_decreasing(t)},
                              {"mass_error_ratios", report.mass_error_ratios(t)}});
    }
    rep["trends"] = trends;
    std::ofstream out(outputs.file("report.json"));
    out << rep.dump(2) << "\n";
    return 0;
}

int cmd_clt_initial(const ExperimentConfig& config, OutputSet& outputs) {
    InitialCondition init = config.sim.initial;
    const GridField quad(config.clt_initial.quad_grid, 1.0);
    const auto res = mc_initial_clt(config.clt_initial.N, config.clt_initial.replicates, init,
                                    basis_field(config.clt_initial.phi),
                                    basis_field(config.clt_initial.psi),
                                    combo_field(config.clt_initial.phi2), quad, config.sim.seed,
                                    config.threads);
    const char* names[3] = {"U0_phi", "V0_psi", "Z0_phi2"};
    json entries = json::array();
    const auto pm = res.predicted.matrix();
    for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
            json e;
            e["quantity"] = std::string(i == j ? "var" : "cov") + "(" + names[i] +
                            (i == j ? "" : std::string(",") + names[j]) + ")";
            e["estimate"] = res.sample_cov(i, j);
            e["se"] = res.bootstrap_se(i, j);
            e["predicted"] = pm[i][j];
            e["z_score"] = res.z_scores()(i, j);
            entries.push_back(e);
        }
    json rep;
    rep["entries"] = entries;
    rep["matrix_min_eigenvalue"] = res.predicted.min_eigenvalue();
    std::ofstream out(outputs.file("report.json"));
    out << rep.dump(2) << "\n";
    return 0;
}

int cmd_clt_dynamic(const ExperimentConfig& config, OutputSet& outputs) {
    const auto& dc = config.clt_dynamic;
    // PDE solve with outputs at the operator refresh times plus the horizon.
    PdeConfig pde_cfg = config.pde;
    pde_cfg.n_grid = dc.pde_grid;
    pde_cfg.dt = std::min(pde_cfg.dt, dc.galerkin.dt);
    pde_cfg.T = dc.time;
    pde_cfg.output_times.clear();
    for (long s = 0;; ++s) {
        const double t = s * dc.galerkin.refresh_every * dc.galerkin.dt;
        if (t > dc.time + 1e-12) break;
        pde_cfg.output_times.push_back(t);
    }
    if (std::fabs(pde_cfg.output_times.back() - dc.time) > 1e-12)
        pde_cfg.output_times.push_back(dc.time);
    const PdeSolution pde =
        pde_cfg.gamma == 0.0 ? solve_gamma_zero(pde_cfg) : solve(pde_cfg);

    // Galerkin side.
    const GalerkinWorkspace ws(dc.galerkin, pde);
    const BasisSet basis(dc.galerkin.cutoff);
    const std::size_t kpsi = basis.position(dc.psi);
    InitialFluctuationSampler sampler(dc.galerkin.cutoff, config.sim.initial.region_A,
                                      config.sim.initial.p, GridField(128, 1.0));
    std::vector<double> galerkin_vals(dc.galerkin_paths);
    parallel_for_replicates(dc.galerkin_paths, config.threads, [&](int m) {
        Rng rng(replicate_seed(config.sim.seed ^ 0xABCDEF12345ULL, m));
        const auto s = sampler.draw(rng);
        const auto ztraj = galerkin_solve_Z(s.z0, ws, rng);
        const auto uv = galerkin_solve_UV(s.u0, s.v0, ztraj, ws, rng);
        galerkin_vals[m] = uv.v.back()[kpsi];
    });
    auto variance = [](const std::vector<double>& xs) {
        double mean = 0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0;
        for (double x : xs) var += (x - mean) * (x - mean);
        return var / static_cast<double>(xs.size() - 1);
    };
    const double var_galerkin = variance(galerkin_vals);

    // Particle side: V^N_t paired with psi, reference f_I(t) from the PDE.
    const std::size_t pidx = pde.index_of_time(dc.time);
    double ref_pairing = 0.0;
    {
        const GridField& fI = pde.f_I[pidx];
        const double cell = fI.h() * fI.h();
        for (int i = 0; i < fI.n(); ++i)
            for (int j = 0; j < fI.n(); ++j)
                ref_pairing += basis_eval(dc.psi, {fI.cell_center_1(i), fI.cell_center_2(j)}) *
                               fI.at(i, j) * cell;
    }
    json particle = json::array();
    std::vector<std::pair<int, double>> particle_vars;
    for (int N : dc.particle_N) {
        std::vector<double> vals(dc.particle_replicates);
        parallel_for_replicates(dc.particle_replicates, config.threads, [&](int r) {
            SimConfig sim = config.sim;
            sim.N = N;
            sim.T = dc.time;
            sim.snapshot_times = {dc.time};
            sim.seed = replicate_seed(replicate_seed(config.sim.seed, 7777 + N), r);
            const RunResult out = run(sim);
            const auto meas = empirical_measures(out.snapshots.back().pop);
            const double pairing = meas.I.pair(basis_field(dc.psi));
            vals[r] = std::sqrt(static_cast<double>(N)) * (pairing - ref_pairing);
        });
        const double v = variance(vals);
        particle_vars.push_back({N, v});
        particle.push_back(json{{"N", N},
                                {"var", v},
                                {"ratio_to_galerkin", v / var_galerkin}});
    }

    json rep;
    rep["quantity"] = "Var[(V_t, psi)]";
    rep["psi"] = basis_to_json(dc.psi);
    rep["time"] = dc.time;
    rep["gamma"] = config.sim.gamma;
    rep["galerkin_var"] = var_galerkin;
    rep["galerkin_paths"] = dc.galerkin_paths;
    rep["particle"] = particle;
    std::ofstream out(outputs.file("report.json"));
    out << rep.dump(2) << "\n";
    return 0;
}

int cmd_qv(const ExperimentConfig& config, OutputSet& outputs) {
    SimConfig sim = config.sim;
    sim.snapshot_times = config.qv.times;
    sim.T = config.qv.times.back();
    const auto report = qv_check_mc(sim, {TestFunction::from_basis(config.qv.phi)},
                                    config.qv.replicates, config.threads);
    json entries = json::array();
    for (const auto& e : report.entries)
        entries.push_back(json{{"quantity", e.martingale + "~^2 - QV, phi=" + e.test_function},
                               {"time", e.time},
                               {"estimate", e.estimate},
                               {"se", e.se},
                               {"predicted", 0.0},
                               {"z_score", e.z}});
    json rep;
    rep["entries"] = entries;
    std::ofstream out(outputs.file("report.json"));
    out << rep.dump(2) << "\n";
    return 0;
}

int cmd_diag(const ExperimentConfig& config, OutputSet& outputs) {
    std::ofstream csv(outputs.file("table.csv"));
    csv << std::setprecision(17);
    csv << "# schema=" << kSchemaVersion << "\n";
    csv << "s,cutoff,sum_rho_sq,sum_grad_rho_sq\n";
    json classes = json::array();
    for (double s : config.diag.s_values) {
        const auto rows =
            appendix_sum_diagnostic(s, config.diag.gamma, config.diag.x, config.diag.cutoffs);
        for (const auto& r : rows)
            csv << s << "," << r.cutoff << "," << r.sum_rho_sq << "," << r.sum_grad_rho_sq
                << "\n";
        classes.push_back(json{{"s", s},
                               {"plain", tail_class_name(classify_tail(rows, false))},
                               {"gradient", tail_class_name(classify_tail(rows, true))}});
    }
    json rep;
    rep["classification"] = classes;
    std::ofstream out(outputs.file("report.json"));
    out << rep.dump(2) << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"sirtorus: spatial stochastic SIR on the 2-torus"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    int replicates_override = -1;
    bool no_positions = false;

    auto add_common = [&](CLI::App* cmd, bool needs_config = true) {
        if (needs_config)
            cmd->add_option("--config", config_path, "config JSON (or manifest)")->required();
        cmd->add_option("--out", out_dir, "output directory");
    };

    auto* sim_cmd = app.add_subcommand("simulate", "exact particle-system simulation");
    add_common(sim_cmd);
    sim_cmd->add_option("--replicates", replicates_override, "number of replicates");
    sim_cmd->add_flag("--no-positions", no_positions, "omit positions from snapshots");

    auto* pde_cmd = app.add_subcommand("pde", "deterministic limit system");
    add_common(pde_cmd);
    auto* lln_cmd = app.add_subcommand("lln-compare", "particle vs PDE Fortet comparison");
    add_common(lln_cmd);
    auto* clti_cmd = app.add_subcommand("clt-initial", "initial-measure CLT check");
    add_common(clti_cmd);
    clti_cmd->add_option("--replicates", replicates_override, "Monte Carlo replicates");
    auto* cltd_cmd = app.add_subcommand("clt-dynamic", "dynamic CLT consistency check");
    add_common(cltd_cmd);
    cltd_cmd->add_option("--replicates", replicates_override, "particle replicates");
    auto* qv_cmd = app.add_subcommand("qv-check", "martingale quadratic-variation check");
    add_common(qv_cmd);
    qv_cmd->add_option("--replicates", replicates_override, "Monte Carlo replicates");
    auto* diag_cmd = app.add_subcommand("spectral-diag", "basis-sum convergence table");
    add_common(diag_cmd, false);
    diag_cmd->add_option("--config", config_path, "config JSON (optional)");
    std::vector<double> diag_s;
    double diag_gamma = 1.0;
    diag_cmd->add_option("--s", diag_s, "s values");
    diag_cmd->add_option("--gamma", diag_gamma, "basis weight gamma");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    ExperimentConfig config;
    try {
        if (!config_path.empty())
            config = load_config(config_path);
        if (app.got_subcommand(sim_cmd)) config.mode = "simulate";
        if (app.got_subcommand(pde_cmd)) config.mode = "pde";
        if (app.got_subcommand(lln_cmd)) config.mode = "lln-compare";
        if (app.got_subcommand(clti_cmd)) config.mode = "clt-initial";
        if (app.got_subcommand(cltd_cmd)) config.mode = "clt-dynamic";
        if (app.got_subcommand(qv_cmd)) config.mode = "qv-check";
        if (app.got_subcommand(diag_cmd)) {
            config.mode = "spectral-diag";
            if (!diag_s.empty()) config.diag.s_values = diag_s;
            config.diag.gamma = diag_gamma;
        }
        if (replicates_override > 0) {
            config.replicates = replicates_override;
            config.clt_initial.replicates = replicates_override;
            config.clt_dynamic.particle_replicates = replicates_override;
            config.qv.replicates = replicates_override;
        }
        if (no_positions) config.write_positions = false;
        config.validate();
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", "bad config"}, {"detail", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    }

    try {
        std::filesystem::create_directories(out_dir);
        OutputSet outputs;
        outputs.dir = out_dir;
        int rc = 1;
        if (config.mode == "simulate") rc = cmd_simulate(config, outputs);
        if (config.mode == "pde") rc = cmd_pde(config, outputs);
        if (config.mode == "lln-compare") rc = cmd_lln(config, outputs);
        if (config.mode == "clt-initial") rc = cmd_clt_initial(config, outputs);
        if (config.mode == "clt-dynamic") rc = cmd_clt_dynamic(config, outputs);
        if (config.mode == "qv-check") rc = cmd_qv(config, outputs);
        if (config.mode == "spectral-diag") rc = cmd_diag(config, outputs);
        if (rc == 0) write_manifest(outputs, config);
        return rc;
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", "runtime failure"}, {"detail", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
}

}  // namespace sir
