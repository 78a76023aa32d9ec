#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sir/fluctuations.hpp"
#include "sir/fortet.hpp"
#include "sir/limit_pde.hpp"
#include "sir/simulator.hpp"

namespace sir {

inline constexpr const char* kSchemaVersion = "sirtorus.v1";
inline constexpr const char* kToolVersion = "0.1.0";

/// FNV-1a over bytes; used for config hashes and output digests.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

/// Deterministic replicate-parallel map (results indexed by replicate).
void parallel_for_replicates(int replicates, int threads,
                             const std::function<void(int)>& body);

// ---------------------------------------------------------------------------
// Experiment configuration (one JSON file drives every subcommand).

struct LlnSettings {
    std::vector<int> n_sweep{200, 800, 3200};
    int seeds = 20;
    std::vector<double> times{1.0};
    int resolution = 64;
};

struct CltInitialSettings {
    int N = 1000;
    int replicates = 20000;
    BasisIndex phi{3, 2, 2};
    BasisIndex psi{1, 2, 2};
    // phi2 is a linear combination free of the constant mode.
    std::vector<std::pair<double, BasisIndex>> phi2{{1.0, {3, 2, 2}}, {0.5, {5, 2, 0}}};
    int quad_grid = 128;
};

struct CltDynamicSettings {
    GalerkinConfig galerkin{};
    int galerkin_paths = 1000;
    std::vector<int> particle_N{500, 2000};
    int particle_replicates = 600;
    BasisIndex psi{3, 2, 2};
    double time = 0.5;
    int pde_grid = 64;
};

struct QvSettings {
    int replicates = 500;
    std::vector<double> times{0.5, 1.0};
    BasisIndex phi{3, 2, 2};
};

struct DiagSettings {
    std::vector<double> s_values{1.2, 1.5, 2.0, 0.5, 0.9};
    double gamma = 1.0;
    TorusPoint x{0.0, 0.0};
    std::vector<int> cutoffs{16, 32, 64, 128, 256};
};

struct ExperimentConfig {
    std::string mode = "simulate";
    SimConfig sim{};
    PdeConfig pde{};
    LlnSettings lln{};
    CltInitialSettings clt_initial{};
    CltDynamicSettings clt_dynamic{};
    QvSettings qv{};
    DiagSettings diag{};
    int replicates = 1;  // for simulate
    int threads = 2;
    bool write_positions = true;
    std::string density_file;  // optional grid density for g (binary field)

    void validate() const;
};

/// Parse a config (or a manifest wrapping one) from JSON text.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// LLN comparison pipeline.

struct LlnEntry {
    int N = 0;
    double time = 0;
    double median_dF_S = 0, median_dF_I = 0, median_dF_total = 0;
    double median_mass_err_S = 0, median_mass_err_I = 0;
    double dictionary_dF_S = 0;  // median of the fast lower bound, diagnostic
};

struct ComparisonReport {
    std::vector<LlnEntry> entries;  // ordered by (time, N)

    /// Ratio of successive-N medians at a given time (err_N / err_{next}).
    std::vector<double> mass_error_ratios(double time) const;
    bool dF_strictly_decreasing(double time) const;
};

ComparisonReport lln_pipeline(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// Output writers (CSV files carry a schema-version header comment).

void write_event_log_csv(const std::filesystem::path& path, const std::vector<EventRecord>& log);
void write_snapshots_csv(const std::filesystem::path& path, const std::vector<Snapshot>& snaps,
                         bool with_positions);
void write_field_binary(const std::filesystem::path& path, const GridField& field, double time);
GridField read_field_binary(const std::filesystem::path& path);
void write_field_csv(const std::filesystem::path& path, const GridField& field);
void write_spectral_csv(const std::filesystem::path& path, const SpectralField& field);

/// Entry point used by the CLI binary; returns the process exit code
/// (0 success, 2 bad config, 1 runtime failure).
int run_cli(int argc, char** argv);

}  // namespace sir
