#pragma once

// Config parsing, run orchestration, and result emission for the command
// line tool: operator verification, single simulation runs, manufactured
// -solution convergence studies, and equilibrium-approach studies. Every
// workflow reads one JSON config and writes CSV/JSON results plus the fully
// resolved config, so a run can be reproduced from its own output.

#include <string>
#include <vector>

#include "lyapdg/diagnostics.hpp"
#include "lyapdg/mesh.hpp"
#include "lyapdg/model.hpp"
#include "lyapdg/rrk.hpp"

namespace lyapdg {

struct InitialCondition {
    std::string kind = "equilibrium";      // equilibrium | constant | blob | mms
    double mass = 3.0;                     // equilibrium: conserved mass density
    double P = 1.0, Q = 1.0;               // constant levels
    std::vector<double> inside{10.0, 1.0}; // blob plateau (P, Q)
    std::vector<double> outside{0.1, 0.1}; // blob background (P, Q)
    double radius = 0.3;                   // blob radius, physical units
    double width = 0.08;                   // blob tanh transition width
};

// Which equilibrium the Lyapunov functional measures against. "auto"
// derives it from the conserved mass of the initial condition; "state"
// pins it explicitly (and must satisfy detailed balance).
struct EquilibriumReference {
    std::string kind = "auto";
    double P = 0.0, Q = 0.0;
};

struct TimeConfig {
    std::string mode = "adaptive"; // adaptive | fixed
    double t_end = 1.0;
    double dt = 0.0;               // 0: derive from the cfl heuristic
    double cfl = 0.25;
    double rtol = 1e-6;
    double atol = 1e-8;
    double safety = 0.9;
    double dt_min = 1e-14;
    double dt_max = 1e100;
};

struct MmsConfig {
    bool forcing = false;   // add the manufactured source term to the RHS
    bool sqrt_form = false; // sqrt-of-cosine waveform variant
};

struct RunConfig {
    int dim = 2;
    int p = 3;
    std::vector<int> k{8, 8}; // elements per direction
    Box box;
    Mapping mapping;
    DimerParams model;
    InitialCondition initial_condition;
    EquilibriumReference equilibrium_reference;
    std::string tableau = "bs3";
    std::string tableau_file; // nonempty: load this file instead
    TimeConfig time;
    bool relaxation = true;
    bool diss_c = true;
    bool diss_d = true;
    MmsConfig mms;
    bool deterministic = true;
    std::string output_dir = ".";
    int stride = 1;  // balance-series sampling stride; 0 disables sampling
    int threads = 1; // accepted and checked; evaluation is serial
};

// Parses and validates a config; all omitted fields take the documented
// defaults. Throws ConfigError naming the offending key.
RunConfig run_config_from_json_text(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Full round-trippable dump: parsing it back reproduces the config.
std::string resolved_config_json(const RunConfig& cfg);

// A study is a base config swept over polynomial degrees and refinement
// levels, with optional raw-JSON patches applied per level.
struct StudyConfig {
    RunConfig base;
    std::vector<int> p_values;
    std::vector<std::vector<int>> levels;
    double threshold = 1e-8; // equilibrium study distance threshold
    std::vector<RunConfig> runs; // resolved, p-major then level
    const RunConfig& run(int ip, int il) const { return runs[ip * levels.size() + il]; }
};

StudyConfig study_config_from_json_text(const std::string& text);
StudyConfig load_study_config(const std::string& path);

// Mesh, operators, and metric data built from a config.
struct Discretization {
    TensorOperatorSet ops;
    MeshGeometry mesh;
    ElementCoords coords;
    MetricData metrics;
};

Discretization build_discretization(const RunConfig& cfg);
std::vector<double> initial_state(const RunConfig& cfg, const Discretization& d);
std::vector<double> mms_state(const RunConfig& cfg, const Discretization& d, double t);
// MJ-weighted average of the conserved mass density P + 2Q.
double mj_weighted_mass(const Discretization& d, const std::vector<double>& u);
// Model with the equilibrium reference resolved (auto: from `mass`).
DimerizationModel build_model(const RunConfig& cfg, double mass);

struct RunResult {
    IntegrationStats stats;
    BalanceSeries series;
    std::vector<double> u; // final committed state (last good one on failure)
    double t = 0.0;        // time actually reached
    double mass = 0.0;     // conserved mass of the initial condition
    EquilibriumPoint predicted_eq;
    bool failed = false;
    std::string error;
};

// Integrates the configured problem to t_end, sampling the balance ledger
// at the configured stride. Integration failures are captured in the
// result (with the last good state), not thrown.
RunResult execute_run(const RunConfig& cfg);

// Command entry points; each returns a process exit code (0 success,
// 1 failed checks, 2 bad config, 3 integration failure).
int cmd_verify_operators(int p_min, int p_max, int dim_min, int dim_max,
                         const std::string& report_path, bool inject_defect);
int cmd_run(const RunConfig& cfg, bool dump_operators, bool dump_mesh);
int cmd_mms_convergence(const StudyConfig& study, const std::string& output_dir);
int cmd_equilibrium_study(const StudyConfig& study, const std::string& output_dir);

int cli_main(int argc, const char* const* argv);

} // namespace lyapdg
