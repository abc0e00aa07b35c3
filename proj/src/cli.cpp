#include "lyapdg/cli.hpp"

#include "lyapdg/errors.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lyapdg {

namespace {

using nlohmann::json;

void check_keys(const json& j, const char* ctx, std::initializer_list<const char*> known) {
    if (!j.is_object()) throw ConfigError(std::string(ctx) + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw ConfigError("unknown key '" + it.key() + "' in " + ctx);
    }
}

// Accepts a single number (broadcast) or an array of per-direction values.
template <typename T>
std::vector<T> per_direction(const json& j, int dim, const char* key) {
    std::vector<T> out;
    if (j.is_array()) {
        out = j.get<std::vector<T>>();
        if ((int)out.size() != dim)
            throw ConfigError(std::string("'") + key + "' needs " + std::to_string(dim) +
                              " entries, got " + std::to_string(out.size()));
    } else {
        out.assign(dim, j.get<T>());
    }
    return out;
}

RunConfig parse_run_config(const json& j) {
    check_keys(j, "config",
               {"dim", "p", "k", "box", "mapping", "model", "initial_condition",
                "equilibrium_reference", "tableau", "tableau_file", "time", "relaxation",
                "dissipation", "mms", "deterministic", "output_dir", "stride", "threads"});
    RunConfig cfg;
    cfg.dim = j.value("dim", cfg.dim);
    if (cfg.dim < 1 || cfg.dim > 3) throw ConfigError("'dim' must be 1, 2, or 3");
    cfg.p = j.value("p", cfg.p);
    if (cfg.p < 1 || cfg.p > 12) throw ConfigError("'p' must be between 1 and 12");

    cfg.k.assign(cfg.dim, 8);
    if (j.contains("k")) cfg.k = per_direction<int>(j.at("k"), cfg.dim, "k");
    for (int kl : cfg.k)
        if (kl < 1) throw ConfigError("'k' entries must be positive");

    for (int l = 0; l < 3; ++l) {
        cfg.box.lo[l] = 0.0;
        cfg.box.hi[l] = 1.0;
    }
    if (j.contains("box")) {
        const json& b = j.at("box");
        check_keys(b, "box", {"lo", "hi"});
        auto lo = per_direction<double>(b.at("lo"), cfg.dim, "box.lo");
        auto hi = per_direction<double>(b.at("hi"), cfg.dim, "box.hi");
        for (int l = 0; l < cfg.dim; ++l) {
            cfg.box.lo[l] = lo[l];
            cfg.box.hi[l] = hi[l];
            if (!(hi[l] > lo[l])) throw ConfigError("'box' must have hi > lo in every direction");
        }
    }

    if (j.contains("mapping")) {
        const json& m = j.at("mapping");
        check_keys(m, "mapping", {"kind", "alpha"});
        const std::string kind = m.value("kind", "affine");
        if (kind == "affine")
            cfg.mapping.kind = MappingKind::affine;
        else if (kind == "smooth_warp_2d")
            cfg.mapping.kind = MappingKind::smooth_warp_2d;
        else
            throw ConfigError("'mapping.kind' must be affine or smooth_warp_2d");
        cfg.mapping.alpha = m.value("alpha", 0.0);
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model", {"k_f", "k_r", "d", "a", "time_dependent_diffusion"});
        cfg.model.k_f = m.value("k_f", cfg.model.k_f);
        cfg.model.k_r = m.value("k_r", cfg.model.k_r);
        cfg.model.d = m.value("d", cfg.model.d);
        cfg.model.time_dependent_diffusion =
            m.value("time_dependent_diffusion", cfg.model.time_dependent_diffusion);
        if (m.contains("a")) {
            auto a = per_direction<double>(m.at("a"), cfg.dim, "model.a");
            for (int l = 0; l < cfg.dim; ++l) cfg.model.a[l] = a[l];
        }
    }
    if (cfg.model.k_f < 0.0) throw ConfigError("'model.k_f' must be nonnegative");
    if (cfg.model.k_r <= 0.0) throw ConfigError("'model.k_r' must be positive");
    if (cfg.model.d < 0.0) throw ConfigError("'model.d' must be nonnegative");

    if (j.contains("initial_condition")) {
        const json& ic = j.at("initial_condition");
        check_keys(ic, "initial_condition",
                   {"kind", "mass", "P", "Q", "inside", "outside", "radius", "width"});
        InitialCondition& c = cfg.initial_condition;
        c.kind = ic.value("kind", c.kind);
        c.mass = ic.value("mass", c.mass);
        c.P = ic.value("P", c.P);
        c.Q = ic.value("Q", c.Q);
        if (ic.contains("inside")) c.inside = ic.at("inside").get<std::vector<double>>();
        if (ic.contains("outside")) c.outside = ic.at("outside").get<std::vector<double>>();
        c.radius = ic.value("radius", c.radius);
        c.width = ic.value("width", c.width);
        if (c.kind != "equilibrium" && c.kind != "constant" && c.kind != "blob" &&
            c.kind != "mms")
            throw ConfigError("'initial_condition.kind' must be equilibrium, constant, "
                              "blob, or mms");
        if (c.kind == "equilibrium" && c.mass <= 0.0)
            throw ConfigError("'initial_condition.mass' must be positive");
        if (c.kind == "constant" && (c.P <= 0.0 || c.Q <= 0.0))
            throw ConfigError("'initial_condition' constant levels must be positive");
        if (c.kind == "blob") {
            if (c.inside.size() != 2 || c.outside.size() != 2)
                throw ConfigError("'initial_condition' blob levels need two components");
            for (double v : c.inside)
                if (v <= 0.0) throw ConfigError("'initial_condition.inside' must be positive");
            for (double v : c.outside)
                if (v <= 0.0) throw ConfigError("'initial_condition.outside' must be positive");
            if (c.radius <= 0.0 || c.width <= 0.0)
                throw ConfigError("'initial_condition' blob radius and width must be positive");
        }
    }

    if (j.contains("equilibrium_reference")) {
        const json& er = j.at("equilibrium_reference");
        check_keys(er, "equilibrium_reference", {"kind", "P", "Q"});
        cfg.equilibrium_reference.kind = er.value("kind", "auto");
        cfg.equilibrium_reference.P = er.value("P", 0.0);
        cfg.equilibrium_reference.Q = er.value("Q", 0.0);
        const std::string& kind = cfg.equilibrium_reference.kind;
        if (kind != "auto" && kind != "state")
            throw ConfigError("'equilibrium_reference.kind' must be auto or state");
        if (kind == "state" &&
            (cfg.equilibrium_reference.P <= 0.0 || cfg.equilibrium_reference.Q <= 0.0))
            throw ConfigError("'equilibrium_reference' state must be positive");
    }

    cfg.tableau = j.value("tableau", cfg.tableau);
    cfg.tableau_file = j.value("tableau_file", cfg.tableau_file);

    if (j.contains("time")) {
        const json& t = j.at("time");
        check_keys(t, "time",
                   {"mode", "t_end", "dt", "cfl", "rtol", "atol", "safety", "dt_min", "dt_max"});
        TimeConfig& tc = cfg.time;
        tc.mode = t.value("mode", tc.mode);
        tc.t_end = t.value("t_end", tc.t_end);
        tc.dt = t.value("dt", tc.dt);
        tc.cfl = t.value("cfl", tc.cfl);
        tc.rtol = t.value("rtol", tc.rtol);
        tc.atol = t.value("atol", tc.atol);
        tc.safety = t.value("safety", tc.safety);
        tc.dt_min = t.value("dt_min", tc.dt_min);
        tc.dt_max = t.value("dt_max", tc.dt_max);
        if (tc.mode != "adaptive" && tc.mode != "fixed")
            throw ConfigError("'time.mode' must be adaptive or fixed");
        if (tc.t_end < 0.0) throw ConfigError("'time.t_end' must be nonnegative");
        if (tc.dt < 0.0) throw ConfigError("'time.dt' must be nonnegative");
        if (tc.cfl <= 0.0) throw ConfigError("'time.cfl' must be positive");
        if (tc.rtol <= 0.0 || tc.atol <= 0.0)
            throw ConfigError("'time' tolerances must be positive");
        if (tc.safety <= 0.0 || tc.safety > 1.0)
            throw ConfigError("'time.safety' must be in (0, 1]");
        if (tc.dt_min <= 0.0 || tc.dt_max < tc.dt_min)
            throw ConfigError("'time' step bounds must satisfy 0 < dt_min <= dt_max");
    }

    cfg.relaxation = j.value("relaxation", cfg.relaxation);
    if (j.contains("dissipation")) {
        const json& ds = j.at("dissipation");
        check_keys(ds, "dissipation", {"diss_c", "diss_d"});
        cfg.diss_c = ds.value("diss_c", cfg.diss_c);
        cfg.diss_d = ds.value("diss_d", cfg.diss_d);
    }
    if (j.contains("mms")) {
        const json& m = j.at("mms");
        check_keys(m, "mms", {"forcing", "sqrt_form"});
        cfg.mms.forcing = m.value("forcing", cfg.mms.forcing);
        cfg.mms.sqrt_form = m.value("sqrt_form", cfg.mms.sqrt_form);
    }
    cfg.deterministic = j.value("deterministic", cfg.deterministic);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.stride = j.value("stride", cfg.stride);
    if (cfg.stride < 0) throw ConfigError("'stride' must be nonnegative");
    cfg.threads = j.value("threads", cfg.threads);
    if (cfg.threads < 1) throw ConfigError("'threads' must be at least 1");
    return cfg;
}

json config_to_json(const RunConfig& cfg) {
    json j;
    j["dim"] = cfg.dim;
    j["p"] = cfg.p;
    j["k"] = cfg.k;
    json box;
    box["lo"] = std::vector<double>(cfg.box.lo.begin(), cfg.box.lo.begin() + cfg.dim);
    box["hi"] = std::vector<double>(cfg.box.hi.begin(), cfg.box.hi.begin() + cfg.dim);
    j["box"] = box;
    j["mapping"] = {
        {"kind", cfg.mapping.kind == MappingKind::affine ? "affine" : "smooth_warp_2d"},
        {"alpha", cfg.mapping.alpha}};
    j["model"] = {
        {"k_f", cfg.model.k_f},
        {"k_r", cfg.model.k_r},
        {"d", cfg.model.d},
        {"a", std::vector<double>(cfg.model.a.begin(), cfg.model.a.begin() + cfg.dim)},
        {"time_dependent_diffusion", cfg.model.time_dependent_diffusion}};
    const InitialCondition& ic = cfg.initial_condition;
    j["initial_condition"] = {{"kind", ic.kind},     {"mass", ic.mass},
                              {"P", ic.P},           {"Q", ic.Q},
                              {"inside", ic.inside}, {"outside", ic.outside},
                              {"radius", ic.radius}, {"width", ic.width}};
    j["equilibrium_reference"] = {{"kind", cfg.equilibrium_reference.kind},
                                  {"P", cfg.equilibrium_reference.P},
                                  {"Q", cfg.equilibrium_reference.Q}};
    j["tableau"] = cfg.tableau;
    j["tableau_file"] = cfg.tableau_file;
    j["time"] = {{"mode", cfg.time.mode},     {"t_end", cfg.time.t_end},
                 {"dt", cfg.time.dt},         {"cfl", cfg.time.cfl},
                 {"rtol", cfg.time.rtol},     {"atol", cfg.time.atol},
                 {"safety", cfg.time.safety}, {"dt_min", cfg.time.dt_min},
                 {"dt_max", cfg.time.dt_max}};
    j["relaxation"] = cfg.relaxation;
    j["dissipation"] = {{"diss_c", cfg.diss_c}, {"diss_d", cfg.diss_d}};
    j["mms"] = {{"forcing", cfg.mms.forcing}, {"sqrt_form", cfg.mms.sqrt_form}};
    j["deterministic"] = cfg.deterministic;
    j["output_dir"] = cfg.output_dir;
    j["stride"] = cfg.stride;
    j["threads"] = cfg.threads;
    return j;
}

json parse_json_text(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& err) {
        throw ConfigError(std::string(what) + " is not valid JSON: " + err.what());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw UsageError("cannot open '" + path + "' for writing");
    out << content;
}

// Heuristic starting step from the advective and diffusive spectral radii
// plus the reaction rate scale; pure heuristic, the controller owns the
// step from there.
double heuristic_dt(const RunConfig& cfg, const Discretization& d,
                    const std::vector<double>& u0) {
    double umax = 0.0;
    for (double v : u0) umax = std::max(umax, v);
    const std::array<double, 3> w = d.mesh.element_widths();
    const double pp = cfg.p + 1.0;
    const double cfac = cfg.model.time_dependent_diffusion ? 1.5 : 1.0;
    double denom = std::max(cfg.model.k_f * umax, cfg.model.k_r);
    for (int l = 0; l < cfg.dim; ++l) {
        denom += std::abs(cfg.model.a[l]) * pp * pp / w[l];
        denom += cfg.model.d * cfac * umax * pp * pp * pp * pp / (w[l] * w[l]);
    }
    return cfg.time.cfl / denom;
}

char fmt_buf[64];

const char* fmt(double v) {
    std::snprintf(fmt_buf, sizeof fmt_buf, "%.16e", v);
    return fmt_buf;
}

} // namespace

RunConfig run_config_from_json_text(const std::string& text) {
    return parse_run_config(parse_json_text(text, "config"));
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(parse_json_text(read_file(path), ("config '" + path + "'").c_str()));
}

std::string resolved_config_json(const RunConfig& cfg) {
    return config_to_json(cfg).dump(2) + "\n";
}

StudyConfig study_config_from_json_text(const std::string& text) {
    json j = parse_json_text(text, "study config");
    check_keys(j, "study config",
               {"base", "p_values", "levels", "level_overrides", "threshold"});
    if (!j.contains("base")) throw ConfigError("study config needs a 'base' run config");
    StudyConfig study;
    study.base = parse_run_config(j.at("base"));
    study.p_values = j.value("p_values", std::vector<int>{study.base.p});
    if (study.p_values.empty()) throw ConfigError("'p_values' must not be empty");
    if (!j.contains("levels")) throw ConfigError("study config needs 'levels'");
    for (const json& lvl : j.at("levels"))
        study.levels.push_back(per_direction<int>(lvl, study.base.dim, "levels"));
    if (study.levels.size() < 2)
        throw ConfigError("study config needs at least two refinement levels");
    study.threshold = j.value("threshold", study.threshold);
    if (study.threshold <= 0.0) throw ConfigError("'threshold' must be positive");

    std::vector<json> overrides(study.levels.size(), json::object());
    if (j.contains("level_overrides")) {
        const json& ov = j.at("level_overrides");
        if (!ov.is_array() || ov.size() != study.levels.size())
            throw ConfigError("'level_overrides' needs one entry per level");
        overrides.assign(ov.begin(), ov.end());
    }

    for (int p : study.p_values) {
        for (size_t il = 0; il < study.levels.size(); ++il) {
            json merged = j.at("base");
            merged["p"] = p;
            merged["k"] = study.levels[il];
            merged.merge_patch(overrides[il]);
            study.runs.push_back(parse_run_config(merged));
        }
    }
    return study;
}

StudyConfig load_study_config(const std::string& path) {
    return study_config_from_json_text(read_file(path));
}

Discretization build_discretization(const RunConfig& cfg) {
    Discretization d;
    std::array<int, 3> k{1, 1, 1};
    for (int l = 0; l < cfg.dim; ++l) k[l] = cfg.k[l];
    d.ops = extend_tensor(build_sbp_d1(cfg.p), cfg.dim, 2);
    d.mesh = build_box_mesh(cfg.dim, k, cfg.box);
    d.coords = apply_mapping(d.mesh, cfg.mapping, d.ops);
    d.metrics = compute_metrics(d.mesh, d.coords, d.ops);
    return d;
}

std::vector<double> initial_state(const RunConfig& cfg, const Discretization& d) {
    const int nn = d.ops.nodes_per_element;
    const int ne = d.mesh.n_elements;
    std::vector<double> u(2 * nn * ne);
    const InitialCondition& ic = cfg.initial_condition;

    if (ic.kind == "equilibrium" || ic.kind == "constant") {
        double levels[2] = {ic.P, ic.Q};
        if (ic.kind == "equilibrium") {
            EquilibriumPoint eq = equilibrium_from_mass(ic.mass, cfg.model.k_f, cfg.model.k_r);
            levels[0] = eq.P;
            levels[1] = eq.Q;
        }
        for (int i = 0; i < ne * nn; ++i) {
            u[2 * i] = levels[0];
            u[2 * i + 1] = levels[1];
        }
        return u;
    }

    double center[3] = {0.0, 0.0, 0.0};
    for (int l = 0; l < cfg.dim; ++l) center[l] = 0.5 * (cfg.box.lo[l] + cfg.box.hi[l]);
    for (int e = 0; e < ne; ++e) {
        for (int n = 0; n < nn; ++n) {
            const double* x = d.coords[e].data() + n * cfg.dim;
            double* un = u.data() + (e * nn + n) * 2;
            if (ic.kind == "mms") {
                mms_solution(cfg.dim, x, 0.0, cfg.mms.sqrt_form, un);
            } else {
                double r2 = 0.0;
                for (int l = 0; l < cfg.dim; ++l) r2 += (x[l] - center[l]) * (x[l] - center[l]);
                const double s = 0.5 * (1.0 - std::tanh((std::sqrt(r2) - ic.radius) / ic.width));
                for (int c = 0; c < 2; ++c)
                    un[c] = ic.outside[c] + (ic.inside[c] - ic.outside[c]) * s;
            }
        }
    }
    return u;
}

std::vector<double> mms_state(const RunConfig& cfg, const Discretization& d, double t) {
    const int nn = d.ops.nodes_per_element;
    const int ne = d.mesh.n_elements;
    std::vector<double> u(2 * nn * ne);
    for (int e = 0; e < ne; ++e)
        for (int n = 0; n < nn; ++n)
            mms_solution(cfg.dim, d.coords[e].data() + n * cfg.dim, t, cfg.mms.sqrt_form,
                         u.data() + (e * nn + n) * 2);
    return u;
}

double mj_weighted_mass(const Discretization& d, const std::vector<double>& u) {
    const int nn = d.ops.nodes_per_element;
    const int ne = d.mesh.n_elements;
    double mass = 0.0, vol = 0.0;
    for (int e = 0; e < ne; ++e) {
        for (int n = 0; n < nn; ++n) {
            const double mj = d.ops.mass[n] * d.metrics.J(e, n);
            mass += mj * DimerizationModel::conserved_mass_density(u.data() + (e * nn + n) * 2);
            vol += mj;
        }
    }
    return mass / vol;
}

DimerizationModel build_model(const RunConfig& cfg, double mass) {
    EquilibriumPoint eq;
    if (cfg.equilibrium_reference.kind == "state") {
        eq.P = cfg.equilibrium_reference.P;
        eq.Q = cfg.equilibrium_reference.Q;
    } else {
        eq = equilibrium_from_mass(mass, cfg.model.k_f, cfg.model.k_r);
    }
    return DimerizationModel(cfg.model, eq);
}

RunResult execute_run(const RunConfig& cfg) {
    Discretization d = build_discretization(cfg);
    RunResult res;
    res.u = initial_state(cfg, d);
    res.mass = mj_weighted_mass(d, res.u);
    res.predicted_eq = equilibrium_from_mass(res.mass, cfg.model.k_f, cfg.model.k_r);
    DimerizationModel model = build_model(cfg, res.mass);

    RhsConfig rc;
    rc.enable_viscous = cfg.model.d > 0.0;
    rc.enable_diss_c = cfg.diss_c;
    rc.enable_diss_d = cfg.diss_d && cfg.model.d > 0.0;
    rc.enable_reaction = true;
    rc.mms_forcing = cfg.mms.forcing;
    ForcingFunction forcing;
    if (cfg.mms.forcing) {
        const DimerParams params = cfg.model;
        const bool sqrt_form = cfg.mms.sqrt_form;
        forcing = [params, sqrt_form](int dim, const double* x, double t, double* out) {
            mms_forcing(params, dim, x, t, sqrt_form, out);
        };
    }
    SemidiscreteRhs rhs(d.mesh, d.metrics, d.ops, model, rc, forcing);

    OdeSystem sys;
    sys.dim = rhs.dofs();
    GlobalState st;
    sys.rhs = [&](double t, const std::vector<double>& y, std::vector<double>& dydt) {
        st.t = t;
        st.u.assign(y.begin(), y.end());
        dydt.resize(y.size());
        return rhs.assemble_rhs(st, dydt).dVdt;
    };
    sys.functional = [&](const std::vector<double>& y) {
        return lyapunov_functional(d.ops, d.metrics, model, y);
    };

    const ButcherTableau tab =
        cfg.tableau_file.empty() ? tableau_library(cfg.tableau) : load_tableau(cfg.tableau_file);

    res.series.component_names = {"P", "Q"};
    std::vector<double> scratch(sys.dim);
    auto sample = [&](double t, double gamma, double dt, const std::vector<double>& y) {
        st.t = t;
        st.u.assign(y.begin(), y.end());
        const LyapunovBalanceTerms terms = rhs.assemble_rhs(st, scratch);
        res.series.rows.push_back(
            balance_sample(t, terms, gamma, dt, d.ops, d.metrics, model, y));
    };

    const double dt0 = cfg.time.dt > 0.0 ? cfg.time.dt : heuristic_dt(cfg, d, res.u);
    if (cfg.stride > 0) sample(0.0, 1.0, 0.0, res.u);

    long accepted = 0;
    double last_gamma = 1.0, last_dt = 0.0, last_t = 0.0;
    StepObserver obs = [&](double t, double dt, const RelaxationStep& rel,
                           const std::vector<double>& y) {
        ++accepted;
        last_gamma = rel.gamma;
        last_dt = dt;
        last_t = t;
        if (cfg.stride > 0 && accepted % cfg.stride == 0) sample(t, rel.gamma, dt, y);
    };

    try {
        if (cfg.time.mode == "fixed") {
            res.stats = fixed_advance(sys, tab, 0.0, cfg.time.t_end, dt0, res.u,
                                      cfg.relaxation, obs);
        } else {
            StepController ctl;
            ctl.dt = dt0;
            ctl.rtol = cfg.time.rtol;
            ctl.atol = cfg.time.atol;
            ctl.safety = cfg.time.safety;
            ctl.dt_min = cfg.time.dt_min;
            ctl.dt_max = cfg.time.dt_max;
            res.stats = adaptive_advance(sys, tab, ctl, 0.0, cfg.time.t_end, res.u,
                                         cfg.relaxation, obs);
        }
        res.t = res.stats.final_t;
    } catch (const IntegrationError& err) {
        res.failed = true;
        res.error = err.what();
        res.t = last_t;
    } catch (const RelaxationError& err) {
        res.failed = true;
        res.error = err.what();
        res.t = last_t;
    }

    if (cfg.stride > 0 && (res.series.rows.empty() || res.series.rows.back().t != res.t))
        sample(res.t, last_gamma, last_dt, res.u);
    return res;
}

int cmd_verify_operators(int p_min, int p_max, int dim_min, int dim_max,
                         const std::string& report_path, bool inject_defect) {
    if (p_min < 1 || p_max < p_min || p_max > 12)
        throw ConfigError("operator verification needs 1 <= p_min <= p_max <= 12");
    if (dim_min < 1 || dim_max < dim_min || dim_max > 3)
        throw ConfigError("operator verification needs 1 <= dim_min <= dim_max <= 3");

    json report;
    report["results"] = json::array();
    bool all_pass = true;

    for (int p = p_min; p <= p_max; ++p) {
        SbpOperator1D op = build_sbp_d1(p);
        if (inject_defect) op.d[0] += 1e-3;
        const SbpVerification v = verify_sbp(op);

        for (int dim = dim_min; dim <= dim_max; ++dim) {
            json checks = json::array();
            auto add = [&](const char* name, double residual, double tolerance) {
                const bool pass = residual <= tolerance;
                all_pass = all_pass && pass;
                checks.push_back({{"name", name},
                                  {"residual", residual},
                                  {"tolerance", tolerance},
                                  {"pass", pass}});
            };
            add("q_plus_qt_boundary", v.qqt_residual, v.tolerance);
            add("derivative_accuracy", v.accuracy_residual, v.tolerance);
            add("quadrature_exactness", v.quadrature_residual, v.tolerance);
            add("weight_sum", v.weight_sum_residual, v.tolerance);
            add("hd_q_consistency", v.dh_consistency, v.tolerance);
            add("endpoint_nodes", v.endpoint_residual, v.tolerance);

            const TensorOperatorSet ops = extend_tensor(op, dim, 2);
            std::array<int, 3> k{1, 1, 1};
            for (int l = 0; l < dim; ++l) k[l] = 2;
            Box box;
            const MeshGeometry mesh = build_box_mesh(dim, k, box);
            Mapping affine;
            const ElementCoords coords = apply_mapping(mesh, affine, ops);
            const MetricData metrics = compute_metrics(mesh, coords, ops);
            add("gcl_affine", check_gcl(mesh, metrics, ops), 1e-12);
            add("discrete_volume", std::abs(discrete_volume(mesh, metrics, ops) - 1.0), 1e-12);

            if (dim == 2) {
                Box wbox;
                wbox.hi = {2.0, 2.0, 1.0};
                const MeshGeometry wmesh = build_box_mesh(2, {2, 2, 1}, wbox);
                Mapping warp;
                warp.kind = MappingKind::smooth_warp_2d;
                warp.alpha = 0.08;
                const ElementCoords wcoords = apply_mapping(wmesh, warp, ops);
                const MetricData wmetrics = compute_metrics(wmesh, wcoords, ops);
                add("gcl_warped", check_gcl(wmesh, wmetrics, ops), 1e-12);
            }

            bool block_pass = true;
            for (const json& c : checks) block_pass = block_pass && c.at("pass").get<bool>();
            report["results"].push_back(
                {{"p", p}, {"dim", dim}, {"pass", block_pass}, {"checks", checks}});
            std::printf("p=%d dim=%d: %s\n", p, dim, block_pass ? "PASS" : "FAIL");
        }
    }

    report["pass"] = all_pass;
    write_file(report_path, report.dump(2) + "\n");
    std::printf("operator verification: %s (report: %s)\n", all_pass ? "PASS" : "FAIL",
                report_path.c_str());
    return all_pass ? 0 : 1;
}

int cmd_run(const RunConfig& cfg, bool dump_operators, bool dump_mesh) {
    std::filesystem::create_directories(cfg.output_dir);
    const std::string dir = cfg.output_dir + "/";
    write_file(dir + "resolved_config.json", resolved_config_json(cfg));

    const Discretization d = build_discretization(cfg);
    if (dump_operators) write_file(dir + "operators.txt", dump_operator_text(d.ops.op1d));
    if (dump_mesh) write_file(dir + "mesh.csv", mesh_coords_csv(d.mesh, d.coords));

    RunResult res = execute_run(cfg);
    if (cfg.stride > 0) write_balance_series_csv(res.series, dir + "balance.csv");

    // Final (or last good) state with node coordinates.
    std::string state_csv;
    {
        const char* axes[3] = {"x", "y", "z"};
        for (int l = 0; l < cfg.dim; ++l) {
            state_csv += axes[l];
            state_csv += ',';
        }
        state_csv += "P,Q\n";
        const int nn = d.ops.nodes_per_element;
        for (int e = 0; e < d.mesh.n_elements; ++e) {
            for (int n = 0; n < nn; ++n) {
                for (int l = 0; l < cfg.dim; ++l) {
                    state_csv += fmt(d.coords[e][n * cfg.dim + l]);
                    state_csv += ',';
                }
                state_csv += fmt(res.u[(e * nn + n) * 2]);
                state_csv += ',';
                state_csv += fmt(res.u[(e * nn + n) * 2 + 1]);
                state_csv += '\n';
            }
        }
    }
    write_file(dir + "final_state.csv", state_csv);

    const DimerizationModel model = build_model(cfg, res.mass);
    const double v_final = lyapunov_functional(d.ops, d.metrics, model, res.u);
    double dist[2] = {0.0, 0.0};
    for (size_t i = 0; i < res.u.size(); i += 2) {
        dist[0] = std::max(dist[0], std::abs(res.u[i] - model.equilibrium()[0]));
        dist[1] = std::max(dist[1], std::abs(res.u[i + 1] - model.equilibrium()[1]));
    }

    json summary;
    summary["config"] = config_to_json(cfg);
    summary["stats"] = {{"accepted", res.stats.accepted},
                        {"rejected_error", res.stats.rejected_error},
                        {"rejected_admissibility", res.stats.rejected_admissibility},
                        {"relaxation_fallbacks", res.stats.relaxation_fallbacks},
                        {"last_dt", res.stats.last_dt}};
    summary["result"] = {{"t", res.t},
                         {"V", v_final},
                         {"mass", res.mass},
                         {"predicted_equilibrium", {{"P", res.predicted_eq.P},
                                                    {"Q", res.predicted_eq.Q}}},
                         {"distance", {dist[0], dist[1]}}};
    const std::optional<double> t_eq = equilibrium_tracking(res.series, 1e-8);
    summary["result"]["t_eq"] = t_eq ? json(*t_eq) : json(nullptr);
    summary["failed"] = res.failed;
    if (res.failed) summary["error"] = res.error;
    write_file(dir + "summary.json", summary.dump(2) + "\n");

    if (res.failed) {
        std::fprintf(stderr, "integration failed at t=%.6g: %s\n", res.t, res.error.c_str());
        std::fprintf(stderr, "last good state written to %sfinal_state.csv\n", dir.c_str());
        return 3;
    }
    std::printf("run finished: t=%.6g steps=%d V=%.6e dist=(%.6e, %.6e)\n", res.t,
                res.stats.accepted, v_final, dist[0], dist[1]);
    std::printf("predicted equilibrium from mass %.12g: (%.12g, %.12g)\n", res.mass,
                res.predicted_eq.P, res.predicted_eq.Q);
    return 0;
}

int cmd_mms_convergence(const StudyConfig& study, const std::string& output_dir) {
    for (const RunConfig& cfg : study.runs)
        if (cfg.initial_condition.kind != "mms" || !cfg.mms.forcing)
            throw ConfigError("mms-convergence needs initial_condition.kind \"mms\" and "
                              "mms.forcing true");
    std::filesystem::create_directories(output_dir);

    const int nl = (int)study.levels.size();
    std::string table, csv = "p,level,k,h,l1_P,rate_l1,l2_P,rate_l2,linf_P,rate_linf,"
                             "l1_Q,l2_Q,linf_Q\n";
    for (size_t ip = 0; ip < study.p_values.size(); ++ip) {
        std::vector<double> h(nl), l1(nl), l2(nl), linf(nl);
        std::vector<ErrorNorms> norms(nl);
        for (int il = 0; il < nl; ++il) {
            const RunConfig& cfg = study.run((int)ip, il);
            const RunResult res = execute_run(cfg);
            if (res.failed)
                throw IntegrationError("mms run failed: " + res.error, res.t, 0.0);
            const Discretization d = build_discretization(cfg);
            norms[il] = error_norms(d.ops, d.metrics, res.u, mms_state(cfg, d, res.t));
            const std::array<double, 3> w = d.mesh.element_widths();
            h[il] = 0.0;
            for (int l = 0; l < cfg.dim; ++l) h[il] = std::max(h[il], w[l]);
            l1[il] = norms[il].l1[0];
            l2[il] = norms[il].l2[0];
            linf[il] = norms[il].linf[0];
        }
        const std::vector<double> r1 = convergence_rates(h, l1);
        const std::vector<double> r2 = convergence_rates(h, l2);
        const std::vector<double> ri = convergence_rates(h, linf);

        char line[256];
        std::snprintf(line, sizeof line, "p = %d\n  %-12s %-10s %-13s %-7s %-13s %-7s %-13s %-7s\n",
                      study.p_values[ip], "K", "h", "L1(P)", "rate", "L2(P)", "rate", "Linf(P)",
                      "rate");
        table += line;
        for (int il = 0; il < nl; ++il) {
            std::string kstr;
            for (size_t l = 0; l < study.levels[il].size(); ++l) {
                if (l) kstr += "x";
                kstr += std::to_string(study.levels[il][l]);
            }
            auto rate = [&](const std::vector<double>& r) {
                if (il == 0) return std::string("-");
                char b[32];
                std::snprintf(b, sizeof b, "%.3f", r[il - 1]);
                return std::string(b);
            };
            std::snprintf(line, sizeof line,
                          "  %-12s %-10.4e %-13.5e %-7s %-13.5e %-7s %-13.5e %-7s\n",
                          kstr.c_str(), h[il], l1[il], rate(r1).c_str(), l2[il],
                          rate(r2).c_str(), linf[il], rate(ri).c_str());
            table += line;

            csv += std::to_string(study.p_values[ip]) + "," + std::to_string(il) + "," + kstr;
            const double vals[] = {h[il],
                                   l1[il],
                                   il ? r1[il - 1] : std::nan(""),
                                   l2[il],
                                   il ? r2[il - 1] : std::nan(""),
                                   linf[il],
                                   il ? ri[il - 1] : std::nan(""),
                                   norms[il].l1[1],
                                   norms[il].l2[1],
                                   norms[il].linf[1]};
            for (double v : vals) {
                csv += ',';
                csv += fmt(v);
            }
            csv += '\n';
        }
        table += '\n';
    }
    std::fputs(table.c_str(), stdout);
    write_file(output_dir + "/mms_table.txt", table);
    write_file(output_dir + "/mms_convergence.csv", csv);
    return 0;
}

int cmd_equilibrium_study(const StudyConfig& study, const std::string& output_dir) {
    for (const RunConfig& cfg : study.runs)
        if (cfg.stride < 1)
            throw ConfigError("equilibrium-study needs stride >= 1 to track distances");
    std::filesystem::create_directories(output_dir);

    std::string table = "equilibrium approach, threshold " + std::to_string(study.threshold) +
                        "\n  p     K            T_eq\n";
    std::string csv = "p,k,threshold,reached,t_eq\n";
    for (size_t ip = 0; ip < study.p_values.size(); ++ip) {
        for (size_t il = 0; il < study.levels.size(); ++il) {
            const RunConfig& cfg = study.run((int)ip, (int)il);
            const RunResult res = execute_run(cfg);
            if (res.failed)
                throw IntegrationError("equilibrium run failed: " + res.error, res.t, 0.0);
            const std::optional<double> t_eq = equilibrium_tracking(res.series, study.threshold);

            std::string kstr;
            for (size_t l = 0; l < study.levels[il].size(); ++l) {
                if (l) kstr += "x";
                kstr += std::to_string(study.levels[il][l]);
            }
            char line[128];
            if (t_eq)
                std::snprintf(line, sizeof line, "  %-5d %-12s %.6f\n", study.p_values[ip],
                              kstr.c_str(), *t_eq);
            else
                std::snprintf(line, sizeof line, "  %-5d %-12s not reached\n",
                              study.p_values[ip], kstr.c_str());
            table += line;
            csv += std::to_string(study.p_values[ip]) + "," + kstr + ",";
            csv += fmt(study.threshold);
            csv += t_eq ? ",1," : ",0,";
            csv += fmt(t_eq ? *t_eq : std::nan(""));
            csv += '\n';
        }
    }
    std::fputs(table.c_str(), stdout);
    write_file(output_dir + "/equilibrium_study.txt", table);
    write_file(output_dir + "/equilibrium_study.csv", csv);
    return 0;
}

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Lyapunov-consistent discretization of convection-diffusion-reaction systems"};
    app.require_subcommand(1);

    auto* vo = app.add_subcommand("verify-operators",
                                  "certify discrete operator and metric identities");
    int p_min = 1, p_max = 8, dim_min = 1, dim_max = 3;
    std::string vo_report = "operator_report.json", vo_dir = ".";
    bool inject = false;
    vo->add_option("--p-min", p_min, "smallest polynomial degree");
    vo->add_option("--p-max", p_max, "largest polynomial degree");
    vo->add_option("--dim-min", dim_min, "smallest dimension");
    vo->add_option("--dim-max", dim_max, "largest dimension");
    vo->add_option("--report", vo_report, "report file name");
    vo->add_option("--output-dir", vo_dir, "directory for the report");
    vo->add_flag("--inject-defect", inject,
                 "perturb the derivative operator so the checks must fail");

    auto* run = app.add_subcommand("run", "integrate one configured problem");
    std::string run_cfg_path, run_dir;
    int threads = 0;
    bool deterministic = false, dump_ops = false, dump_mesh = false;
    run->add_option("--config", run_cfg_path, "run config JSON")->required();
    run->add_option("--output-dir", run_dir, "override the config's output_dir");
    run->add_option("--threads", threads, "worker threads (evaluation is serial)");
    run->add_flag("--deterministic", deterministic, "force deterministic evaluation");
    run->add_flag("--dump-operators", dump_ops, "write the 1D operator tables");
    run->add_flag("--dump-mesh", dump_mesh, "write node coordinates");

    auto* mms = app.add_subcommand("mms-convergence",
                                   "manufactured-solution convergence study");
    std::string mms_cfg_path, mms_dir;
    mms->add_option("--config", mms_cfg_path, "study config JSON")->required();
    mms->add_option("--output-dir", mms_dir, "directory for table and CSV");

    auto* eq = app.add_subcommand("equilibrium-study", "equilibrium-approach time study");
    std::string eq_cfg_path, eq_dir;
    eq->add_option("--config", eq_cfg_path, "study config JSON")->required();
    eq->add_option("--output-dir", eq_dir, "directory for table and CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    try {
        if (vo->parsed()) {
            std::filesystem::create_directories(vo_dir);
            std::string report = vo_report;
            if (!report.empty() && report.find('/') == std::string::npos)
                report = vo_dir + "/" + report;
            return cmd_verify_operators(p_min, p_max, dim_min, dim_max, report, inject);
        }
        if (run->parsed()) {
            RunConfig cfg = load_run_config(run_cfg_path);
            if (!run_dir.empty()) cfg.output_dir = run_dir;
            if (threads > 0) cfg.threads = threads;
            if (deterministic) cfg.deterministic = true;
            return cmd_run(cfg, dump_ops, dump_mesh);
        }
        if (mms->parsed()) {
            const StudyConfig study = load_study_config(mms_cfg_path);
            return cmd_mms_convergence(study,
                                       mms_dir.empty() ? study.base.output_dir : mms_dir);
        }
        if (eq->parsed()) {
            const StudyConfig study = load_study_config(eq_cfg_path);
            return cmd_equilibrium_study(study,
                                         eq_dir.empty() ? study.base.output_dir : eq_dir);
        }
    } catch (const ConfigError& err) {
        std::fprintf(stderr, "config error: %s\n", err.what());
        return 2;
    } catch (const UsageError& err) {
        std::fprintf(stderr, "usage error: %s\n", err.what());
        return 2;
    } catch (const IntegrationError& err) {
        std::fprintf(stderr, "integration error: %s\n", err.what());
        return 3;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 4;
    }
    return 0;
}

} // namespace lyapdg
