#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <json.hpp>

#include "filtration/common.hpp"
#include "filtration/density_analysis.hpp"
#include "filtration/experiments.hpp"
#include "filtration/problem_model.hpp"
#include "filtration/radial_solver.hpp"
#include "filtration/table.hpp"

namespace filtration {

inline constexpr const char* software_version = "filtration_lab 1.0.0";

enum class ExitCode { Pass = 0, CriteriaFail = 1, ConfigError = 2, NumericalFailure = 3 };

// ---------------------------------------------------------------------------
// Configuration schema

enum class ValueType { Int, Real, OptionalReal, IntList, RealList, Choice };

struct KeySpec {
    std::string key;
    ValueType type;
    std::string fallback;
    std::vector<std::string> choices = {};
};

inline const std::vector<KeySpec>& config_schema() {
    static const std::vector<KeySpec> schema = {
        {"problem.dimension", ValueType::Int, "3"},
        {"problem.horizon", ValueType::Real, "1"},
        {"density.kind", ValueType::Choice, "shifted_power", {"shifted_power", "power", "constant"}},
        {"density.alpha", ValueType::Real, "4"},
        {"density.rhat", ValueType::Real, "1"},
        {"density.value", ValueType::Real, "1"},
        {"nonlinearity.m", ValueType::Real, "2"},
        {"initial.kind", ValueType::Choice, "algebraic", {"constant", "bump", "algebraic"}},
        {"initial.base", ValueType::Real, "1"},
        {"initial.amplitude", ValueType::Real, "0.5"},
        {"initial.width", ValueType::Real, "2"},
        {"trace.start", ValueType::Real, "1"},
        {"trace.slope", ValueType::Real, "0"},
        {"trace2.start", ValueType::Real, "2"},
        {"trace2.slope", ValueType::Real, "0"},
        {"scheme.h", ValueType::Real, "0.1"},
        {"scheme.dt", ValueType::Real, "0.01"},
        {"scheme.newton_tol", ValueType::Real, "1e-12"},
        {"scheme.max_newton", ValueType::Int, "50"},
        {"scheme.eps_reg", ValueType::Real, "1e-10"},
        {"scheme.damping", ValueType::Real, "1"},
        {"scheme.output_stride", ValueType::Int, "1"},
        {"classify.expect", ValueType::Choice, "none", {"none", "SlowDecay", "FastDecay"}},
        {"solve.j", ValueType::Int, "20"},
        {"study.j_list", ValueType::IntList, "10,20,40"},
        {"study.compact_radius", ValueType::Real, "5"},
        {"study.attainment_j", ValueType::Int, "80"},
        {"study.radii", ValueType::RealList, "10,20,40"},
        {"study.attainment_tol", ValueType::Real, "0.05"},
        {"study.threshold", ValueType::Real, "0.05"},
        {"barriers.t0", ValueType::Real, "0.5"},
        {"barriers.sigma", ValueType::Real, "0.1"},
        {"barriers.fd_step", ValueType::Real, "0.01"},
        {"barriers.j", ValueType::Int, "40"},
        {"barriers.alpha_level", ValueType::OptionalReal, "0.9"},
        {"duality.mode", ValueType::Choice, "same-trace", {"same-trace", "contrast"}},
        {"duality.n_list", ValueType::IntList, "20,40,80"},
        {"duality.tau", ValueType::Real, "0.5"},
        {"duality.n0", ValueType::Real, "2"},
        {"duality.slope_tol", ValueType::Real, "0.3"},
        {"weakform.field", ValueType::Choice, "oracle", {"oracle", "solve"}},
        {"weakform.inner", ValueType::Real, "0"},
        {"weakform.outer", ValueType::Real, "2"},
        {"weakform.slope", ValueType::Real, "1"},
        {"weakform.tau", ValueType::Real, "0.2"},
        {"weakform.intervals", ValueType::Int, "50"},
        {"weakform.dt", ValueType::Real, "0.004"},
        {"weakform.min_ratio", ValueType::Real, "1.8"},
    };
    return schema;
}

inline const KeySpec* find_key(const std::string& key) {
    for (const auto& k : config_schema())
        if (k.key == key) return &k;
    return nullptr;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) out.push_back(trim(item));
    return out;
}

inline double parse_real(const std::string& v, const std::string& where) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty() || !std::isfinite(x)) throw ConfigError(where + ": not a finite number: '" + v + "'");
    return x;
}

inline long parse_int(const std::string& v, const std::string& where) {
    std::size_t used = 0;
    long x = 0;
    try {
        x = std::stol(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw ConfigError(where + ": not an integer: '" + v + "'");
    return x;
}

inline void check_value(const KeySpec& spec, const std::string& v, const std::string& where) {
    switch (spec.type) {
        case ValueType::Int: parse_int(v, where); break;
        case ValueType::Real: parse_real(v, where); break;
        case ValueType::OptionalReal:
            if (v != "none") parse_real(v, where);
            break;
        case ValueType::IntList:
            for (const auto& x : split(v, ',')) parse_int(x, where);
            break;
        case ValueType::RealList:
            for (const auto& x : split(v, ',')) parse_real(x, where);
            break;
        case ValueType::Choice:
            if (std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end())
                throw ConfigError(where + ": invalid value '" + v + "' for " + spec.key);
            break;
    }
}

}  // namespace detail

/// Validated key-value settings plus the run-level flags.
struct RunConfig {
    std::string subcommand;
    std::string source = "<defaults>";
    std::filesystem::path out_dir = "out";
    int workers = 1;
    std::map<std::string, std::string> values;

    RunConfig() {
        for (const auto& k : config_schema()) values[k.key] = k.fallback;
    }

    const std::string& raw(const std::string& key) const {
        const auto it = values.find(key);
        if (it == values.end()) throw ConfigError("unknown key '" + key + "'");
        return it->second;
    }
    double real(const std::string& key) const { return detail::parse_real(raw(key), key); }
    int integer(const std::string& key) const { return static_cast<int>(detail::parse_int(raw(key), key)); }
    std::optional<double> optional_real(const std::string& key) const {
        if (raw(key) == "none") return std::nullopt;
        return real(key);
    }
    std::vector<int> int_list(const std::string& key) const {
        std::vector<int> out;
        for (const auto& x : detail::split(raw(key), ',')) out.push_back(static_cast<int>(detail::parse_int(x, key)));
        return out;
    }
    std::vector<double> real_list(const std::string& key) const {
        std::vector<double> out;
        for (const auto& x : detail::split(raw(key), ',')) out.push_back(detail::parse_real(x, key));
        return out;
    }

    /// One `key = value` line per schema key, in schema order.
    std::string echo() const {
        std::ostringstream os;
        for (const auto& k : config_schema()) os << k.key << " = " << values.at(k.key) << '\n';
        return os.str();
    }

    void set(const std::string& key, const std::string& value, const std::string& where) {
        const auto* spec = find_key(key);
        if (!spec) throw ConfigError(where + ": unknown key '" + key + "'");
        detail::check_value(*spec, value, where);
        values[key] = value;
    }
};

/// Flat `section.key = value` lines; `#` starts a comment. Unknown or repeated keys are errors.
inline RunConfig parse_config_text(const std::string& text, const std::string& source = "<text>") {
    RunConfig cfg;
    cfg.source = source;
    std::istringstream is(text);
    std::map<std::string, int> seen;
    int line_no = 0;
    for (std::string line; std::getline(is, line);) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
        const auto key = detail::trim(line.substr(0, eq));
        const auto value = detail::trim(line.substr(eq + 1));
        if (seen.count(key))
            throw ConfigError(where + ": key '" + key + "' repeats line " + std::to_string(seen[key]));
        seen[key] = line_no;
        cfg.set(key, value, where);
    }
    return cfg;
}

inline RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

/// `key=value` from the command line.
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "': expected key=value");
    cfg.set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)),
            "override '" + assignment + "'");
}

// ---------------------------------------------------------------------------
// Building the model from a config

inline RadialDensity config_density(const RunConfig& c) {
    const auto& kind = c.raw("density.kind");
    const double rhat = c.real("density.rhat");
    if (kind == "constant") return constant_density(c.real("density.value"), rhat);
    const double alpha = c.real("density.alpha");
    if (kind == "shifted_power") return shifted_power_density(alpha, rhat);
    if (alpha < 0.0) throw PreconditionError("power density requires alpha >= 0");
    RadialDensity d;
    d.rho = [alpha](double r) { return std::pow(r, -alpha); };
    d.upper = power_law_envelope(alpha);
    d.lower = power_law_envelope(alpha);
    d.rhat = rhat;
    return d;
}

inline InitialDatum config_initial(const RunConfig& c) {
    const auto& kind = c.raw("initial.kind");
    const double base = c.real("initial.base");
    if (kind == "constant") return constant_initial(base);
    if (kind == "bump") return bump_initial(base, c.real("initial.amplitude"), c.real("initial.width"));
    return algebraic_initial(base, c.real("initial.amplitude"));
}

inline BoundaryTrace config_trace(const RunConfig& c, const std::string& section, double horizon) {
    return linear_trace(c.real(section + ".start"), c.real(section + ".slope"), horizon);
}

inline ProblemSpec config_problem(const RunConfig& c) {
    const double T = c.real("problem.horizon");
    if (c.raw("density.kind") == "power" && c.real("density.alpha") > 0.0)
        throw PreconditionError("power density is singular at the origin; use density.kind = shifted_power");
    ProblemSpec p{c.integer("problem.dimension"), T, config_density(c), make_power_nonlinearity(c.real("nonlinearity.m")),
                  config_initial(c), config_trace(c, "trace", T)};
    return p;
}

inline BallDiscretization config_discretization(const RunConfig& c) {
    BallDiscretization d;
    d.h = c.real("scheme.h");
    d.scheme.dt = c.real("scheme.dt");
    d.scheme.newton_tol = c.real("scheme.newton_tol");
    d.scheme.max_newton = c.integer("scheme.max_newton");
    d.scheme.eps_reg = c.real("scheme.eps_reg");
    d.scheme.damping = c.real("scheme.damping");
    d.scheme.output_stride = c.integer("scheme.output_stride");
    d.scheme.validate();
    if (!(d.h > 0.0)) throw PreconditionError("scheme.h must be positive");
    return d;
}

// ---------------------------------------------------------------------------
// Manifest

inline std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

struct TaskRecord {
    std::string name;
    double seconds = 0.0;
    bool pass = false;
};

struct FileRecord {
    std::string path;  // relative to the output directory
    std::string sha256;
    std::size_t bytes = 0;
};

struct RunManifest {
    std::string subcommand;
    std::string config_echo;
    int workers = 1;
    std::vector<TaskRecord> tasks;
    std::vector<FileRecord> files;
    ExitCode exit_code = ExitCode::Pass;
    std::string diagnostics;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["software"] = software_version;
        j["subcommand"] = subcommand;
        j["workers"] = workers;
        j["exit_code"] = static_cast<int>(exit_code);
        j["diagnostics"] = diagnostics;
        j["config"] = nlohmann::ordered_json::object();
        std::istringstream is(config_echo);
        for (std::string line; std::getline(is, line);) {
            const auto eq = line.find(" = ");
            if (eq != std::string::npos) j["config"][line.substr(0, eq)] = line.substr(eq + 3);
        }
        j["tasks"] = nlohmann::ordered_json::array();
        for (const auto& t : tasks) j["tasks"].push_back({{"name", t.name}, {"wall_seconds", t.seconds}, {"pass", t.pass}});
        j["files"] = nlohmann::ordered_json::array();
        for (const auto& f : files) j["files"].push_back({{"path", f.path}, {"sha256", f.sha256}, {"bytes", f.bytes}});
        return j;
    }
};

/// Single writer for every emitted file; records the hash.
class OutputSink {
public:
    OutputSink(std::filesystem::path dir, RunManifest& manifest) : dir_(std::move(dir)), manifest_(manifest) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec || !std::filesystem::is_directory(dir_))
            throw ConfigError("output directory not writable: " + dir_.string());
    }

    void write(const std::string& name, const std::string& content) {
        const auto path = dir_ / name;
        std::ofstream os(path, std::ios::binary);
        if (!os) throw ConfigError("cannot write " + path.string());
        os << content;
        os.close();
        if (!os) throw ConfigError("write failed for " + path.string());
        manifest_.files.push_back({name, sha256_hex(content), content.size()});
    }

    void write_table(const std::string& name, const Table& t) {
        std::ostringstream os;
        t.write_csv(os);
        write(name, os.str());
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    RunManifest& manifest_;
};

// ---------------------------------------------------------------------------
// Subcommands

namespace detail {

using Clock = std::chrono::steady_clock;

template <class F>
bool timed_task(RunManifest& m, const std::string& name, F&& body) {
    const auto start = Clock::now();
    const bool ok = body();
    const std::chrono::duration<double> el = Clock::now() - start;
    m.tasks.push_back({name, el.count(), ok});
    return ok;
}

inline bool run_classify(const RunConfig& c, OutputSink& out, RunManifest& m) {
    return timed_task(m, "classify", [&] {
        const auto density = config_density(c);
        Table t({"side", "tag", "integral_estimate", "partial_integral", "tail_estimate", "decade_exponent",
                 "local_exponent"});
        DecayTag decision = DecayTag::Undetermined;
        for (auto side : {EnvelopeSide::lower, EnvelopeSide::upper}) {
            const auto cls = classify_decay(density, side);
            t.add(side == EnvelopeSide::lower ? "lower" : "upper", to_string(cls.tag), cls.integral_estimate,
                  cls.partial_integral, cls.tail_estimate, cls.decade_exponent, cls.local_exponent);
            if (cls.tag != DecayTag::Undetermined) decision = cls.tag;
        }
        t.add("decision", to_string(decision), "", "", "", "", "");
        out.write_table("classify.csv", t);
        const auto& expect = c.raw("classify.expect");
        return decision != DecayTag::Undetermined && (expect == "none" || expect == to_string(decision));
    });
}

inline bool run_solve(const RunConfig& c, OutputSink& out, RunManifest& m) {
    return timed_task(m, "solve", [&] {
        const auto p = config_problem(c);
        const auto d = config_discretization(c);
        const int j = c.integer("solve.j");
        const auto field = solve_ball(p, j, ball_grid(j, p.dimension, d.h), d.scheme);
        std::ostringstream csv, meta;
        write_field_csv(csv, field);
        write_field_metadata(meta, field);
        out.write("solution.csv", csv.str());
        out.write("solution.csv.meta", meta.str());
        return true;
    });
}

inline bool run_barriers(const RunConfig& c, OutputSink& out, RunManifest& m) {
    return timed_task(m, "barriers", [&] {
        const auto p = config_problem(c);
        CertificateOptions opt;
        opt.t0 = c.real("barriers.t0");
        opt.sigma = c.real("barriers.sigma");
        opt.fd_step = c.real("barriers.fd_step");
        opt.j = c.integer("barriers.j");
        opt.disc = config_discretization(c);
        opt.alpha_level = c.optional_real("barriers.alpha_level");
        const auto rep = barrier_certificate(p, opt);
        out.write_table("barrier_constants.csv", rep.table());
        for (const auto& [name, v] : {std::pair{"barrier_low.csv", &rep.low}, std::pair{"barrier_high.csv", &rep.high}}) {
            std::ostringstream os;
            write_verification_csv(os, *v);
            out.write(name, os.str());
        }
        return rep.passed();
    });
}

/// A(t) = int_0^t G(a(s)) ds.
inline ScalarFn trace_integral(const BoundaryTrace& trace, const Nonlinearity& nl) {
    return [=](double t) {
        if (t <= 0.0) return 0.0;
        return boost::math::quadrature::gauss<double, 20>::integrate([&](double s) { return nl(trace(s)); }, 0.0, t);
    };
}

inline bool run_limit_study(const RunConfig& c, OutputSink& out, RunManifest& m) {
    const auto p = config_problem(c);
    const auto d = config_discretization(c);
    const bool conv_ok = timed_task(m, "expanding-ball", [&] {
        const auto table = expanding_ball_study(p, c.int_list("study.j_list"), c.real("study.compact_radius"), d,
                                                c.workers);
        out.write_table("convergence.csv", table.table());
        bool ok = true;
        for (std::size_t i = 1; i < table.rows.size(); ++i) ok = ok && table.rows[i].distance <= table.rows[i - 1].distance;
        return ok;
    });
    const bool att_ok = timed_task(m, "attainment", [&] {
        const int j = c.integer("study.attainment_j");
        const auto radii = c.real_list("study.radii");
        const auto field = solve_ball(p, j, ball_grid(j, p.dimension, d.h), d.scheme);
        const auto prof = attainment_profile(field, p.trace, radii, 0.0, p.horizon);
        Table t({"R", "sup_abs_u_minus_a"});
        for (const auto& v : prof) t.add(v.R, v.value);
        out.write_table("attainment.csv", t);
        const auto integral = integral_condition_metric(field, p.nonlinearity, trace_integral(p.trace, p.nonlinearity), radii);
        Table ti({"R", "sup_abs_U_minus_A", "sphere_form"});
        for (const auto& r : integral) ti.add(r.R, r.sup_difference, r.sphere_form);
        out.write_table("integral_condition.csv", ti);
        bool ok = !prof.empty() && prof.back().value <= c.real("study.attainment_tol");
        for (std::size_t i = 1; i < prof.size(); ++i) ok = ok && prof[i].value < prof[i - 1].value;
        return ok;
    });
    return conv_ok && att_ok;
}

inline bool run_separation(const RunConfig& c, OutputSink& out, RunManifest& m, bool fast) {
    return timed_task(m, fast ? "nonuniqueness" : "uniqueness-cross", [&] {
        const auto p = config_problem(c);
        const auto d = config_discretization(c);
        const auto second = config_trace(c, "trace2", p.horizon);
        const auto rep = fast ? nonuniqueness_demo(p, p.trace, second, c.int_list("study.j_list"),
                                                   c.real("study.compact_radius"), d, c.workers,
                                                   c.real("study.threshold"))
                              : uniqueness_cross_bc(p, p.trace, second, c.int_list("study.j_list"),
                                                    c.real("study.compact_radius"), d, c.workers);
        out.write_table("separation.csv", rep.table());
        Table s({"quantity", "value"});
        s.add("stabilized", rep.stabilized);
        s.add("threshold", rep.threshold);
        s.add("distinct", rep.distinct);
        s.add("collapsed", rep.collapsed);
        s.add("compatible_first", rep.compatible_first);
        s.add("compatible_second", rep.compatible_second);
        out.write_table("separation_summary.csv", s);
        return fast ? rep.distinct : rep.collapsed;
    });
}

inline ScalarFn cutoff_chi(double n0) {
    return [n0](double r) {
        if (r >= n0) return 0.0;
        const double c = std::cos(0.5 * std::numbers::pi * r / n0);
        return c * c;
    };
}

inline bool run_duality(const RunConfig& c, OutputSink& out, RunManifest& m) {
    return timed_task(m, "duality", [&] {
        const auto p = config_problem(c);
        auto d = config_discretization(c);
        const double n0 = c.real("duality.n0");
        const bool same = c.raw("duality.mode") == "same-trace";
        const auto rep = same ? duality_same_trace(p, cutoff_chi(n0), c.int_list("duality.n_list"),
                                                   c.real("duality.tau"), n0, d, c.workers)
                              : duality_trace_contrast(p, config_trace(c, "trace2", p.horizon), cutoff_chi(n0),
                                                        c.int_list("duality.n_list"), c.real("duality.tau"), n0, d,
                                                        c.workers);
        out.write_table("duality.csv", rep.table());
        Table s({"quantity", "value"});
        s.add("flux_slope", rep.flux_slope);
        s.add("fitted_constant", rep.fitted_constant);
        s.add("psi_bounds_ok", rep.psi_bounds_ok);
        s.add("flux_bounds_ok", rep.flux_bounds_ok);
        s.add("quadratic_ok", rep.quadratic_ok);
        s.add("defect_nonincreasing", rep.defect_nonincreasing);
        s.add("mass_decreasing", rep.mass_decreasing);
        out.write_table("duality_summary.csv", s);
        const bool common = rep.psi_bounds_ok && rep.quadratic_ok;
        if (!same) return common;
        const double target = 1.0 - p.dimension;
        return common && rep.mass_decreasing && std::abs(rep.flux_slope - target) <= c.real("duality.slope_tol");
    });
}

/// Linear oracle: G = id, rho = 1 on the ball of radius pi, u(r,t) = e^{-t} sin(r)/r.
inline SolutionField heat_oracle(int dimension, std::size_t intervals, double dt, double horizon) {
    if (dimension != 3) throw PreconditionError("the linear oracle field is defined for dimension 3");
    const auto grid = RadialGrid::uniform(0.0, std::numbers::pi, intervals, 3);
    EvolutionProblem ev{grid,
                        std::vector<double>(grid.size(), 1.0),
                        make_power_nonlinearity(1.0),
                        BoundaryCondition::symmetry(),
                        BoundaryCondition::dirichlet([](double) { return 0.0; }),
                        sample_on(grid, [](double r) { return r < 1e-8 ? 1.0 - r * r / 6.0 : std::sin(r) / r; }),
                        0.0,
                        horizon,
                        std::nullopt};
    SchemeParams s;
    s.dt = dt;
    return evolve(ev, s);
}

inline bool run_weakform(const RunConfig& c, OutputSink& out, RunManifest& m) {
    return timed_task(m, "weakform", [&] {
        const bool oracle = c.raw("weakform.field") == "oracle";
        const double tau = c.real("weakform.tau");
        const auto psi = polynomial_bump(c.real("weakform.inner"), c.real("weakform.outer"),
                                         c.integer("problem.dimension"), c.real("weakform.slope"));
        Table t({"level", "h", "dt", "lhs", "rhs", "residual"});
        std::vector<double> res;
        for (int level = 0; level < 2; ++level) {
            const double scale = level == 0 ? 1.0 : 0.5;
            SolutionField field;
            ScalarFn rho;
            Nonlinearity nl = make_power_nonlinearity(1.0);
            if (oracle) {
                field = heat_oracle(c.integer("problem.dimension"),
                                    static_cast<std::size_t>(c.integer("weakform.intervals")) << level,
                                    c.real("weakform.dt") * scale, tau);
                rho = [](double) { return 1.0; };
            } else {
                const auto p = config_problem(c);
                auto d = config_discretization(c);
                d.h *= scale;
                d.scheme.dt *= scale;
                const int j = c.integer("solve.j");
                field = solve_ball(p, j, ball_grid(j, p.dimension, d.h), d.scheme);
                rho = p.density.rho;
                nl = p.nonlinearity;
            }
            const auto w = weak_residual(field, rho, nl, psi, tau);
            t.add(level, field.grid.h, field.times[1] - field.times[0], w.lhs, w.rhs, w.residual);
            res.push_back(w.residual);
        }
        out.write_table("weakform.csv", t);
        return res[1] == 0.0 || res[0] / res[1] >= c.real("weakform.min_ratio");
    });
}

}  // namespace detail

inline const std::vector<std::string>& subcommands() {
    static const std::vector<std::string> names = {"classify", "solve", "barriers", "limit-study",
                                                   "nonuniqueness", "uniqueness-cross", "duality", "weakform"};
    return names;
}

/// Runs one subcommand, writes its tables, the config echo and manifest.json into cfg.out_dir.
inline RunManifest dispatch(const RunConfig& cfg) {
    RunManifest m;
    m.subcommand = cfg.subcommand;
    m.config_echo = cfg.echo();
    m.workers = cfg.workers;
    if (std::find(subcommands().begin(), subcommands().end(), cfg.subcommand) == subcommands().end()) {
        m.exit_code = ExitCode::ConfigError;
        m.diagnostics = "unknown subcommand '" + cfg.subcommand + "'";
        return m;
    }
    std::optional<OutputSink> sink;
    try {
        sink.emplace(cfg.out_dir, m);
        sink->write("config.echo", m.config_echo);
        bool ok = false;
        const auto& s = cfg.subcommand;
        if (s == "classify") ok = detail::run_classify(cfg, *sink, m);
        else if (s == "solve") ok = detail::run_solve(cfg, *sink, m);
        else if (s == "barriers") ok = detail::run_barriers(cfg, *sink, m);
        else if (s == "limit-study") ok = detail::run_limit_study(cfg, *sink, m);
        else if (s == "nonuniqueness") ok = detail::run_separation(cfg, *sink, m, true);
        else if (s == "uniqueness-cross") ok = detail::run_separation(cfg, *sink, m, false);
        else if (s == "duality") ok = detail::run_duality(cfg, *sink, m);
        else ok = detail::run_weakform(cfg, *sink, m);
        m.exit_code = ok ? ExitCode::Pass : ExitCode::CriteriaFail;
        if (!ok) m.diagnostics = "pass criteria not met";
    } catch (const ConfigError& e) {
        m.exit_code = ExitCode::ConfigError;
        m.diagnostics = e.what();
    } catch (const PreconditionError& e) {
        m.exit_code = ExitCode::ConfigError;
        m.diagnostics = e.what();
    } catch (const std::exception& e) {
        m.exit_code = ExitCode::NumericalFailure;
        m.diagnostics = e.what();
    }
    if (sink) {
        try {
            std::ofstream os(sink->dir() / "manifest.json");
            os << m.to_json().dump(2) << '\n';
        } catch (const std::exception& e) {
            m.exit_code = ExitCode::ConfigError;
            m.diagnostics = e.what();
        }
    }
    return m;
}

}  // namespace filtration
