#include "hwsched/ctmc.hpp"
#include "hwsched/det_system.hpp"
#include "hwsched/diffusion.hpp"
#include "hwsched/error.hpp"
#include "hwsched/hjb.hpp"
#include "hwsched/io.hpp"
#include "hwsched/model.hpp"
#include "hwsched/path_calculus.hpp"
#include "hwsched/rng.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hwsched;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit : int { ok = 0, check_failed = 1, bad_input = 2 };

/// JSON config files. Nested objects address subcommands; flat keys go to the
/// selected subcommand when it has such an option, else to the top level.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(const CLI::App* app) : app_(app) {}

    std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json doc;
        try {
            doc = json::parse(input);
        } catch (const json::exception& e) {
            throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw CLI::ConversionError("config must be a JSON object");
        std::vector<CLI::ConfigItem> items;
        walk(doc, {}, items);
        return items;
    }

private:
    static std::string scalar(const json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    void walk(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) const {
        for (const auto& [raw_key, value] : obj.items()) {
            std::string key = raw_key;
            std::replace(key.begin(), key.end(), '_', '-');
            if (value.is_object()) {
                auto next = parents;
                next.push_back(key);
                walk(value, next, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& a : value) item.inputs.push_back(scalar(a));
            } else {
                item.inputs.push_back(scalar(value));
            }
            if (item.parents.empty()) {
                for (const auto* sub : app_->get_subcommands()) {
                    if (sub->get_option_no_throw("--" + key) != nullptr) item.parents.push_back(sub->get_name());
                }
            }
            out.push_back(std::move(item));
        }
    }

    const CLI::App* app_;
};

struct Globals {
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out = "out";
};

json option_values(const CLI::App* app) {
    json cfg = json::object();
    for (const auto* opt : app->get_options()) {
        const auto name = opt->get_lnames().empty() ? std::string() : opt->get_lnames().front();
        if (name.empty() || name == "help" || name == "config") continue;
        if (opt->count() > 0) {
            const auto& r = opt->results();
            cfg[name] = r.size() == 1 ? json(r.front()) : json(r);
        } else if (!opt->get_default_str().empty()) {
            cfg[name] = opt->get_default_str();
        }
    }
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw InputError("cannot write " + path.string());
    os << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) out.push_back(part);
    return out;
}

std::vector<double> parse_numbers(const std::string& s) {
    std::vector<double> out;
    for (const auto& p : split(s, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(p, &used));
            if (used != p.size()) throw std::invalid_argument(p);
        } catch (const std::exception&) {
            throw InputError("not a number: '" + p + "'");
        }
    }
    return out;
}

std::size_t parse_index(const std::string& s) {
    const auto v = parse_numbers(s);
    if (v.size() != 1 || v[0] < 0 || v[0] != std::floor(v[0])) throw InputError("not an index: '" + s + "'");
    return static_cast<std::size_t>(v[0]);
}

ControlPoint parse_control(const std::string& s, const TreeModel& m) {
    const auto parts = split(s, ';');
    if (parts.size() != 2) throw InputError("control must look like 'u0,u1;v0,v1'");
    ControlPoint c{parse_numbers(parts[0]), parse_numbers(parts[1])};
    if (c.u.size() != m.classes || c.v.size() != m.stations || !c.in_simplex(1e-9))
        throw InputError("control '" + s + "' is not a point of the simplex product");
    return c;
}

/// static:i,j | fixed:u..;v.. | random:period | grid:<header> | grid-linear:<header>
Policy parse_policy(const std::string& spec, const TreeModel& m, std::uint64_t seed) {
    const auto colon = spec.find(':');
    if (colon == std::string::npos) throw InputError("policy spec needs a kind, e.g. 'static:0,0'");
    const auto kind = spec.substr(0, colon);
    const auto arg = spec.substr(colon + 1);
    if (kind == "static") {
        const auto idx = split(arg, ',');
        if (idx.size() != 2) throw InputError("static policy needs 'static:class,station'");
        Policy p(StaticPriority{parse_index(idx[0]), parse_index(idx[1])});
        p.check(m);
        return p;
    }
    if (kind == "fixed") return Policy(FixedControl{parse_control(arg, m)});
    if (kind == "random") {
        const auto v = parse_numbers(arg);
        if (v.size() != 1) throw InputError("random policy needs 'random:period'");
        Policy p(RandomSwitching{v[0], seed});
        p.check(m);
        return p;
    }
    if (kind == "grid" || kind == "grid-linear") {
        auto loaded = load_policy_field(arg);
        if (!loaded.model_hash.empty() && loaded.model_hash != model_hash(m))
            throw InputError("policy file was computed for a different model");
        Policy p(GridMarkov{std::make_shared<const PolicyField>(std::move(loaded.field)),
                            kind == "grid" ? Interpolation::nearest : Interpolation::multilinear});
        p.check(m);
        return p;
    }
    throw InputError("unknown policy kind '" + kind + "'");
}

/// w_i(t) = w0_i + slope_i t + amp_i sin(t).
std::vector<TimeSeries> drivers(const TreeModel& m, std::vector<double> w0, std::vector<double> slope,
                                std::vector<double> amp, double dt, double horizon) {
    auto fill = [&](std::vector<double>& v, double d, const char* name) {
        if (v.empty()) v.assign(m.classes, d);
        if (v.size() == 1) v.assign(m.classes, v[0]);
        if (v.size() != m.classes) throw InputError(std::string(name) + " needs one value per class");
    };
    fill(w0, 1.0, "--w0");
    fill(slope, 1.0, "--slope");
    fill(amp, 0.0, "--amp");
    if (!(dt > 0.0) || !(horizon > dt)) throw InputError("need 0 < dt < horizon");
    const auto n = static_cast<std::size_t>(std::llround(horizon / dt)) + 1;
    std::vector<TimeSeries> w;
    for (std::size_t i = 0; i < m.classes; ++i) {
        std::vector<double> s(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = dt * static_cast<double>(k);
            s[k] = w0[i] + slope[i] * t + amp[i] * std::sin(t);
        }
        w.emplace_back(dt, std::move(s));
    }
    return w;
}

/// Open-loop samples of a state-free policy.
ControlPath open_loop(const Policy& p, const TreeModel& m, double dt, std::size_t n, std::uint64_t path) {
    if (std::holds_alternative<GridMarkov>(p.kind())) throw InputError("open-loop controls cannot use a grid policy");
    ControlPath out{dt, {}};
    const std::vector<double> x(m.classes, 0.0);
    for (std::size_t k = 0; k < n; ++k) out.points.push_back(p(dt * static_cast<double>(k), x, m.stations, path));
    return out;
}

std::vector<double> state_arg(std::vector<double> v, const TreeModel& m, const char* name) {
    if (v.empty()) v.assign(m.classes, 0.0);
    if (v.size() == 1) v.assign(m.classes, v[0]);
    if (v.size() != m.classes) throw InputError(std::string(name) + " needs one value per class");
    return v;
}

AssignmentRule parse_rule(const std::string& spec, const TreeModel& m) {
    const auto colon = spec.find(':');
    const auto kind = spec.substr(0, colon);
    const auto arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
    if (kind == "static") {
        const auto idx = split(arg, ',');
        if (idx.size() != 2) throw InputError("static rule needs 'static:class,station'");
        return static_priority_rule(m, parse_index(idx[0]), parse_index(idx[1]));
    }
    if (kind == "track") return tracking_rule(m, parse_control(arg, m));
    throw InputError("unknown assignment rule '" + kind + "'");
}

Policy policy_for_rule(const std::string& spec, const TreeModel& m) {
    const auto colon = spec.find(':');
    const auto kind = spec.substr(0, colon);
    const auto arg = colon == std::string::npos ? std::string() : spec.substr(colon + 1);
    if (kind == "track") return Policy(FixedControl{parse_control(arg, m)});
    return parse_policy(spec, m, 0);
}

RunningCostSpec require_cost(const ModelFile& mf) {
    if (!mf.cost) throw InputError("the model file has no cost section");
    return *mf.cost;
}

CLI::Option* add_list(CLI::App* sub, const std::string& name, std::vector<double>& v, const std::string& desc) {
    return sub->add_option(name, v, desc)->delimiter(',')->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Diffusion scheduling control on buffer-station trees"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", kVersion);
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    app.set_config("--config", "", "JSON config file; command-line flags take precedence");

    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads (0 = OpenMP default)")->capture_default_str();
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    std::string model_path;
    auto model_opt = [&](CLI::App* sub) { sub->add_option("--model", model_path, "Model JSON file")->required(); };

    // validate
    auto* validate = app.add_subcommand("validate", "Check the tree structure, rates and balance equations");
    model_opt(validate);

    // simulate
    std::vector<double> x0;
    std::string policy_spec = "static:0,0";
    double horizon = 10.0, dt = 1e-3;
    std::size_t paths = 1;
    double moment_order = 0.0;
    std::vector<double> times;
    auto* simulate = app.add_subcommand("simulate", "Euler-Maruyama paths and moment curves");
    model_opt(simulate);
    add_list(simulate, "--x0", x0, "Initial state (one value or one per class)");
    simulate->add_option("--policy", policy_spec, "static:i,j | fixed:u;v | random:period | grid[-linear]:<header>")
        ->capture_default_str();
    simulate->add_option("--horizon", horizon, "Time horizon")->capture_default_str();
    simulate->add_option("--dt", dt, "Time step")->capture_default_str();
    simulate->add_option("--paths", paths, "Number of paths (CSV written for the first 10)")->capture_default_str();
    simulate->add_option("--moment-order", moment_order, "Also estimate E|X(t)|^m at --times")->capture_default_str();
    add_list(simulate, "--times", times, "Moment times (default 1,2,4,...,horizon)");

    // solve-hjb
    double h = 0.0, half_width = 6.0, tol = 1e-8, sensitivity = 0.0, boundary_dt = 1e-2;
    std::size_t count = 121, max_iter = 2'000'000, boundary_paths = 256;
    std::string boundary = "cost-to-go", sweep = "jacobi";
    auto* solve = app.add_subcommand("solve-hjb", "Upwind value iteration for the HJB equation");
    model_opt(solve);
    solve->add_option("--spacing", h, "Grid spacing (overrides --count)")->capture_default_str();
    solve->add_option("--count", count, "Points per axis")->capture_default_str();
    solve->add_option("--half-width", half_width, "Box half-width in units of r_i / sqrt(2 gamma)")->capture_default_str();
    solve->add_option("--boundary", boundary, "cost-to-go | extrapolate")->capture_default_str();
    solve->add_option("--sweep", sweep, "jacobi | gauss-seidel")->capture_default_str();
    solve->add_option("--tol", tol, "Sup-norm update tolerance")->capture_default_str();
    solve->add_option("--max-iter", max_iter, "Iteration cap")->capture_default_str();
    solve->add_option("--boundary-paths", boundary_paths, "Paths per boundary point (cost-to-go)")->capture_default_str();
    solve->add_option("--boundary-dt", boundary_dt, "Time step for boundary simulations")->capture_default_str();
    solve->add_option("--sensitivity", sensitivity, "Re-solve on a box this many times larger (0 = off)")
        ->capture_default_str();

    // extract-policy
    std::string value_path;
    auto* extract = app.add_subcommand("extract-policy", "Hamiltonian argmin policy from a value field");
    model_opt(extract);
    extract->add_option("--value", value_path, "Value field header (.json)")->required();

    // evaluate-policy
    std::string compare_value;
    auto* evaluate = app.add_subcommand("evaluate-policy", "Monte Carlo discounted cost under a policy");
    model_opt(evaluate);
    add_list(evaluate, "--x0", x0, "Initial state");
    evaluate->add_option("--policy", policy_spec, "Policy spec")->capture_default_str();
    evaluate->add_option("--paths", paths, "Monte Carlo paths")->capture_default_str();
    evaluate->add_option("--dt", dt, "Time step")->capture_default_str();
    evaluate->add_option("--horizon", horizon, "Horizon (0 = 12/gamma)");
    evaluate->add_option("--value", compare_value, "Value field to compare with at x0");

    // det-run and nonidling-check
    std::vector<double> w0, slope, amp;
    std::string control_spec = "static:0,0";
    std::size_t n_controls = 50;
    auto* det = app.add_subcommand("det-run", "Integrate the deterministic system");
    auto* nonidle = app.add_subcommand("nonidling-check", "Measure idleness under increasing drivers");
    for (auto* sub : {det, nonidle}) {
        model_opt(sub);
        add_list(sub, "--w0", w0, "Driver intercepts");
        add_list(sub, "--slope", slope, "Driver slopes");
        add_list(sub, "--amp", amp, "Driver sine amplitudes");
        sub->add_option("--dt", dt, "Time step")->capture_default_str();
        sub->add_option("--horizon", horizon, "Horizon")->capture_default_str();
    }
    det->add_option("--control", control_spec, "static:i,j | fixed:u;v | random:period")->capture_default_str();
    nonidle->add_option("--controls", n_controls, "Random switching control paths")->capture_default_str();
    nonidle->add_option("--tol", tol, "Idleness tolerance")->capture_default_str();

    // counterexample
    double k_scale = 1.0;
    auto* counter = app.add_subcommand("counterexample", "Closed-form non-tree trajectories with zero driver");
    counter->add_option("--k", k_scale, "Amplitude")->capture_default_str();
    counter->add_option("--dt", dt, "Time step")->capture_default_str();
    counter->add_option("--horizon", horizon, "Horizon")->capture_default_str();
    counter->add_option("--tol", tol, "Residual tolerance")->capture_default_str();

    // integral-residual
    std::size_t root = 0;
    auto* integral = app.add_subcommand("integral-residual", "Residual of the reduced integral equation");
    model_opt(integral);
    integral->add_option("--root", root, "Root class")->capture_default_str();
    add_list(integral, "--w0", w0, "Driver intercepts");
    add_list(integral, "--slope", slope, "Driver slopes");
    add_list(integral, "--amp", amp, "Driver sine amplitudes");
    integral->add_option("--control", control_spec, "Open-loop control")->capture_default_str();
    integral->add_option("--dt", dt, "Time step")->capture_default_str();
    integral->add_option("--horizon", horizon, "Horizon")->capture_default_str();
    integral->add_option("--tol", tol, "Residual tolerance")->capture_default_str();

    // prelimit and compare
    std::size_t n_scale = 100, replications = 1;
    std::vector<double> lambda_hat;
    std::string rule_spec = "static:0,0";
    double dt_out = 1e-2;
    double max_z = 0.0;
    auto* prelimit = app.add_subcommand("prelimit", "Simulate the n-th queueing system");
    auto* compare = app.add_subcommand("compare", "Pre-limit versus diffusion moments");
    for (auto* sub : {prelimit, compare}) {
        model_opt(sub);
        sub->add_option("--n", n_scale, "Scaling index")->capture_default_str();
        add_list(sub, "--lambda-hat", lambda_hat, "Second-order arrival terms");
        sub->add_option("--rule", rule_spec, "static:i,j | track:u;v")->capture_default_str();
        add_list(sub, "--x0", x0, "Scaled initial state");
        sub->add_option("--replications", replications, "Replications")->capture_default_str();
    }
    prelimit->add_option("--horizon", horizon, "Horizon")->capture_default_str();
    prelimit->add_option("--dt-out", dt_out, "Output spacing")->capture_default_str();
    add_list(compare, "--times", times, "Comparison times")->required();
    compare->add_option("--dt", dt, "Diffusion time step")->capture_default_str();
    compare->add_option("--max-z", max_z, "Fail when a |z| score exceeds this (0 = report only)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::bad_input;
    }

    auto* sub = app.get_subcommands().front();
    try {
        if (g.threads < 0) throw InputError("--threads must be nonnegative");
        if (g.threads > 0) omp_set_num_threads(g.threads);
        const fs::path out(g.out);
        fs::create_directories(out);

        json manifest;
        manifest["command"] = sub->get_name();
        manifest["config"] = option_values(sub);
        manifest["config"].update(option_values(&app));
        manifest["seed"] = g.seed;
        manifest["threads"] = g.threads;
        manifest["versions"] = {{"hwsched", kVersion}, {"compiler", __VERSION__}, {"openmp", _OPENMP}};
        write_json(out / "manifest.json", manifest);

        const auto name = sub->get_name();
        json report;
        int status = Exit::ok;

        if (name == "counterexample") {
            const auto rep = example1_counterexample(k_scale, dt, horizon);
            std::ofstream os(out / "counterexample.csv");
            write_counterexample_csv(os, rep);
            report = {{"k", k_scale},
                      {"residual_state", rep.residual_state},
                      {"residual_quadrature", rep.residual_quadrature},
                      {"residual_class_sums", rep.residual_class_sums},
                      {"residual_station_sums", rep.residual_station_sums},
                      {"residual_sign", rep.residual_sign},
                      {"max_residual", rep.max_residual()},
                      {"sup_state_norm", rep.sup_state_norm},
                      {"sup_driver_norm", rep.sup_driver_norm},
                      {"tolerance", tol}};
            status = rep.max_residual() <= tol ? Exit::ok : Exit::check_failed;
            std::cout << "max residual " << rep.max_residual() << " (tolerance " << tol << "), sup |x| "
                      << rep.sup_state_norm << ", sup |w| " << rep.sup_driver_norm << "\n";
            write_json(out / "counterexample.json", report);
            return status;
        }

        const auto mf = load_model(model_path);
        const auto& model = mf.model;

        if (name == "validate") {
            const auto vr = validate_model(model);
            report = {{"valid", vr.valid()},
                      {"violations", vr.violations},
                      {"connected", vr.connected},
                      {"edge_count_ok", vr.edge_count_ok},
                      {"diameter", vr.diameter},
                      {"model_hash", model_hash(model)}};
            if (vr.valid() && mf.cost) {
                std::vector<std::string> cases;
                for (auto c : classify_case(model, *mf.cost)) cases.push_back(to_string(c));
                report["theorem_cases"] = cases;
            }
            write_json(out / "validate.json", report);
            std::cout << report.dump(2) << "\n";
            return vr.valid() ? Exit::ok : Exit::check_failed;
        }

        require_valid(model);
        const TreeDynamics dyn(model);

        if (name == "simulate") {
            const auto start = state_arg(x0, model, "--x0");
            const auto policy = parse_policy(policy_spec, model, g.seed);
            const auto shown = std::min<std::size_t>(paths, 10);
            for (std::size_t p = 0; p < shown; ++p) {
                const auto path = simulate_path(dyn, start, policy, horizon, dt, g.seed, p);
                std::ofstream os(out / ("path_" + std::to_string(p) + ".csv"));
                write_path_csv(os, path);
            }
            report = {{"paths_written", shown}, {"policy", policy.describe()}};
            if (moment_order > 0.0) {
                auto ts = times.empty() ? geometric_times(1.0, horizon) : times;
                SampleOptions so{std::max<std::size_t>(paths, 2), dt, g.seed, Backend::openmp};
                const auto curve = moment_curve(dyn, policy, moment_order, ts, start, so);
                std::ofstream os(out / "moments.csv");
                write_moment_csv(os, curve);
                if (curve.times.size() >= 4 && std::all_of(curve.mean.begin(), curve.mean.end(), [](double v) { return v > 0.0; })) {
                    const auto gr = growth_report(curve.times, curve.mean);
                    report["growth"] = {{"poly_exponent", gr.poly_exponent}, {"poly_rss", gr.poly_rss},
                                        {"exp_rate", gr.exp_rate},           {"exp_rss", gr.exp_rss},
                                        {"polynomial_preferred", gr.polynomial_preferred()}};
                }
            }
            write_json(out / "simulate.json", report);
            std::cout << report.dump(2) << "\n";
            return Exit::ok;
        }

        if (name == "solve-hjb") {
            const auto cost = require_cost(mf);
            Grid grid;
            if (h > 0.0) {
                std::vector<GridAxis> axes;
                for (std::size_t i = 0; i < model.classes; ++i) {
                    const double w = half_width * model.r[i] / std::sqrt(2.0 * model.gamma);
                    const auto n = static_cast<std::size_t>(std::llround(2.0 * w / h)) + 1;
                    const double half = 0.5 * h * static_cast<double>(n - 1);
                    axes.push_back({-half, half, n});
                }
                grid = Grid(axes);
            } else {
                grid = Grid::centered_box(model, half_width, count);
            }
            HjbOptions opt;
            if (boundary == "cost-to-go") {
                opt.boundary = BoundaryMode::cost_to_go;
            } else if (boundary == "extrapolate") {
                opt.boundary = BoundaryMode::extrapolate;
            } else {
                throw InputError("--boundary must be cost-to-go or extrapolate");
            }
            if (sweep == "jacobi") {
                opt.sweep = SweepKind::jacobi;
            } else if (sweep == "gauss-seidel") {
                opt.sweep = SweepKind::gauss_seidel;
            } else {
                throw InputError("--sweep must be jacobi or gauss-seidel");
            }
            opt.tolerance = tol;
            opt.max_iterations = max_iter;
            opt.boundary_paths = boundary_paths;
            opt.boundary_dt = boundary_dt;
            opt.seed = g.seed;
            const auto sol = solve_hjb(dyn, cost, grid, opt);
            save_value_field(out / "value", sol.value, model);
            report = {{"converged", sol.report.converged},
                      {"iterations", sol.report.iterations},
                      {"last_update", sol.report.last_update},
                      {"pde_residual", sol.report.pde_residual},
                      {"update_history", sol.report.update_history},
                      {"grid_points", grid.size()}};
            if (sensitivity > 1.0) {
                const auto s = box_sensitivity(dyn, cost, sol, opt, sensitivity, 2);
                report["sensitivity"] = {{"factor", sensitivity},
                                         {"max_abs_diff", s.max_abs_diff},
                                         {"diff_at_center", s.diff_at_center}};
            }
            write_json(out / "hjb_report.json", report);
            std::cout << "converged after " << sol.report.iterations << " sweeps, pde residual "
                      << sol.report.pde_residual << "\n";
            return Exit::ok;
        }

        if (name == "extract-policy") {
            const auto cost = require_cost(mf);
            const auto loaded = load_value_field(value_path);
            if (loaded.model_hash != model_hash(model)) throw InputError("value field was computed for a different model");
            const auto pol = extract_policy(loaded.field, dyn, cost);
            save_policy_field(out / "policy", pol, model);
            std::cout << "wrote " << (out / "policy.json").string() << "\n";
            return Exit::ok;
        }

        if (name == "evaluate-policy") {
            const auto cost = require_cost(mf);
            const auto start = state_arg(x0, model, "--x0");
            const auto policy = parse_policy(policy_spec, model, g.seed);
            McOptions mc;
            mc.paths = paths;
            mc.dt = dt;
            mc.horizon = horizon > 0.0 && evaluate->count("--horizon") > 0 ? horizon : 0.0;
            mc.seed = g.seed;
            const auto est = mc_cost(dyn, cost, start, policy, mc);
            report = {{"mean", est.mean},       {"std_error", est.std_error}, {"paths", est.paths},
                      {"horizon", est.horizon}, {"tail_bound", est.tail_bound}, {"policy", policy.describe()}};
            std::cout << "cost " << est.mean << " +- " << est.std_error << " (tail <= " << est.tail_bound << ")\n";
            if (!compare_value.empty()) {
                const auto loaded = load_value_field(compare_value);
                if (loaded.model_hash != model_hash(model)) throw InputError("value field was computed for a different model");
                double hmax = 0.0;
                for (const auto& a : loaded.field.grid.axes()) hmax = std::max(hmax, a.step());
                const double f = loaded.field.at(start);
                const double gap = std::abs(f - est.mean);
                const double allowed = 3.0 * est.std_error + 5.0 * hmax;
                report["value_at_x0"] = f;
                report["abs_diff"] = gap;
                report["tolerance"] = allowed;
                status = gap <= allowed ? Exit::ok : Exit::check_failed;
                std::cout << "value " << f << ", |diff| " << gap << " vs tolerance " << allowed << " (3 SE + 5 h)\n";
            }
            write_json(out / "evaluate.json", report);
            return status;
        }

        if (name == "det-run") {
            const auto w = drivers(model, w0, slope, amp, dt, horizon);
            const auto policy = parse_policy(control_spec, model, g.seed);
            const auto tr = integrate_det(model, w, open_loop(policy, model, dt, w.front().size(), 0));
            std::ofstream os(out / "det.csv");
            write_det_csv(os, tr);
            std::cout << "wrote " << tr.size() << " rows\n";
            return Exit::ok;
        }

        if (name == "nonidling-check") {
            const auto w = drivers(model, w0, slope, amp, dt, horizon);
            double worst = 0.0;
            bool hyp = true;
            std::vector<std::string> flags;
            json runs = json::array();
            for (std::size_t c = 0; c < n_controls; ++c) {
                const Policy p(RandomSwitching{0.25, g.seed});
                const auto rep = check_nonidling(model, w, open_loop(p, model, dt, w.front().size(), c));
                worst = std::max(worst, rep.max_idle_norm);
                hyp = hyp && rep.hypotheses_hold;
                if (c == 0) flags = rep.flags;
                runs.push_back(rep.max_idle_norm);
            }
            report = {{"max_idle_norm", worst}, {"hypotheses_hold", hyp}, {"flags", flags},
                      {"runs", runs},           {"tolerance", tol}};
            write_json(out / "nonidling.json", report);
            std::cout << "max idleness " << worst << " over " << n_controls << " controls"
                      << (hyp ? "" : " (hypotheses do not hold)") << "\n";
            return hyp && worst > tol ? Exit::check_failed : Exit::ok;
        }

        if (name == "integral-residual") {
            const auto w = drivers(model, w0, slope, amp, dt, horizon);
            const auto policy = parse_policy(control_spec, model, g.seed);
            const auto tr = integrate_det(model, w, open_loop(policy, model, dt, w.front().size(), 0));
            const auto seqs = build_sequences(model, build_combinatorics(model, root));
            write_text(out / "sequences.json", sequences_to_json(seqs) + "\n");
            const auto res = residual_integral_eq(seqs, tr.w, tr.y, tr.z);
            std::ofstream os(out / "residual.csv");
            os << "t,residual\n";
            for (std::size_t k = 0; k < res.size(); ++k)
                os << format_double(res.time(k)) << ',' << format_double(res[k]) << '\n';
            report = {{"sup_residual", res.sup_abs()}, {"dt", dt}, {"tolerance", tol}};
            write_json(out / "integral_residual.json", report);
            std::cout << "sup residual " << res.sup_abs() << " at dt " << dt << "\n";
            return res.sup_abs() <= tol ? Exit::ok : Exit::check_failed;
        }

        ScalingSpec sc;
        sc.n = n_scale;
        sc.lambda_hat = lambda_hat;
        const auto start = state_arg(x0, model, "--x0");
        const auto rule = parse_rule(rule_spec, model);

        if (name == "prelimit") {
            CtmcOptions co;
            co.horizon = horizon;
            co.dt_out = dt_out;
            co.seed = g.seed;
            const auto shown = std::min<std::size_t>(replications, 10);
            json events = json::array();
            for (std::size_t r = 0; r < shown; ++r) {
                const auto path = simulate_ctmc(model, sc, rule, start, co, r);
                std::ofstream os(out / ("ctmc_path_" + std::to_string(r) + ".csv"));
                write_path_csv(os, path);
                events.push_back(path.events);
            }
            report = {{"rule", rule.name}, {"events", events}};
            write_json(out / "prelimit.json", report);
            std::cout << "wrote " << shown << " scaled paths\n";
            return Exit::ok;
        }

        if (name == "compare") {
            const auto limit = diffusion_limit(model, sc);
            const TreeDynamics ldyn(limit);
            const auto a = ctmc_samples(model, sc, rule, start, times, replications, g.seed);
            SampleOptions so{replications, dt, g.seed, Backend::openmp};
            const auto b = sample_states(ldyn, start, policy_for_rule(rule_spec, model), times, so);
            const auto rows = compare_to_diffusion(a, b);
            std::ofstream os(out / "compare.csv");
            write_comparison_csv(os, rows);
            double worst = 0.0;
            for (const auto& r : rows) worst = std::max({worst, std::abs(r.mean_z()), std::abs(r.var_z())});
            report = {{"max_abs_z", worst}, {"rows", rows.size()}, {"max_z", max_z}};
            write_json(out / "compare.json", report);
            std::cout << "max |z| " << worst << "\n";
            return max_z > 0.0 && worst > max_z ? Exit::check_failed : Exit::ok;
        }
        throw InputError("unknown command");
    } catch (const ConvergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::check_failed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::bad_input;
    }
}
