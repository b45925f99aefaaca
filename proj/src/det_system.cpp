#include "hwsched/det_system.hpp"

#include "hwsched/error.hpp"
#include "hwsched/tree_flow.hpp"

#include <algorithm>
#include <cmath>

namespace hwsched {

DetTrajectory integrate_det(const TreeModel& model, std::span<const TimeSeries> w,
                            const ControlPath& controls) {
    const TreeDynamics dyn(model);
    const auto I = model.classes;
    const auto J = model.stations;
    const auto E = model.edges.size();
    if (w.size() != I) throw InputError("one driver per class required");
    w.front().check();
    const double dt = w.front().dt;
    const auto n = w.front().size();
    for (const auto& s : w)
        if (s.dt != dt || s.size() != n) throw InputError("driver grid mismatch");
    if (controls.dt != dt || controls.points.size() < n) throw InputError("control grid mismatch");

    DetTrajectory tr;
    tr.dt = dt;
    tr.edges = model.edges;
    tr.w.assign(w.begin(), w.end());
    auto blank = [&] { return TimeSeries(dt, std::vector<double>(n, 0.0)); };
    tr.x.assign(I, blank());
    tr.y.assign(I, blank());
    tr.z.assign(J, blank());
    tr.psi.assign(E, blank());

    std::vector<double> int_psi(E, 0.0), int_y(I, 0.0);
    std::vector<double> x(I), y(I), z(J), flow(E);
    FlowScratch scratch;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < I; ++i) x[i] = w[i][k] - model.theta[i] * int_y[i];
        for (std::size_t e = 0; e < E; ++e) {
            const auto& a = model.edges[e];
            x[a.cls] -= model.mu(a.cls, a.station) * int_psi[e];
        }
        const auto& U = controls.points[k];
        if (U.u.size() != I || U.v.size() != J || !U.in_simplex(1e-9))
            throw InputError("control sample outside the simplex product");
        dyn.lift_into(x, U, y, z, flow, scratch);
        for (std::size_t i = 0; i < I; ++i) {
            tr.x[i][k] = x[i];
            tr.y[i][k] = y[i];
            int_y[i] += dt * y[i];
        }
        for (std::size_t j = 0; j < J; ++j) tr.z[j][k] = z[j];
        for (std::size_t e = 0; e < E; ++e) {
            tr.psi[e][k] = flow[e];
            int_psi[e] += dt * flow[e];
        }
    }
    return tr;
}

int hub_station(const TreeModel& model) {
    std::vector<std::size_t> degree(model.stations, 0);
    for (const auto& e : model.edges) ++degree[e.station];
    int hub = -1;
    for (std::size_t j = 0; j < model.stations; ++j) {
        if (degree[j] >= 2) {
            if (hub >= 0) return -1;  // two non-leaf stations: diameter > 3
            hub = static_cast<int>(j);
        }
    }
    if (hub >= 0) return hub;
    // Every station is a leaf: one class with a fan of stations. Use the fastest.
    if (model.classes != 1) return -1;
    double best = -1.0;
    for (const auto& e : model.edges) {
        if (model.mu(e.cls, e.station) > best) {
            best = model.mu(e.cls, e.station);
            hub = static_cast<int>(e.station);
        }
    }
    return hub;
}

NonidlingReport check_nonidling(const TreeModel& model, std::span<const TimeSeries> w,
                                const ControlPath& controls) {
    NonidlingReport rep;
    const auto vr = validate_model(model);
    if (vr.diameter > 3) {
        rep.hypotheses_hold = false;
        rep.flags.push_back("tree diameter exceeds 3");
    }
    const int hub = hub_station(model);
    if (hub < 0) {
        rep.hypotheses_hold = false;
        rep.flags.push_back("no hub station");
    } else {
        for (std::size_t i = 0; i < model.classes; ++i) {
            if (!model.has_edge(i, static_cast<std::size_t>(hub)) ||
                model.theta[i] > model.mu(i, static_cast<std::size_t>(hub))) {
                rep.hypotheses_hold = false;
                rep.flags.push_back("theta_" + std::to_string(i) + " exceeds the hub service rate");
            }
        }
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        const auto& s = w[i].values;
        if (s.empty() || !(s.front() > 0.0)) {
            rep.hypotheses_hold = false;
            rep.flags.push_back("driver " + std::to_string(i) + " does not start positive");
        }
        for (std::size_t k = 1; k < s.size(); ++k) {
            if (!(s[k] > s[k - 1])) {
                rep.hypotheses_hold = false;
                rep.flags.push_back("driver " + std::to_string(i) + " is not strictly increasing");
                break;
            }
        }
    }

    rep.trajectory = integrate_det(model, w, controls);
    for (std::size_t k = 0; k < rep.trajectory.size(); ++k) {
        double idle = 0.0;
        for (const auto& zj : rep.trajectory.z) idle += std::abs(zj[k]);
        rep.max_idle_norm = std::max(rep.max_idle_norm, idle);
    }
    return rep;
}

double CounterexampleReport::max_residual() const {
    return std::max({residual_state, residual_class_sums, residual_station_sums, residual_sign});
}

CounterexampleReport example1_counterexample(double k, double dt, double horizon) {
    if (!(k >= 0.0)) throw InputError("k must be nonnegative");
    if (!(dt > 0.0) || !(horizon > dt)) throw InputError("bad grid");
    const auto n = static_cast<std::size_t>(std::llround(horizon / dt)) + 1;
    constexpr double mu_A = 1.0;
    constexpr double mu_B = 2.0;

    CounterexampleReport rep;
    rep.k = k;
    auto blank = [&] { return TimeSeries(dt, std::vector<double>(n, 0.0)); };
    rep.x1 = rep.x2 = rep.psi_1A = rep.psi_2A = rep.psi_1B = rep.psi_2B = blank();

    for (std::size_t s = 0; s < n; ++s) {
        const double t = dt * static_cast<double>(s);
        const double e2 = std::exp(-2.0 * t);
        rep.psi_1A[s] = k;
        rep.psi_2A[s] = -k;
        rep.psi_1B[s] = -k * (1.0 + e2) / 2.0;
        rep.psi_2B[s] = k * (1.0 + e2) / 2.0;
        rep.x1[s] = k * (1.0 - e2) / 2.0;
        rep.x2[s] = -rep.x1[s];

        // Antiderivatives from 0 of the flows.
        const double int_1A = k * t;
        const double int_1B = -0.5 * k * (t + (1.0 - e2) / 2.0);
        const double int_2A = -int_1A;
        const double int_2B = -int_1B;
        // w = 0, y = 0, so the abandonment term vanishes for any theta.
        const double r1 = rep.x1[s] - (0.0 - mu_A * int_1A - mu_B * int_1B);
        const double r2 = rep.x2[s] - (0.0 - mu_A * int_2A - mu_B * int_2B);
        rep.residual_state = std::max({rep.residual_state, std::abs(r1), std::abs(r2)});

        const double c1 = rep.psi_1A[s] + rep.psi_1B[s] - rep.x1[s];
        const double c2 = rep.psi_2A[s] + rep.psi_2B[s] - rep.x2[s];
        rep.residual_class_sums = std::max({rep.residual_class_sums, std::abs(c1), std::abs(c2)});
        const double sA = rep.psi_1A[s] + rep.psi_2A[s];
        const double sB = rep.psi_1B[s] + rep.psi_2B[s];
        rep.residual_station_sums = std::max({rep.residual_station_sums, std::abs(sA), std::abs(sB)});

        rep.sup_state_norm = std::max(rep.sup_state_norm, std::abs(rep.x1[s]) + std::abs(rep.x2[s]));
    }
    // y = z = 0 identically: sign and complementarity constraints hold exactly.
    rep.residual_sign = 0.0;
    rep.sup_driver_norm = 0.0;

    const auto j1A = integrate(rep.psi_1A), j1B = integrate(rep.psi_1B);
    const auto j2A = integrate(rep.psi_2A), j2B = integrate(rep.psi_2B);
    for (std::size_t s = 0; s < n; ++s) {
        const double r1 = rep.x1[s] + mu_A * j1A[s] + mu_B * j1B[s];
        const double r2 = rep.x2[s] + mu_A * j2A[s] + mu_B * j2B[s];
        rep.residual_quadrature = std::max({rep.residual_quadrature, std::abs(r1), std::abs(r2)});
    }
    return rep;
}

GrowthReport growth_report(std::span<const double> times, std::span<const double> values) {
    if (times.size() != values.size()) throw InputError("times and values differ in length");
    if (times.size() < 4) throw InputError("growth_report needs at least four samples");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!(times[k] > 0.0) || (k > 0 && !(times[k] > times[k - 1])))
            throw InputError("times must be positive and strictly increasing");
        if (!(values[k] > 0.0)) throw InputError("growth_report needs positive values");
    }
    auto fit = [&](auto regressor, double& slope, double& intercept) {
        const auto n = static_cast<double>(times.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t k = 0; k < times.size(); ++k) {
            const double a = regressor(times[k]);
            const double b = std::log(values[k]);
            sx += a;
            sy += b;
            sxx += a * a;
            sxy += a * b;
        }
        slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        intercept = (sy - slope * sx) / n;
        double rss = 0.0;
        for (std::size_t k = 0; k < times.size(); ++k) {
            const double e = std::log(values[k]) - intercept - slope * regressor(times[k]);
            rss += e * e;
        }
        return rss;
    };
    GrowthReport rep;
    rep.poly_rss = fit([](double t) { return std::log1p(t); }, rep.poly_exponent, rep.poly_intercept);
    rep.exp_rss = fit([](double t) { return t; }, rep.exp_rate, rep.exp_intercept);
    return rep;
}

std::vector<double> geometric_times(double first, double last) {
    if (!(first > 0.0) || !(last >= first)) throw InputError("bad geometric range");
    std::vector<double> out;
    for (double t = first; t <= last * (1.0 + 1e-12); t *= 2.0) out.push_back(t);
    return out;
}

}  // namespace hwsched
