#include "hwsched/ctmc.hpp"

#include "hwsched/error.hpp"
#include "hwsched/rng.hpp"
#include "hwsched/tree_flow.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <queue>
#include <random>

namespace hwsched {

double ScalingSpec::arrival_rate(const TreeModel& m, std::size_t i) const {
    const double hat = lambda_hat.empty() ? 0.0 : lambda_hat[i];
    return static_cast<double>(n) * m.lambda[i] + std::sqrt(static_cast<double>(n)) * hat;
}

double ScalingSpec::service_rate(const TreeModel& m, std::size_t i, std::size_t j) const {
    const double hat = mu_hat.rows() == 0 ? 0.0 : mu_hat(i, j);
    return m.mu(i, j) + hat / std::sqrt(static_cast<double>(n));
}

std::int64_t ScalingSpec::servers(const TreeModel& m, std::size_t j) const {
    return std::llround(static_cast<double>(n) * m.nu[j]);
}

void ScalingSpec::check(const TreeModel& m) const {
    if (n == 0) throw InputError("scaling index n must be at least 1");
    if (!lambda_hat.empty() && lambda_hat.size() != m.classes)
        throw InputError("lambda_hat needs one entry per class");
    if (mu_hat.rows() != 0 && (mu_hat.rows() != m.classes || mu_hat.cols() != m.stations))
        throw InputError("mu_hat must be classes x stations");
    for (std::size_t i = 0; i < m.classes; ++i)
        if (!(arrival_rate(m, i) >= 0.0)) throw InputError("scaled arrival rate is negative");
    for (const auto& e : m.edges)
        if (!(service_rate(m, e.cls, e.station) > 0.0)) throw InputError("scaled service rate is not positive");
}

TreeModel diffusion_limit(const TreeModel& model, const ScalingSpec& scaling) {
    scaling.check(model);
    TreeModel out = model;
    for (std::size_t i = 0; i < model.classes; ++i) {
        out.ell[i] = scaling.lambda_hat.empty() ? 0.0 : scaling.lambda_hat[i];
        out.r[i] = std::sqrt(2.0 * model.lambda[i]);
    }
    if (scaling.mu_hat.rows() != 0)
        for (const auto& e : model.edges)
            out.ell[e.cls] -= scaling.mu_hat(e.cls, e.station) * model.psi_star(e.cls, e.station);
    return out;
}

std::vector<std::int64_t> CtmcState::queue(const TreeModel& m) const {
    std::vector<std::int64_t> y = X;
    for (std::size_t e = 0; e < m.edges.size(); ++e) y[m.edges[e].cls] -= psi[e];
    return y;
}

std::vector<std::int64_t> CtmcState::idle(const TreeModel& m) const {
    std::vector<std::int64_t> z = N;
    for (std::size_t e = 0; e < m.edges.size(); ++e) z[m.edges[e].station] -= psi[e];
    return z;
}

std::vector<std::string> state_violations(const TreeModel& m, const CtmcState& s) {
    std::vector<std::string> out;
    if (s.X.size() != m.classes || s.N.size() != m.stations || s.psi.size() != m.edges.size()) {
        out.emplace_back("state dimensions do not match the model");
        return out;
    }
    for (std::size_t e = 0; e < s.psi.size(); ++e)
        if (s.psi[e] < 0) out.push_back("negative in-service count on edge " + std::to_string(e));
    const auto y = s.queue(m);
    const auto z = s.idle(m);
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] < 0) out.push_back("class " + std::to_string(i) + " serves more customers than it has");
    for (std::size_t j = 0; j < z.size(); ++j)
        if (z[j] < 0) out.push_back("station " + std::to_string(j) + " uses more servers than it has");
    return out;
}

std::vector<std::int64_t> largest_remainder(std::int64_t total, std::span<const double> weights,
                                            std::span<const std::int64_t> cap) {
    const auto n = weights.size();
    if (total < 0) throw InputError("cannot split a negative total");
    if (cap.size() != n) throw InputError("one cap per weight required");
    const double W = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(W > 0.0)) throw InputError("weights must have a positive sum");
    std::vector<std::int64_t> out(n);
    std::vector<double> frac(n);
    std::int64_t used = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const double share = static_cast<double>(total) * weights[k] / W;
        out[k] = static_cast<std::int64_t>(std::floor(share));
        frac[k] = share - static_cast<double>(out[k]);
        used += out[k];
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; used < total; k = (k + 1) % n, ++used) ++out[order[k]];

    std::int64_t excess = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (out[k] > cap[k]) {
            excess += out[k] - cap[k];
            out[k] = cap[k];
        }
    }
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return weights[a] > weights[b]; });
    for (auto k : order) {
        const auto room = std::min(excess, cap[k] - out[k]);
        if (room > 0) {
            out[k] += room;
            excess -= room;
        }
    }
    if (excess > 0) throw InputError("total exceeds the sum of the caps");
    return out;
}

namespace {

/// Maximum flow from classes (supply X) to stations (capacity N) over the edges.
void max_flow_assignment(const TreeModel& m, CtmcState& s) {
    const auto I = m.classes;
    const auto J = m.stations;
    const auto V = I + J + 2;
    const auto src = I + J;
    const auto snk = I + J + 1;
    constexpr auto big = std::numeric_limits<std::int64_t>::max() / 4;
    std::vector<std::int64_t> cap(V * V, 0);
    auto c = [&](std::size_t a, std::size_t b) -> std::int64_t& { return cap[a * V + b]; };
    for (std::size_t i = 0; i < I; ++i) c(src, i) = s.X[i];
    for (std::size_t j = 0; j < J; ++j) c(I + j, snk) = s.N[j];
    for (const auto& e : m.edges) c(e.cls, I + e.station) = big;
    const auto original = cap;
    std::vector<int> prev(V);
    while (true) {
        std::fill(prev.begin(), prev.end(), -1);
        prev[src] = static_cast<int>(src);
        std::queue<std::size_t> q;
        q.push(src);
        while (!q.empty() && prev[snk] < 0) {
            const auto a = q.front();
            q.pop();
            for (std::size_t b = 0; b < V; ++b) {
                if (prev[b] < 0 && c(a, b) > 0) {
                    prev[b] = static_cast<int>(a);
                    q.push(b);
                }
            }
        }
        if (prev[snk] < 0) break;
        std::int64_t push = big;
        for (auto b = snk; b != src; b = static_cast<std::size_t>(prev[b]))
            push = std::min(push, c(static_cast<std::size_t>(prev[b]), b));
        for (auto b = snk; b != src; b = static_cast<std::size_t>(prev[b])) {
            const auto a = static_cast<std::size_t>(prev[b]);
            c(a, b) -= push;
            c(b, a) += push;
        }
    }
    for (std::size_t e = 0; e < m.edges.size(); ++e) {
        const auto a = m.edges[e].cls;
        const auto b = I + m.edges[e].station;
        s.psi[e] = original[a * V + b] - cap[a * V + b];
    }
}

}  // namespace

AssignmentRule tracking_rule(const TreeModel& model, const ControlPoint& control) {
    if (control.u.size() != model.classes || control.v.size() != model.stations || !control.in_simplex(1e-9))
        throw InputError("tracking control is not a point of the simplex product");
    auto lifting = std::make_shared<const LiftingMap>(model);
    auto assign = [lifting, control](const TreeModel& m, CtmcState& s) {
        const auto I = m.classes;
        const auto J = m.stations;
        const std::int64_t excess = std::accumulate(s.X.begin(), s.X.end(), std::int64_t{0}) -
                                    std::accumulate(s.N.begin(), s.N.end(), std::int64_t{0});
        std::vector<std::int64_t> y(I, 0), z(J, 0);
        if (excess > 0) y = largest_remainder(excess, control.u, s.X);
        if (excess < 0) z = largest_remainder(-excess, control.v, s.N);
        thread_local FlowScratch scratch;
        thread_local std::vector<double> alpha, beta, flow;
        alpha.resize(I);
        beta.resize(J);
        flow.resize(m.edges.size());
        for (std::size_t i = 0; i < I; ++i) alpha[i] = static_cast<double>(s.X[i] - y[i]);
        for (std::size_t j = 0; j < J; ++j) beta[j] = static_cast<double>(s.N[j] - z[j]);
        lifting->solve_edges(alpha, beta, flow, scratch);
        s.psi.resize(m.edges.size());
        bool ok = true;
        for (std::size_t e = 0; e < flow.size(); ++e) {
            s.psi[e] = std::llround(flow[e]);
            if (s.psi[e] < 0) ok = false;
        }
        if (!ok) max_flow_assignment(m, s);
    };
    std::string name = "tracking";
    return {name, assign};
}

AssignmentRule static_priority_rule(const TreeModel& model, std::size_t cls, std::size_t station) {
    if (cls >= model.classes || station >= model.stations) throw InputError("priority indices out of range");
    auto rule = tracking_rule(model, ControlPoint::vertex(model.classes, model.stations, cls, station));
    rule.name = "static-priority(" + std::to_string(cls) + "," + std::to_string(station) + ")";
    return rule;
}

std::vector<std::int64_t> initial_headcounts(const TreeModel& model, std::size_t n,
                                             std::span<const double> x_hat0) {
    if (x_hat0.size() != model.classes) throw InputError("initial state has the wrong dimension");
    std::vector<std::int64_t> X(model.classes);
    const double rn = std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < model.classes; ++i)
        X[i] = std::max<std::int64_t>(0, std::llround(static_cast<double>(n) * model.x_star[i] + rn * x_hat0[i]));
    return X;
}

namespace {

/// Runs one replication and calls record(k, state) at each of the sorted times.
template <class Record>
std::size_t run_ctmc(const TreeModel& m, const ScalingSpec& sc, const AssignmentRule& rule,
                     std::span<const double> x_hat0, std::span<const double> times, std::uint64_t seed,
                     std::uint64_t replication, Record&& record, std::int64_t& work_gap,
                     const std::function<void(double, const CtmcState&)>& on_event, CtmcState& s) {
    const auto I = m.classes;
    const auto E = m.edges.size();
    s.X = initial_headcounts(m, sc.n, x_hat0);
    s.N.resize(m.stations);
    for (std::size_t j = 0; j < m.stations; ++j) s.N[j] = sc.servers(m, j);
    s.psi.assign(E, 0);
    auto reassign = [&] {
        rule.assign(m, s);
        if (const auto bad = state_violations(m, s); !bad.empty())
            throw StructureError("assignment rule '" + rule.name + "' broke the state identities: " + bad.front());
        const auto y = s.queue(m);
        const auto z = s.idle(m);
        work_gap = std::max(work_gap, std::min(std::accumulate(y.begin(), y.end(), std::int64_t{0}),
                                               std::accumulate(z.begin(), z.end(), std::int64_t{0})));
        return y;
    };
    auto y = reassign();

    std::vector<double> lam(I), mu(E);
    for (std::size_t i = 0; i < I; ++i) lam[i] = sc.arrival_rate(m, i);
    for (std::size_t e = 0; e < E; ++e) mu[e] = sc.service_rate(m, m.edges[e].cls, m.edges[e].station);

    auto rng = path_rng(seed, replication, streams::ctmc_events);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double t = 0.0;
    std::size_t next = 0;
    std::size_t events = 0;
    while (true) {
        double R = 0.0;
        for (double a : lam) R += a;
        for (std::size_t e = 0; e < E; ++e) R += mu[e] * static_cast<double>(s.psi[e]);
        for (std::size_t i = 0; i < I; ++i) R += m.theta[i] * static_cast<double>(y[i]);
        const double t_next = R > 0.0 ? t - std::log1p(-unif(rng)) / R : std::numeric_limits<double>::infinity();
        while (next < times.size() && times[next] < t_next) record(next++, s);
        if (next == times.size()) break;
        t = t_next;

        double pick = unif(rng) * R;
        bool done = false;
        for (std::size_t i = 0; i < I && !done; ++i) {
            if (pick < lam[i]) {
                ++s.X[i];
                done = true;
            }
            pick -= lam[i];
        }
        for (std::size_t e = 0; e < E && !done; ++e) {
            const double rate = mu[e] * static_cast<double>(s.psi[e]);
            if (pick < rate) {
                --s.X[m.edges[e].cls];
                --s.psi[e];
                done = true;
            }
            pick -= rate;
        }
        for (std::size_t i = 0; i < I && !done; ++i) {
            const double rate = m.theta[i] * static_cast<double>(y[i]);
            if (pick < rate) {
                --s.X[i];
                done = true;
            }
            pick -= rate;
        }
        if (!done) {
            // Rounding left `pick` past the last bucket: take the last enabled event.
            std::size_t i = I;
            while (i-- > 0)
                if (m.theta[i] > 0.0 && y[i] > 0) break;
            if (i < I) {
                --s.X[i];
            } else {
                std::size_t e = E;
                while (e-- > 0)
                    if (s.psi[e] > 0) break;
                if (e < E) {
                    --s.X[m.edges[e].cls];
                    --s.psi[e];
                } else {
                    std::size_t a = I;
                    while (a-- > 0)
                        if (lam[a] > 0.0) break;
                    ++s.X[a];
                }
            }
        }
        ++events;
        y = reassign();
        if (on_event) on_event(t, s);
    }
    return events;
}

}  // namespace

CtmcPath simulate_ctmc(const TreeModel& model, const ScalingSpec& scaling, const AssignmentRule& rule,
                       std::span<const double> x_hat0, const CtmcOptions& options, std::uint64_t replication) {
    require_valid(model);
    scaling.check(model);
    if (!(options.dt_out > 0.0) || !(options.horizon > 0.0)) throw InputError("horizon and dt must be positive");
    const auto steps = static_cast<std::size_t>(std::llround(options.horizon / options.dt_out));
    if (steps == 0) throw InputError("horizon shorter than one output step");
    std::vector<double> times(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) times[k] = options.dt_out * static_cast<double>(k);

    CtmcPath out;
    out.dt = options.dt_out;
    out.classes = model.classes;
    out.stations = model.stations;
    out.x.resize((steps + 1) * model.classes);
    out.y.resize((steps + 1) * model.classes);
    out.z.resize((steps + 1) * model.stations);
    const double n = static_cast<double>(scaling.n);
    const double rn = std::sqrt(n);
    auto record = [&](std::size_t k, const CtmcState& s) {
        const auto y = s.queue(model);
        const auto z = s.idle(model);
        for (std::size_t i = 0; i < model.classes; ++i) {
            out.x[k * model.classes + i] = (static_cast<double>(s.X[i]) - n * model.x_star[i]) / rn;
            out.y[k * model.classes + i] = static_cast<double>(y[i]) / rn;
        }
        for (std::size_t j = 0; j < model.stations; ++j)
            out.z[k * model.stations + j] = static_cast<double>(z[j]) / rn;
    };
    out.events = run_ctmc(model, scaling, rule, x_hat0, times, options.seed, replication, record, out.max_work_gap,
                          options.on_event, out.final_state);
    return out;
}

StateSamples ctmc_samples(const TreeModel& model, const ScalingSpec& scaling, const AssignmentRule& rule,
                          std::span<const double> x_hat0, std::span<const double> times,
                          std::size_t replications, std::uint64_t seed, Backend backend) {
    require_valid(model);
    scaling.check(model);
    if (times.empty() || replications == 0) throw InputError("need sample times and replications");
    for (std::size_t k = 0; k < times.size(); ++k)
        if (!(times[k] >= 0.0) || (k > 0 && !(times[k] > times[k - 1])))
            throw InputError("sample times must be nonnegative and increasing");
    StateSamples out;
    out.times.assign(times.begin(), times.end());
    out.paths = replications;
    out.classes = model.classes;
    out.data.resize(replications * times.size() * model.classes);
    const double n = static_cast<double>(scaling.n);
    const double rn = std::sqrt(n);
    const std::function<void(double, const CtmcState&)> none;
    detail::for_each_index(replications, backend, [&](std::size_t p) {
        std::int64_t gap = 0;
        CtmcState s;
        run_ctmc(
            model, scaling, rule, x_hat0, times, seed, p,
            [&](std::size_t k, const CtmcState& st) {
                for (std::size_t i = 0; i < model.classes; ++i)
                    out.data[(p * times.size() + k) * model.classes + i] =
                        (static_cast<double>(st.X[i]) - n * model.x_star[i]) / rn;
            },
            gap, none, s);
    });
    return out;
}

std::vector<MomentDiscrepancy> compare_to_diffusion(const StateSamples& a, const StateSamples& b) {
    if (a.times.size() != b.times.size() || a.classes != b.classes)
        throw InputError("sample sets have different times or dimensions");
    for (std::size_t k = 0; k < a.times.size(); ++k)
        if (std::abs(a.times[k] - b.times[k]) > 1e-9 * std::max(1.0, std::abs(a.times[k])))
            throw InputError("sample sets have different times");
    if (a.paths < 2 || b.paths < 2) throw InputError("need at least two samples per set");

    struct Moments {
        double mean, var, m4;
    };
    auto moments = [](const StateSamples& s, std::size_t k, std::size_t i) {
        const auto P = static_cast<double>(s.paths);
        double sum = 0.0;
        for (std::size_t p = 0; p < s.paths; ++p) sum += s.at(p, k, i);
        const double mean = sum / P;
        double m2 = 0.0, m4 = 0.0;
        for (std::size_t p = 0; p < s.paths; ++p) {
            const double d = s.at(p, k, i) - mean;
            m2 += d * d;
            m4 += d * d * d * d;
        }
        return Moments{mean, m2 / (P - 1.0), m4 / P};
    };
    std::vector<MomentDiscrepancy> out;
    const auto na = static_cast<double>(a.paths);
    const auto nb = static_cast<double>(b.paths);
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        for (std::size_t i = 0; i < a.classes; ++i) {
            const auto ma = moments(a, k, i);
            const auto mb = moments(b, k, i);
            MomentDiscrepancy d;
            d.time = a.times[k];
            d.cls = i;
            d.mean_a = ma.mean;
            d.mean_b = mb.mean;
            d.mean_diff = ma.mean - mb.mean;
            d.mean_se = std::sqrt(ma.var / na + mb.var / nb);
            d.var_a = ma.var;
            d.var_b = mb.var;
            d.var_diff = ma.var - mb.var;
            d.var_se = std::sqrt(std::max(ma.m4 - ma.var * ma.var, 0.0) / na +
                                 std::max(mb.m4 - mb.var * mb.var, 0.0) / nb);
            out.push_back(d);
        }
    }
    return out;
}

}  // namespace hwsched
