#include "hwsched/diffusion.hpp"

#include "hwsched/error.hpp"
#include "hwsched/rng.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace hwsched {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void set_vertex(ControlPoint& out, std::size_t i, std::size_t j) {
    std::fill(out.u.begin(), out.u.end(), 0.0);
    std::fill(out.v.begin(), out.v.end(), 0.0);
    out.u[i] = 1.0;
    out.v[j] = 1.0;
}

ControlPoint sized_control(const TreeModel& m) {
    return {std::vector<double>(m.classes, 0.0), std::vector<double>(m.stations, 0.0)};
}

/// Calls observe(k, t, x, U) for k = 0..steps and steps the Euler scheme between.
/// noise(k, dw) fills the Brownian increment over [t_k, t_{k+1}].
template <class Noise, class Observe>
void euler_path(const TreeDynamics& dyn, std::span<const double> x0, const Policy& policy, double dt,
                std::size_t steps, std::uint64_t path, Noise&& noise, Observe&& observe) {
    const auto& m = dyn.model();
    const auto I = m.classes;
    std::vector<double> x(x0.begin(), x0.end()), b(I), dw(I);
    ControlPoint U = sized_control(m);
    FlowScratch scratch;
    for (std::size_t k = 0;; ++k) {
        const double t = dt * static_cast<double>(k);
        policy.evaluate(t, x, path, U);
        observe(k, t, std::span<const double>(x), U);
        if (k == steps) break;
        dyn.drift_into(x, U, b, scratch);
        noise(k, dw);
        for (std::size_t i = 0; i < I; ++i) x[i] += b[i] * dt + m.r[i] * dw[i];
    }
}

struct GaussianNoise {
    std::mt19937_64 rng;
    std::normal_distribution<double> normal{0.0, 1.0};
    double sqrt_dt;

    GaussianNoise(std::uint64_t seed, std::uint64_t path, double dt)
        : rng(path_rng(seed, path, streams::diffusion_noise)), sqrt_dt(std::sqrt(dt)) {}

    void operator()(std::size_t, std::span<double> dw) {
        for (auto& d : dw) d = sqrt_dt * normal(rng);
    }
};

void check_x0(const TreeModel& m, std::span<const double> x0) {
    if (x0.size() != m.classes) throw InputError("initial state has the wrong dimension");
    for (double a : x0)
        if (!std::isfinite(a)) throw InputError("initial state must be finite");
}

std::size_t step_count(double horizon, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("dt must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InputError("horizon must be positive");
    const auto n = static_cast<std::size_t>(std::llround(horizon / dt));
    if (n == 0) throw InputError("horizon shorter than one step");
    return n;
}

SimPath blank_path(const TreeModel& m, double dt, std::size_t steps) {
    SimPath p;
    p.dt = dt;
    p.classes = m.classes;
    p.stations = m.stations;
    const auto rows = steps + 1;
    p.x.resize(rows * m.classes);
    p.y.resize(rows * m.classes);
    p.u.resize(rows * m.classes);
    p.w.resize(rows * m.classes);
    p.z.resize(rows * m.stations);
    p.v.resize(rows * m.stations);
    return p;
}

void record(SimPath& p, std::size_t k, std::span<const double> x, const ControlPoint& U) {
    const auto I = p.classes;
    const auto J = p.stations;
    const double total = std::accumulate(x.begin(), x.end(), 0.0);
    const double pos = std::max(total, 0.0);
    const double neg = std::max(-total, 0.0);
    for (std::size_t i = 0; i < I; ++i) {
        p.x[k * I + i] = x[i];
        p.u[k * I + i] = U.u[i];
        p.y[k * I + i] = pos * U.u[i];
    }
    for (std::size_t j = 0; j < J; ++j) {
        p.v[k * J + j] = U.v[j];
        p.z[k * J + j] = neg * U.v[j];
    }
}

double l1(std::span<const double> x) {
    double s = 0.0;
    for (double a : x) s += std::abs(a);
    return s;
}

}  // namespace

void Policy::evaluate(double t, std::span<const double> x, std::uint64_t path, ControlPoint& out) const {
    std::visit(
        overloaded{
            [&](const FixedControl& p) {
                out.u = p.control.u;
                out.v = p.control.v;
            },
            [&](const StaticPriority& p) { set_vertex(out, p.cls, p.station); },
            [&](const ScheduledControl& p) {
                const auto& pts = p.path.points;
                const double pos = std::floor(t / p.path.dt + 1e-9);
                const auto k = std::min(static_cast<std::size_t>(std::max(pos, 0.0)), pts.size() - 1);
                out.u = pts[k].u;
                out.v = pts[k].v;
            },
            [&](const RandomSwitching& p) {
                const auto interval = static_cast<std::uint64_t>(std::floor(t / p.period + 1e-9));
                const auto I = out.u.size();
                const auto J = out.v.size();
                const auto key = counter_key(p.seed, streams::policy_switching ^ path, interval);
                const auto pick = key % (I * J);
                set_vertex(out, pick / J, pick % J);
            },
            [&](const GridMarkov& p) {
                const auto& f = *p.field;
                if (p.mode == Interpolation::nearest) {
                    const auto& c = f.controls[f.grid.nearest(x)];
                    out.u = c.u;
                    out.v = c.v;
                    return;
                }
                thread_local std::vector<std::size_t> corners;
                thread_local std::vector<double> weights;
                f.grid.multilinear(x, corners, weights);
                std::fill(out.u.begin(), out.u.end(), 0.0);
                std::fill(out.v.begin(), out.v.end(), 0.0);
                for (std::size_t c = 0; c < corners.size(); ++c) {
                    const auto& cp = f.controls[corners[c]];
                    for (std::size_t i = 0; i < out.u.size(); ++i) out.u[i] += weights[c] * cp.u[i];
                    for (std::size_t j = 0; j < out.v.size(); ++j) out.v[j] += weights[c] * cp.v[j];
                }
            },
        },
        kind_);
}

ControlPoint Policy::operator()(double t, std::span<const double> x, std::size_t stations,
                                std::uint64_t path) const {
    ControlPoint out{std::vector<double>(x.size(), 0.0), std::vector<double>(stations, 0.0)};
    evaluate(t, x, path, out);
    return out;
}

void Policy::check(const TreeModel& model) const {
    const auto I = model.classes;
    const auto J = model.stations;
    auto fits = [&](const ControlPoint& c) {
        return c.u.size() == I && c.v.size() == J && c.in_simplex(1e-9);
    };
    std::visit(overloaded{
                   [&](const FixedControl& p) {
                       if (!fits(p.control)) throw InputError("fixed control is not a point of the simplex product");
                   },
                   [&](const StaticPriority& p) {
                       if (p.cls >= I || p.station >= J) throw InputError("priority indices out of range");
                   },
                   [&](const ScheduledControl& p) {
                       if (!(p.path.dt > 0.0) || p.path.points.empty())
                           throw InputError("control schedule is empty");
                       for (const auto& c : p.path.points)
                           if (!fits(c)) throw InputError("scheduled control outside the simplex product");
                   },
                   [&](const RandomSwitching& p) {
                       if (!(p.period > 0.0) || !std::isfinite(p.period))
                           throw InputError("switching period must be positive");
                   },
                   [&](const GridMarkov& p) {
                       if (!p.field) throw InputError("grid policy has no field");
                       const auto& f = *p.field;
                       if (f.classes != I || f.stations != J || f.grid.dims() != I ||
                           f.controls.size() != f.grid.size())
                           throw InputError("policy field does not match the model");
                   },
               },
               kind_);
}

std::string Policy::describe() const {
    return std::visit(
        overloaded{
            [](const FixedControl&) { return std::string("fixed"); },
            [](const StaticPriority& p) {
                return "static-priority(" + std::to_string(p.cls) + "," + std::to_string(p.station) + ")";
            },
            [](const ScheduledControl&) { return std::string("scheduled"); },
            [](const RandomSwitching& p) { return "random-switching(" + std::to_string(p.period) + ")"; },
            [](const GridMarkov& p) {
                return std::string(p.mode == Interpolation::nearest ? "grid-nearest" : "grid-multilinear");
            },
        },
        kind_);
}

SimPath simulate_path(const TreeDynamics& dyn, std::span<const double> x0, const Policy& policy,
                      double horizon, double dt, std::uint64_t seed, std::uint64_t path_index) {
    const auto& m = dyn.model();
    check_x0(m, x0);
    policy.check(m);
    const auto steps = step_count(horizon, dt);
    SimPath out = blank_path(m, dt, steps);
    GaussianNoise gauss(seed, path_index, dt);
    std::vector<double> w(m.classes, 0.0);
    euler_path(
        dyn, x0, policy, dt, steps, path_index,
        [&](std::size_t, std::span<double> dw) {
            gauss(0, dw);
            for (std::size_t i = 0; i < dw.size(); ++i) w[i] += dw[i];
        },
        [&](std::size_t k, double, std::span<const double> x, const ControlPoint& U) {
            record(out, k, x, U);
            std::copy(w.begin(), w.end(), out.w.begin() + static_cast<std::ptrdiff_t>(k * m.classes));
        });
    return out;
}

SimPath simulate_path_from_noise(const TreeDynamics& dyn, std::span<const double> x0,
                                 const Policy& policy, double dt, std::span<const double> dW,
                                 std::uint64_t path_index) {
    const auto& m = dyn.model();
    check_x0(m, x0);
    policy.check(m);
    if (!(dt > 0.0)) throw InputError("dt must be positive");
    if (dW.empty() || dW.size() % m.classes != 0) throw InputError("noise must hold whole steps");
    const auto steps = dW.size() / m.classes;
    SimPath out = blank_path(m, dt, steps);
    std::vector<double> w(m.classes, 0.0);
    euler_path(
        dyn, x0, policy, dt, steps, path_index,
        [&](std::size_t k, std::span<double> dw) {
            for (std::size_t i = 0; i < dw.size(); ++i) {
                dw[i] = dW[k * m.classes + i];
                w[i] += dw[i];
            }
        },
        [&](std::size_t k, double, std::span<const double> x, const ControlPoint& U) {
            record(out, k, x, U);
            std::copy(w.begin(), w.end(), out.w.begin() + static_cast<std::ptrdiff_t>(k * m.classes));
        });
    return out;
}

double tail_bound(double c_L, double gamma, double horizon, double scale, double exponent) {
    if (!(gamma > 0.0)) throw InputError("gamma must be positive");
    const double lead = std::exp(-gamma * horizon);
    double integral = 1.0 / gamma;
    if (scale > 0.0) {
        // Simpson on s in [0, S] of e^{-gamma s} (1 + T + s)^b.
        const double S = (60.0 + 2.0 * std::max(exponent, 0.0)) / gamma;
        constexpr std::size_t n = 20000;
        const double h = S / n;
        double acc = 0.0;
        for (std::size_t k = 0; k <= n; ++k) {
            const double s = h * static_cast<double>(k);
            const double f = std::exp(-gamma * s) * std::pow(1.0 + horizon + s, exponent);
            acc += f * (k == 0 || k == n ? 1.0 : (k % 2 ? 4.0 : 2.0));
        }
        integral += scale * acc * h / 3.0;
    }
    return c_L * lead * integral;
}

CostEstimate mc_cost(const TreeDynamics& dyn, const RunningCostSpec& cost, std::span<const double> x0,
                     const Policy& policy, const McOptions& options) {
    const auto& m = dyn.model();
    check_x0(m, x0);
    policy.check(m);
    if (const auto bad = cost.violations(m.classes, m.stations); !bad.empty()) throw InputError(bad.front());
    if (!(m.gamma > 0.0)) throw InputError("gamma must be positive");
    if (options.paths < 2) throw InputError("need at least two paths");
    const double horizon = options.horizon > 0.0 ? options.horizon : 12.0 / m.gamma;
    const double dt = options.dt;
    const auto steps = step_count(horizon, dt);
    const double T = dt * static_cast<double>(steps);

    // Moment probes at T/32, ..., T/2, T feed the tail bound.
    std::vector<std::size_t> probe;
    for (int s = 5; s >= 0; --s) {
        const auto k = static_cast<std::size_t>(std::llround(T / std::ldexp(1.0, s) / dt));
        if (k > 0 && (probe.empty() || k > probe.back())) probe.push_back(k);
    }
    const bool bounded = cost.bounded();
    const double m_L = cost.growth_exponent();
    const auto P = options.paths;
    std::vector<double> totals(P, 0.0);
    std::vector<double> moments(bounded ? 0 : P * probe.size(), 0.0);
    const double decay = std::exp(-m.gamma * dt);
    const double weight = -std::expm1(-m.gamma * dt) / m.gamma;

    detail::for_each_index(P, options.backend, [&](std::size_t p) {
        GaussianNoise gauss(options.seed, p, dt);
        double total = 0.0;
        double disc = 1.0;
        std::size_t next = 0;
        euler_path(dyn, x0, policy, dt, steps, p, gauss,
                   [&](std::size_t k, double, std::span<const double> x, const ControlPoint& U) {
                       if (k < steps) {
                           total += disc * cost.evaluate(x, U) * weight;
                           disc *= decay;
                       }
                       if (!bounded && next < probe.size() && probe[next] == k) {
                           moments[p * probe.size() + next] = std::pow(l1(x), m_L);
                           ++next;
                       }
                   });
        totals[p] = total;
    });

    CostEstimate est;
    est.paths = P;
    est.horizon = T;
    est.dt = dt;
    double sum = 0.0;
    for (double v : totals) sum += v;
    est.mean = sum / static_cast<double>(P);
    double ss = 0.0;
    for (double v : totals) ss += (v - est.mean) * (v - est.mean);
    est.std_error = std::sqrt(ss / static_cast<double>(P - 1) / static_cast<double>(P));

    if (bounded) {
        est.tail_bound = tail_bound(std::max(cost.constant, 0.0), m.gamma, T, 0.0, 0.0);
        return est;
    }
    std::vector<double> t_probe, mean_probe;
    for (std::size_t s = 0; s < probe.size(); ++s) {
        double acc = 0.0;
        for (std::size_t p = 0; p < P; ++p) acc += moments[p * probe.size() + s];
        t_probe.push_back(dt * static_cast<double>(probe[s]));
        mean_probe.push_back(acc / static_cast<double>(P));
    }
    // Least squares of log E on log(1+t) over positive points, then lift the
    // intercept so the curve dominates every probe.
    double b = 0.0;
    std::vector<double> lx, ly;
    for (std::size_t s = 0; s < t_probe.size(); ++s) {
        if (mean_probe[s] > 0.0) {
            lx.push_back(std::log1p(t_probe[s]));
            ly.push_back(std::log(mean_probe[s]));
        }
    }
    if (lx.size() >= 2) {
        const double n = static_cast<double>(lx.size());
        const double sx = std::accumulate(lx.begin(), lx.end(), 0.0);
        const double sy = std::accumulate(ly.begin(), ly.end(), 0.0);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t s = 0; s < lx.size(); ++s) {
            sxx += lx[s] * lx[s];
            sxy += lx[s] * ly[s];
        }
        const double den = n * sxx - sx * sx;
        if (den > 0.0) b = std::max((n * sxy - sx * sy) / den, 0.0);
    }
    double A = 0.0;
    for (std::size_t s = 0; s < t_probe.size(); ++s)
        A = std::max(A, mean_probe[s] / std::pow(1.0 + t_probe[s], b));
    est.moment_scale = A;
    est.moment_exponent = b;
    est.tail_bound = tail_bound(cost.growth_constant(), m.gamma, T, A, b);
    return est;
}

StateSamples sample_states(const TreeDynamics& dyn, std::span<const double> x0, const Policy& policy,
                           std::span<const double> times, const SampleOptions& options) {
    const auto& m = dyn.model();
    check_x0(m, x0);
    policy.check(m);
    if (times.empty()) throw InputError("no sample times");
    if (!(options.dt > 0.0)) throw InputError("dt must be positive");
    if (options.paths == 0) throw InputError("need at least one path");
    std::vector<std::size_t> idx;
    for (double t : times) {
        if (!(t > 0.0) || !std::isfinite(t)) throw InputError("sample times must be positive");
        const auto k = static_cast<std::size_t>(std::llround(t / options.dt));
        if (std::abs(static_cast<double>(k) * options.dt - t) > 1e-9 * std::max(1.0, t))
            throw InputError("sample times must be multiples of dt");
        if (!idx.empty() && k <= idx.back()) throw InputError("sample times must be increasing");
        idx.push_back(k);
    }
    StateSamples out;
    out.times.assign(times.begin(), times.end());
    out.paths = options.paths;
    out.classes = m.classes;
    out.data.resize(options.paths * times.size() * m.classes);
    const auto I = m.classes;
    detail::for_each_index(options.paths, options.backend, [&](std::size_t p) {
        GaussianNoise gauss(options.seed, p, options.dt);
        std::size_t next = 0;
        euler_path(dyn, x0, policy, options.dt, idx.back(), p, gauss,
                   [&](std::size_t k, double, std::span<const double> x, const ControlPoint&) {
                       if (next < idx.size() && idx[next] == k) {
                           std::copy(x.begin(), x.end(),
                                     out.data.begin() + static_cast<std::ptrdiff_t>((p * idx.size() + next) * I));
                           ++next;
                       }
                   });
    });
    return out;
}

MomentCurve moment_curve(const TreeDynamics& dyn, const Policy& policy, double m,
                         std::span<const double> times, std::span<const double> x0,
                         const SampleOptions& options) {
    if (!(m >= 1.0)) throw InputError("moment order must be at least 1");
    if (options.paths < 2) throw InputError("need at least two paths");
    const auto s = sample_states(dyn, x0, policy, times, options);
    MomentCurve out;
    out.times = s.times;
    const auto P = static_cast<double>(s.paths);
    for (std::size_t k = 0; k < s.times.size(); ++k) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t p = 0; p < s.paths; ++p) {
            const std::span<const double> x(s.data.data() + (p * s.times.size() + k) * s.classes, s.classes);
            const double q = std::pow(l1(x), m);
            sum += q;
            sq += q * q;
        }
        const double mean = sum / P;
        const double var = std::max(sq / P - mean * mean, 0.0) * P / (P - 1.0);
        out.mean.push_back(mean);
        out.std_error.push_back(std::sqrt(var / P));
    }
    return out;
}

}  // namespace hwsched
