#include "hwsched/hjb.hpp"

#include "hwsched/error.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hwsched {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

/// Minimizes sum_k slope_k w_k + coef_k * scale * w_k^e over the simplex.
double minimize_simplex(std::span<const double> slope, std::span<const double> coef, double scale,
                        double e, std::span<double> w, double& gap) {
    const auto n = slope.size();
    std::fill(w.begin(), w.end(), 0.0);
    gap = inf;
    bool smooth = e > 1.0 && scale > 0.0;
    if (smooth) smooth = std::any_of(coef.begin(), coef.end(), [](double c) { return c > 0.0; });

    if (!smooth) {
        // Linear or concave terms: a vertex is optimal.
        double best_val = inf;
        for (std::size_t k = 0; k < n; ++k) best_val = std::min(best_val, slope[k] + coef[k] * scale);
        const double tie = 1e-12 * (1.0 + std::abs(best_val));
        std::size_t best = n;
        for (std::size_t k = 0; k < n; ++k) {
            if (slope[k] + coef[k] * scale <= best_val + tie) {
                best = k;
                break;
            }
        }
        for (std::size_t k = 0; k < n; ++k)
            if (k != best) gap = std::min(gap, slope[k] + coef[k] * scale - best_val);
        w[best] = 1.0;
        return slope[best] + coef[best] * scale;
    }

    auto weight = [&](std::size_t k, double lambda) {
        if (coef[k] <= 0.0 || lambda <= slope[k]) return 0.0;
        return std::pow((lambda - slope[k]) / (coef[k] * scale * e), 1.0 / (e - 1.0));
    };
    auto total = [&](double lambda) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) s += weight(k, lambda);
        return s;
    };
    std::size_t lin = n;
    for (std::size_t k = 0; k < n; ++k)
        if (coef[k] <= 0.0 && (lin == n || slope[k] < slope[lin])) lin = k;

    if (lin < n && total(slope[lin]) <= 1.0) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            w[k] = weight(k, slope[lin]);
            s += w[k];
        }
        w[lin] += 1.0 - s;
    } else {
        double lo = inf, hi = -inf;
        for (std::size_t k = 0; k < n; ++k) {
            if (coef[k] > 0.0) {
                lo = std::min(lo, slope[k]);
                hi = std::max(hi, slope[k] + coef[k] * scale * e);
            }
        }
        if (lin < n) hi = std::min(hi, slope[lin]);
        for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
            const double mid = 0.5 * (lo + hi);
            (total(mid) < 1.0 ? lo : hi) = mid;
        }
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            w[k] = weight(k, hi);
            s += w[k];
        }
        for (auto& a : w) a /= s;
    }
    double value = 0.0;
    for (std::size_t k = 0; k < n; ++k) value += slope[k] * w[k] + coef[k] * scale * std::pow(w[k], e);
    return value;
}

double positive_part_power(double a, double e) { return a > 0.0 ? (e == 1.0 ? a : std::pow(a, e)) : 0.0; }

}  // namespace

double hamiltonian_objective(const TreeDynamics& dyn, const RunningCostSpec& cost,
                             std::span<const double> x, std::span<const double> p,
                             const ControlPoint& control) {
    const auto b = dyn.drift(x, control);
    return dot(b, p) + cost.evaluate(x, control);
}

HamiltonianEvaluator::HamiltonianEvaluator(const TreeDynamics& dyn, const RunningCostSpec& cost)
    : dyn_(&dyn), cost_(&cost) {
    const auto I = dyn.classes();
    const auto J = dyn.stations();
    if (const auto bad = cost.violations(I, J); !bad.empty()) throw InputError(bad.front());
    trial_ = {std::vector<double>(I, 0.0), std::vector<double>(J, 0.0)};
    drift_.resize(I);
    slope_u_.resize(I);
    slope_v_.resize(J);
}

void HamiltonianEvaluator::evaluate(std::span<const double> x, std::span<const double> p,
                                    HamiltonianResult& out) {
    const auto I = dyn_->classes();
    const auto J = dyn_->stations();
    const auto& c = *cost_;
    double total = 0.0;
    for (double a : x) total += a;
    const double pos = std::max(total, 0.0);
    const double neg = std::max(-total, 0.0);

    auto probe = [&](std::size_t i, std::size_t j) {
        std::fill(trial_.u.begin(), trial_.u.end(), 0.0);
        std::fill(trial_.v.begin(), trial_.v.end(), 0.0);
        trial_.u[i] = 1.0;
        trial_.v[j] = 1.0;
        dyn_->drift_into(x, trial_, drift_, scratch_);
        return dot(drift_, p);
    };
    for (std::size_t i = 0; i < I; ++i) slope_u_[i] = probe(i, 0);
    slope_v_[0] = 0.0;
    for (std::size_t j = 1; j < J; ++j) slope_v_[j] = probe(0, j) - slope_u_[0];

    // Control-free part of L.
    std::fill(trial_.u.begin(), trial_.u.end(), 0.0);
    std::fill(trial_.v.begin(), trial_.v.end(), 0.0);
    const double base = c.evaluate(x, trial_);

    out.argmin.u.assign(I, 0.0);
    out.argmin.v.assign(J, 0.0);
    double gap_u = inf, gap_v = inf;
    const double val_u = minimize_simplex(slope_u_, c.queue_weights, positive_part_power(pos, c.queue_exponent),
                                          c.queue_exponent, out.argmin.u, gap_u);
    const double val_v = minimize_simplex(slope_v_, c.idle_weights, positive_part_power(neg, c.idle_exponent),
                                          c.idle_exponent, out.argmin.v, gap_v);
    out.value = base + val_u + val_v;
    if (!c.affine_in_control()) {
        out.gap = inf;
    } else if (pos > 0.0) {
        out.gap = gap_u;
    } else if (neg > 0.0) {
        out.gap = gap_v;
    } else {
        out.gap = (I > 1 || J > 1) ? 0.0 : inf;
    }
}

HamiltonianResult HamiltonianEvaluator::operator()(std::span<const double> x, std::span<const double> p) {
    HamiltonianResult r;
    evaluate(x, p, r);
    return r;
}

HamiltonianResult hamiltonian(const TreeDynamics& dyn, const RunningCostSpec& cost,
                              std::span<const double> x, std::span<const double> p) {
    if (x.size() != dyn.classes() || p.size() != dyn.classes())
        throw InputError("state and gradient need one entry per class");
    HamiltonianEvaluator ev(dyn, cost);
    return ev(x, p);
}

Activity default_boundary_priority(const TreeModel& model) {
    for (const auto& e : model.edges)
        if (model.mu(e.cls, e.station) >= model.theta[e.cls]) return e;
    throw InputError("no edge with mu >= theta for the boundary priority policy");
}

void grid_gradient(const ValueField& value, std::size_t flat, std::span<double> out) {
    const auto& g = value.grid;
    const auto& f = value.values;
    for (std::size_t d = 0; d < g.dims(); ++d) {
        const auto k = g.coordinate_index(flat, d);
        const auto s = g.stride(d);
        const double h = g.axis(d).step();
        if (k == 0) {
            out[d] = (f[flat + s] - f[flat]) / h;
        } else if (k + 1 == g.axis(d).count) {
            out[d] = (f[flat] - f[flat - s]) / h;
        } else {
            out[d] = (f[flat + s] - f[flat - s]) / (2.0 * h);
        }
    }
}

namespace {

struct SolverSetup {
    std::size_t I = 0;
    std::size_t row = 0;  // 2I + 2 entries: w+, w-, L, 1/(sum w + gamma)
    std::vector<ControlPoint> candidates;
    std::vector<std::size_t> interior;
    std::vector<std::size_t> boundary;
    std::vector<double> table;
};

void fill_row(const TreeModel& m, const Grid& grid, std::span<const double> b, double L, double* row) {
    const auto I = m.classes;
    double q = 0.0;
    for (std::size_t i = 0; i < I; ++i) {
        const double h = grid.axis(i).step();
        const double diff = 0.5 * m.r[i] * m.r[i] / (h * h);
        row[i] = diff + std::max(b[i], 0.0) / h;
        row[I + i] = diff + std::max(-b[i], 0.0) / h;
        q += row[i] + row[I + i];
    }
    row[2 * I] = L;
    row[2 * I + 1] = 1.0 / (q + m.gamma);
}

double apply_row(const double* row, std::size_t I, const Grid& grid, const std::vector<double>& f,
                 std::size_t flat) {
    double acc = row[2 * I];
    for (std::size_t i = 0; i < I; ++i) {
        const auto s = grid.stride(i);
        acc += row[i] * f[flat + s] + row[I + i] * f[flat - s];
    }
    return acc * row[2 * I + 1];
}

bool is_vertex(const ControlPoint& c) {
    auto pure = [](const std::vector<double>& w) {
        return std::all_of(w.begin(), w.end(), [](double a) { return a == 0.0 || a == 1.0; });
    };
    return pure(c.u) && pure(c.v);
}

}  // namespace

HjbSolution solve_hjb(const TreeDynamics& dyn, const RunningCostSpec& cost, const Grid& grid,
                      const HjbOptions& options) {
    const auto& m = dyn.model();
    const auto I = m.classes;
    const auto J = m.stations;
    if (I > 3) throw InputError("grid solves support at most 3 classes");
    if (grid.dims() != I) throw InputError("grid dimension must equal the number of classes");
    if (const auto bad = cost.violations(I, J); !bad.empty()) throw InputError(bad.front());
    if (!(m.gamma > 0.0)) throw InputError("gamma must be positive");
    if (!(options.tolerance > 0.0)) throw InputError("tolerance must be positive");
    if (options.max_iterations == 0) throw InputError("max_iterations must be positive");

    SolverSetup st;
    st.I = I;
    st.row = 2 * I + 2;
    for (std::size_t i = 0; i < I; ++i)
        for (std::size_t j = 0; j < J; ++j) st.candidates.push_back(ControlPoint::vertex(I, J, i, j));
    const auto nc = st.candidates.size();
    for (std::size_t flat = 0; flat < grid.size(); ++flat)
        (grid.on_boundary(flat) ? st.boundary : st.interior).push_back(flat);
    st.table.resize(st.interior.size() * nc * st.row);

    ValueField field{grid, std::vector<double>(grid.size(), 0.0)};
    auto& f = field.values;

    // Candidate coefficients and the myopic initial guess min_U L / gamma.
    detail::for_each_index(grid.size(), options.backend, [&](std::size_t flat) {
        std::vector<double> x(I);
        grid.coords(flat, x);
        double best = inf;
        for (const auto& c : st.candidates) best = std::min(best, cost.evaluate(x, c));
        f[flat] = best / m.gamma;
    });
    detail::for_each_index(st.interior.size(), options.backend, [&](std::size_t q) {
        std::vector<double> x(I), b(I);
        FlowScratch scratch;
        grid.coords(st.interior[q], x);
        for (std::size_t c = 0; c < nc; ++c) {
            dyn.drift_into(x, st.candidates[c], b, scratch);
            fill_row(m, grid, b, cost.evaluate(x, st.candidates[c]), &st.table[(q * nc + c) * st.row]);
        }
    });

    std::vector<std::pair<std::size_t, std::size_t>> extrap;
    if (options.boundary == BoundaryMode::cost_to_go) {
        const auto pr = options.boundary_priority.value_or(default_boundary_priority(m));
        const Policy policy(StaticPriority{pr.cls, pr.station});
        McOptions mc;
        mc.paths = options.boundary_paths;
        mc.dt = options.boundary_dt;
        mc.seed = options.seed;
        mc.backend = Backend::serial;
        detail::for_each_index(st.boundary.size(), options.backend, [&](std::size_t k) {
            const auto x = grid.coords(st.boundary[k]);
            f[st.boundary[k]] = mc_cost(dyn, cost, x, policy, mc).upper();
        });
    } else {
        for (auto flat : st.boundary) {
            std::ptrdiff_t delta = 0;
            for (std::size_t d = 0; d < I; ++d) {
                const auto k = grid.coordinate_index(flat, d);
                const auto s = static_cast<std::ptrdiff_t>(grid.stride(d));
                if (k == 0) delta += s;
                if (k + 1 == grid.axis(d).count) delta -= s;
            }
            const auto n1 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(flat) + delta);
            const auto n2 = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(flat) + 2 * delta);
            extrap.emplace_back(n1, n2);
        }
    }
    auto apply_extrapolation = [&](std::vector<double>& g) {
        for (std::size_t k = 0; k < extrap.size(); ++k)
            g[st.boundary[k]] = 2.0 * g[extrap[k].first] - g[extrap[k].second];
    };
    apply_extrapolation(f);

    const bool dynamic = !cost.affine_in_control();
    const bool parallel = options.backend == Backend::openmp;

    // One sweep; reads `src`, writes `dst` (the same array for Gauss-Seidel).
    auto sweep = [&](const std::vector<double>& src, std::vector<double>& dst, bool threaded) {
        double upd = 0.0;
        const auto n = static_cast<std::int64_t>(st.interior.size());
#pragma omp parallel if (threaded)
        {
            std::optional<HamiltonianEvaluator> ev;
            HamiltonianResult hr;
            std::vector<double> x(I), grad(I), b(I), row(st.row);
            FlowScratch scratch;
            if (dynamic) ev.emplace(dyn, cost);
#pragma omp for schedule(static) reduction(max : upd)
            for (std::int64_t q = 0; q < n; ++q) {
                const auto flat = st.interior[static_cast<std::size_t>(q)];
                const double* base = &st.table[static_cast<std::size_t>(q) * nc * st.row];
                double best = inf;
                for (std::size_t c = 0; c < nc; ++c) best = std::min(best, apply_row(base + c * st.row, I, grid, src, flat));
                if (dynamic) {
                    grid.coords(flat, x);
                    for (std::size_t d = 0; d < I; ++d) {
                        const auto s = grid.stride(d);
                        grad[d] = (src[flat + s] - src[flat - s]) / (2.0 * grid.axis(d).step());
                    }
                    ev->evaluate(x, grad, hr);
                    if (!is_vertex(hr.argmin)) {
                        dyn.drift_into(x, hr.argmin, b, scratch);
                        fill_row(m, grid, b, cost.evaluate(x, hr.argmin), row.data());
                        best = std::min(best, apply_row(row.data(), I, grid, src, flat));
                    }
                }
                upd = std::max(upd, std::abs(best - src[flat]));
                dst[flat] = best;
            }
        }
        return upd;
    };

    HjbSolution sol;
    auto& rep = sol.report;
    std::vector<double> next = f;
    const std::size_t every = std::max<std::size_t>(options.history_every, 1);
    for (std::size_t it = 1; it <= options.max_iterations; ++it) {
        double upd = 0.0;
        if (options.sweep == SweepKind::jacobi) {
            upd = sweep(f, next, parallel);
            apply_extrapolation(next);
            f.swap(next);
        } else {
            upd = sweep(f, f, false);
            apply_extrapolation(f);
        }
        rep.iterations = it;
        rep.last_update = upd;
        if (it % every == 0 || upd < options.tolerance) rep.update_history.push_back(upd);
        if (!std::isfinite(upd)) break;
        if (upd < options.tolerance) {
            rep.converged = true;
            break;
        }
    }
    if (!rep.converged) {
        std::ostringstream msg;
        msg << "value iteration stopped after " << rep.iterations << " sweeps with update "
            << rep.last_update << "; history (every " << every << " sweeps):";
        const auto& h = rep.update_history;
        for (std::size_t k = h.size() > 10 ? h.size() - 10 : 0; k < h.size(); ++k) msg << ' ' << h[k];
        throw ConvergenceError(msg.str());
    }
    sol.value = std::move(field);
    rep.pde_residual = pde_residual(sol.value, dyn, cost, 2);
    return sol;
}

PolicyField extract_policy(const ValueField& value, const TreeDynamics& dyn, const RunningCostSpec& cost,
                           Backend backend) {
    const auto& g = value.grid;
    const auto I = dyn.classes();
    if (g.dims() != I || value.values.size() != g.size())
        throw InputError("value field does not match the model");
    PolicyField out{g, I, dyn.stations(), std::vector<ControlPoint>(g.size())};
    const auto n = static_cast<std::int64_t>(g.size());
#pragma omp parallel if (backend == Backend::openmp)
    {
        HamiltonianEvaluator ev(dyn, cost);
        HamiltonianResult hr;
        std::vector<double> x(I), grad(I);
#pragma omp for schedule(static)
        for (std::int64_t k = 0; k < n; ++k) {
            const auto flat = static_cast<std::size_t>(k);
            g.coords(flat, x);
            grid_gradient(value, flat, grad);
            ev.evaluate(x, grad, hr);
            out.controls[flat] = hr.argmin;
        }
    }
    return out;
}

std::vector<double> policy_gaps(const ValueField& value, const TreeDynamics& dyn,
                                const RunningCostSpec& cost) {
    const auto& g = value.grid;
    const auto I = dyn.classes();
    std::vector<double> out(g.size());
    HamiltonianEvaluator ev(dyn, cost);
    HamiltonianResult hr;
    std::vector<double> x(I), grad(I);
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
        g.coords(flat, x);
        grid_gradient(value, flat, grad);
        ev.evaluate(x, grad, hr);
        out[flat] = hr.gap;
    }
    return out;
}

double pde_residual(const ValueField& value, const TreeDynamics& dyn, const RunningCostSpec& cost,
                    std::size_t margin) {
    const auto& g = value.grid;
    const auto& f = value.values;
    const auto& m = dyn.model();
    const auto I = m.classes;
    if (g.dims() != I || f.size() != g.size()) throw InputError("value field does not match the model");
    margin = std::max<std::size_t>(margin, 1);
    HamiltonianEvaluator ev(dyn, cost);
    HamiltonianResult hr;
    std::vector<double> x(I), grad(I);
    double worst = 0.0;
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
        if (!g.interior(flat, margin)) continue;
        g.coords(flat, x);
        double lap = 0.0;
        for (std::size_t d = 0; d < I; ++d) {
            const auto s = g.stride(d);
            const double h = g.axis(d).step();
            grad[d] = (f[flat + s] - f[flat - s]) / (2.0 * h);
            lap += 0.5 * m.r[d] * m.r[d] * (f[flat + s] - 2.0 * f[flat] + f[flat - s]) / (h * h);
        }
        ev.evaluate(x, grad, hr);
        worst = std::max(worst, std::abs(lap + hr.value - m.gamma * f[flat]));
    }
    return worst;
}

BoxSensitivity box_sensitivity(const TreeDynamics& dyn, const RunningCostSpec& cost, const HjbSolution& base,
                               const HjbOptions& options, double factor, std::size_t margin) {
    if (!(factor > 1.0)) throw InputError("enlargement factor must exceed 1");
    const auto& g0 = base.value.grid;
    std::vector<GridAxis> axes;
    std::vector<std::size_t> shift;
    for (const auto& a : g0.axes()) {
        const auto k = static_cast<std::size_t>(
            std::max<long long>(1, std::llround(0.5 * (factor - 1.0) * static_cast<double>(a.count - 1))));
        const double h = a.step();
        axes.push_back({a.lower - h * static_cast<double>(k), a.upper + h * static_cast<double>(k), a.count + 2 * k});
        shift.push_back(k);
    }
    BoxSensitivity out;
    out.enlarged = Grid(axes);
    const auto big = solve_hjb(dyn, cost, out.enlarged, options);
    const auto D = g0.dims();
    std::vector<double> zero(D, 0.0);
    const auto center = g0.nearest(zero);
    for (std::size_t flat = 0; flat < g0.size(); ++flat) {
        std::size_t mapped = 0;
        for (std::size_t d = 0; d < D; ++d)
            mapped += (g0.coordinate_index(flat, d) + shift[d]) * out.enlarged.stride(d);
        const double diff = std::abs(big.value.values[mapped] - base.value.values[flat]);
        if (g0.interior(flat, margin)) out.max_abs_diff = std::max(out.max_abs_diff, diff);
        if (flat == center) out.diff_at_center = diff;
    }
    return out;
}

}  // namespace hwsched
