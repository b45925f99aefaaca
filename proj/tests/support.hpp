#pragma once

#include "hwsched/det_system.hpp"
#include "hwsched/io.hpp"
#include "hwsched/model.hpp"
#include "hwsched/tree_flow.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace hwsched::testing {

inline std::string fixture(const std::string& name) { return std::string(HWSCHED_FIXTURES) + "/" + name; }

inline ModelFile load_fixture(const std::string& name) { return load_model(fixture(name)); }

/// Random bipartite tree with `classes` + `stations` nodes: every new node hangs
/// off a uniformly chosen existing node of the other kind.
inline std::vector<Activity> random_tree_edges(std::mt19937_64& rng, std::size_t classes, std::size_t stations) {
    std::vector<Activity> edges{{0, 0}};
    std::size_t have_c = 1, have_s = 1;
    while (have_c < classes || have_s < stations) {
        const bool add_class =
            have_s == stations || (have_c < classes && std::bernoulli_distribution(0.5)(rng));
        if (add_class) {
            const auto j = std::uniform_int_distribution<std::size_t>(0, have_s - 1)(rng);
            edges.push_back({have_c++, j});
        } else {
            const auto i = std::uniform_int_distribution<std::size_t>(0, have_c - 1)(rng);
            edges.push_back({i, have_s++});
        }
    }
    std::shuffle(edges.begin(), edges.end(), rng);
    return edges;
}

/// Random valid tree model with at most `max_nodes` nodes and random rates.
inline TreeModel random_tree(std::mt19937_64& rng, std::size_t max_nodes, std::size_t max_classes = 64,
                             bool abandonment = true) {
    std::uniform_int_distribution<std::size_t> total(2, max_nodes);
    std::size_t n = total(rng), I = 0, J = 0;
    do {
        I = std::uniform_int_distribution<std::size_t>(1, n - 1)(rng);
        J = n - I;
    } while (I > max_classes);
    const auto edges = random_tree_edges(rng, I, J);
    std::uniform_real_distribution<double> rate(0.5, 3.0);
    std::vector<double> mu;
    for (std::size_t k = 0; k < edges.size(); ++k) mu.push_back(rate(rng));
    auto m = make_model(I, J, edges, mu);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < I; ++i) {
        m.r[i] = 0.5 + unit(rng);
        m.ell[i] = unit(rng) - 0.5;
        if (abandonment) m.theta[i] = 0.5 * unit(rng);
    }
    return m;
}

/// Balanced row and column sums.
inline void random_balanced(std::mt19937_64& rng, std::size_t I, std::size_t J, std::vector<double>& alpha,
                            std::vector<double>& beta) {
    std::normal_distribution<double> g(0.0, 1.0);
    alpha.resize(I);
    beta.resize(J);
    for (auto& a : alpha) a = g(rng);
    for (auto& b : beta) b = g(rng);
    double gap = 0.0;
    for (double a : alpha) gap += a;
    for (double b : beta) gap -= b;
    for (auto& b : beta) b += gap / static_cast<double>(J);
}

/// Dense least-squares solve of the class-sum and station-sum equations over the edge unknowns.
inline std::vector<double> dense_edge_solve(const TreeModel& m, const std::vector<double>& alpha,
                                            const std::vector<double>& beta) {
    const auto E = m.edges.size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.classes + m.stations),
                                              static_cast<Eigen::Index>(E));
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(m.classes + m.stations));
    for (std::size_t k = 0; k < E; ++k) {
        A(static_cast<Eigen::Index>(m.edges[k].cls), static_cast<Eigen::Index>(k)) = 1.0;
        A(static_cast<Eigen::Index>(m.classes + m.edges[k].station), static_cast<Eigen::Index>(k)) = 1.0;
    }
    for (std::size_t i = 0; i < m.classes; ++i) rhs(static_cast<Eigen::Index>(i)) = alpha[i];
    for (std::size_t j = 0; j < m.stations; ++j) rhs(static_cast<Eigen::Index>(m.classes + j)) = beta[j];
    const Eigen::VectorXd sol = A.colPivHouseholderQr().solve(rhs);
    return {sol.data(), sol.data() + sol.size()};
}

/// A solution of the deterministic system built backwards: x(t) and U(t) are
/// prescribed, (y, z, psi) come from the lift, and w is recovered from the state
/// equation with integrals taken on a grid `refine` times finer.
inline DetTrajectory reference_trajectory(const TreeModel& m,
                                          const std::function<void(double, std::vector<double>&)>& state,
                                          const std::function<void(double, ControlPoint&)>& control, double dt,
                                          double T, std::size_t refine = 64) {
    const TreeDynamics dyn(m);
    const auto I = m.classes, J = m.stations, E = m.edges.size();
    const auto n = static_cast<std::size_t>(std::llround(T / dt)) + 1;
    const double h = dt / static_cast<double>(refine);
    DetTrajectory tr;
    tr.dt = dt;
    tr.edges = m.edges;
    auto blank = [&] { return TimeSeries(dt, std::vector<double>(n, 0.0)); };
    tr.w.assign(I, blank());
    tr.x.assign(I, blank());
    tr.y.assign(I, blank());
    tr.z.assign(J, blank());
    tr.psi.assign(E, blank());
    std::vector<double> x(I), y(I), z(J), flow(E), prev_y(I), prev_flow(E), int_y(I, 0.0), int_psi(E, 0.0);
    ControlPoint U{std::vector<double>(I), std::vector<double>(J)};
    FlowScratch scratch;
    for (std::size_t s = 0; s <= (n - 1) * refine; ++s) {
        const double t = h * static_cast<double>(s);
        state(t, x);
        control(t, U);
        dyn.lift_into(x, U, y, z, flow, scratch);
        if (s > 0) {
            for (std::size_t i = 0; i < I; ++i) int_y[i] += 0.5 * h * (y[i] + prev_y[i]);
            for (std::size_t e = 0; e < E; ++e) int_psi[e] += 0.5 * h * (flow[e] + prev_flow[e]);
        }
        prev_y = y;
        prev_flow = flow;
        if (s % refine != 0) continue;
        const auto k = s / refine;
        for (std::size_t i = 0; i < I; ++i) {
            tr.x[i][k] = x[i];
            tr.y[i][k] = y[i];
            tr.w[i][k] = x[i] + m.theta[i] * int_y[i];
        }
        for (std::size_t e = 0; e < E; ++e) {
            tr.psi[e][k] = flow[e];
            tr.w[m.edges[e].cls][k] += m.mu(m.edges[e].cls, m.edges[e].station) * int_psi[e];
        }
        for (std::size_t j = 0; j < J; ++j) tr.z[j][k] = z[j];
    }
    return tr;
}

}  // namespace hwsched::testing
