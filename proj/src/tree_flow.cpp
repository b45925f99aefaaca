#include "hwsched/tree_flow.hpp"

#include "hwsched/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>

namespace hwsched {

LiftingMap::LiftingMap(const TreeModel& model)
    : classes_(model.classes), stations_(model.stations), edges_(model.edges) {
    const auto n = model.node_count();
    if (model.classes == 0 || model.stations == 0 || edges_.size() + 1 != n)
        throw StructureError("lifting map needs a tree: edge count must be I+J-1");

    // incident[v] = edge indices touching node v
    std::vector<std::vector<std::size_t>> incident(n);
    for (std::size_t k = 0; k < edges_.size(); ++k) {
        const auto& e = edges_[k];
        if (e.cls >= classes_ || e.station >= stations_) throw StructureError("edge out of range");
        incident[e.cls].push_back(k);
        incident[classes_ + e.station].push_back(k);
    }
    auto other_end = [&](std::size_t k, std::size_t v) {
        const auto& e = edges_[k];
        return v == e.cls ? classes_ + e.station : e.cls;
    };

    std::vector<std::size_t> degree(n);
    std::vector<bool> edge_done(edges_.size(), false);
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> leaves;
    for (std::size_t v = 0; v < n; ++v) {
        degree[v] = incident[v].size();
        if (degree[v] == 1) leaves.push(v);
    }
    while (steps_.size() < edges_.size()) {
        if (leaves.empty()) throw StructureError("activity graph contains a cycle");
        const auto v = leaves.top();
        leaves.pop();
        if (degree[v] != 1) continue;
        const auto k = *std::find_if(incident[v].begin(), incident[v].end(),
                                     [&](std::size_t e) { return !edge_done[e]; });
        const auto w = other_end(k, v);
        edge_done[k] = true;
        degree[v] = 0;
        steps_.push_back({v, k, w});
        if (--degree[w] == 1) leaves.push(w);
    }
}

void LiftingMap::solve_edges(std::span<const double> alpha, std::span<const double> beta,
                             std::span<double> edge_flow, FlowScratch& scratch) const {
    auto& res = scratch.residual;
    res.resize(classes_ + stations_);
    std::copy(alpha.begin(), alpha.end(), res.begin());
    std::copy(beta.begin(), beta.end(), res.begin() + static_cast<std::ptrdiff_t>(classes_));
    for (const auto& s : steps_) {
        const double flow = res[s.leaf];
        edge_flow[s.edge] = flow;
        res[s.leaf] = 0.0;
        res[s.other] -= flow;
    }
}

FlowAssignment LiftingMap::solve(std::span<const double> alpha, std::span<const double> beta) const {
    if (alpha.size() != classes_ || beta.size() != stations_)
        throw InputError("alpha/beta sizes do not match the model");
    double sa = 0.0, sb = 0.0, scale = 1.0;
    for (double a : alpha) {
        sa += a;
        scale += std::abs(a);
    }
    for (double b : beta) {
        sb += b;
        scale += std::abs(b);
    }
    if (std::abs(sa - sb) > 1e-9 * scale) throw BalanceError("sum(alpha) != sum(beta)");

    FlowScratch scratch;
    std::vector<double> flows(edges_.size());
    solve_edges(alpha, beta, flows, scratch);
    FlowAssignment psi(classes_, stations_);
    for (std::size_t k = 0; k < edges_.size(); ++k) psi(edges_[k].cls, edges_[k].station) = flows[k];
    return psi;
}

FlowAssignment solve_psi(const TreeModel& model, std::span<const double> alpha,
                         std::span<const double> beta) {
    return LiftingMap(model).solve(alpha, beta);
}

namespace {

const TreeModel& checked(const TreeModel& m) {
    require_valid(m);
    return m;
}

}  // namespace

TreeDynamics::TreeDynamics(TreeModel model) : model_(std::move(model)), lifting_(checked(model_)) {
    for (const auto& e : model_.edges) edge_mu_.push_back(model_.mu(e.cls, e.station));
}

void TreeDynamics::lift_into(std::span<const double> x, const ControlPoint& control,
                             std::span<double> y, std::span<double> z, std::span<double> edge_flow,
                             FlowScratch& scratch) const {
    const auto I = model_.classes;
    const auto J = model_.stations;
    double total = 0.0;
    for (std::size_t i = 0; i < I; ++i) total += x[i];
    const double pos = std::max(total, 0.0);
    const double neg = std::max(-total, 0.0);
    scratch.alpha.resize(I);
    scratch.beta.resize(J);
    for (std::size_t i = 0; i < I; ++i) {
        y[i] = pos * control.u[i];
        scratch.alpha[i] = x[i] - y[i];
    }
    for (std::size_t j = 0; j < J; ++j) {
        z[j] = neg * control.v[j];
        scratch.beta[j] = -z[j];
    }
    lifting_.solve_edges(scratch.alpha, scratch.beta, edge_flow, scratch);
}

void TreeDynamics::drift_into(std::span<const double> x, const ControlPoint& control,
                              std::span<double> out, FlowScratch& scratch) const {
    const auto I = model_.classes;
    const auto J = model_.stations;
    scratch.y.resize(I);
    scratch.z.resize(J);
    scratch.edge_flow.resize(edge_mu_.size());
    lift_into(x, control, scratch.y, scratch.z, scratch.edge_flow, scratch);
    for (std::size_t i = 0; i < I; ++i) out[i] = model_.ell[i] - model_.theta[i] * scratch.y[i];
    const auto& edges = model_.edges;
    for (std::size_t k = 0; k < edges.size(); ++k) out[edges[k].cls] -= edge_mu_[k] * scratch.edge_flow[k];
}

Lift TreeDynamics::lift(std::span<const double> x, const ControlPoint& control) const {
    if (x.size() != model_.classes) throw InputError("state dimension mismatch");
    if (!control.in_simplex(1e-9) || control.u.size() != model_.classes ||
        control.v.size() != model_.stations)
        throw InputError("control is not a point of the simplex product");
    Lift out{std::vector<double>(model_.classes), std::vector<double>(model_.stations),
             FlowAssignment(model_.classes, model_.stations)};
    FlowScratch scratch;
    std::vector<double> flows(edge_mu_.size());
    lift_into(x, control, out.y, out.z, flows, scratch);
    for (std::size_t k = 0; k < flows.size(); ++k)
        out.psi(model_.edges[k].cls, model_.edges[k].station) = flows[k];
    return out;
}

std::vector<double> TreeDynamics::drift(std::span<const double> x, const ControlPoint& control) const {
    if (x.size() != model_.classes) throw InputError("state dimension mismatch");
    if (!control.in_simplex(1e-9) || control.u.size() != model_.classes ||
        control.v.size() != model_.stations)
        throw InputError("control is not a point of the simplex product");
    std::vector<double> b(model_.classes);
    FlowScratch scratch;
    drift_into(x, control, b, scratch);
    return b;
}

Lift lift_control(const TreeModel& model, std::span<const double> x, const ControlPoint& control) {
    return TreeDynamics(model).lift(x, control);
}

std::vector<double> drift(const TreeModel& model, std::span<const double> x,
                          const ControlPoint& control) {
    return TreeDynamics(model).drift(x, control);
}

}  // namespace hwsched
