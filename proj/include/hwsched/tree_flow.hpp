#pragma once

#include "hwsched/model.hpp"

#include <span>
#include <vector>

namespace hwsched {

/// Edge flows psi_ij; zero off the edge set.
using FlowAssignment = RateMatrix;

/// Scratch buffers for the allocation-free paths.
struct FlowScratch {
    std::vector<double> residual;
    std::vector<double> edge_flow;
    std::vector<double> alpha;
    std::vector<double> beta;
    std::vector<double> y;
    std::vector<double> z;
};

/// The lifting map G: unique psi on a tree with prescribed class sums alpha and
/// station sums beta. The leaf-peeling schedule is computed once at construction.
class LiftingMap {
public:
    explicit LiftingMap(const TreeModel& model);

    /// Checked solve. Throws BalanceError when |sum alpha - sum beta| exceeds
    /// 1e-9 relative to the data scale.
    FlowAssignment solve(std::span<const double> alpha, std::span<const double> beta) const;

    /// Unchecked solve into per-edge flows (ordered as model.edges).
    void solve_edges(std::span<const double> alpha, std::span<const double> beta,
                     std::span<double> edge_flow, FlowScratch& scratch) const;

    std::size_t edge_count() const { return edges_.size(); }
    const std::vector<Activity>& edges() const { return edges_; }

private:
    struct Step {
        std::size_t leaf;
        std::size_t edge;
        std::size_t other;
    };
    std::size_t classes_ = 0;
    std::size_t stations_ = 0;
    std::vector<Activity> edges_;
    std::vector<Step> steps_;
};

/// psi = G(alpha, beta).
FlowAssignment solve_psi(const TreeModel& model, std::span<const double> alpha,
                         std::span<const double> beta);

struct Lift {
    std::vector<double> y;  ///< (e.x)^+ u
    std::vector<double> z;  ///< (e.x)^- v
    FlowAssignment psi;     ///< G(x - y, -z)
};

/// Model plus its lifting map; evaluates the lift and the drift b(x,U).
class TreeDynamics {
public:
    explicit TreeDynamics(TreeModel model);

    const TreeModel& model() const { return model_; }
    const LiftingMap& lifting() const { return lifting_; }
    std::size_t classes() const { return model_.classes; }
    std::size_t stations() const { return model_.stations; }

    Lift lift(std::span<const double> x, const ControlPoint& control) const;
    std::vector<double> drift(std::span<const double> x, const ControlPoint& control) const;

    /// Hot-path drift: writes b into `out` (size I), reusing `scratch`.
    void drift_into(std::span<const double> x, const ControlPoint& control, std::span<double> out,
                    FlowScratch& scratch) const;

    /// Same, also returning y, z and per-edge flows.
    void lift_into(std::span<const double> x, const ControlPoint& control, std::span<double> y,
                   std::span<double> z, std::span<double> edge_flow, FlowScratch& scratch) const;

private:
    TreeModel model_;
    LiftingMap lifting_;
    std::vector<double> edge_mu_;
};

Lift lift_control(const TreeModel& model, std::span<const double> x, const ControlPoint& control);
std::vector<double> drift(const TreeModel& model, std::span<const double> x,
                          const ControlPoint& control);

}  // namespace hwsched
