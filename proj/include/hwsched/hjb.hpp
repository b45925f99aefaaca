#pragma once

#include "hwsched/diffusion.hpp"
#include "hwsched/grid.hpp"
#include "hwsched/model.hpp"
#include "hwsched/tree_flow.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace hwsched {

struct HamiltonianResult {
    double value = 0.0;
    ControlPoint argmin;
    /// Distance from the minimum to the best competing vertex pair in the
    /// components that matter at x. Infinite when there is no competitor or the
    /// cost is not affine in the control.
    double gap = std::numeric_limits<double>::infinity();
};

/// phi(x, U, p) = b(x, U).p + L(x, U).
double hamiltonian_objective(const TreeDynamics& dyn, const RunningCostSpec& cost,
                             std::span<const double> x, std::span<const double> p,
                             const ControlPoint& control);

/// H(x, p) = min over U of phi(x, U, p), reusable across calls (not thread safe).
///
/// phi splits into a u-part and a v-part, each a sum of one-dimensional terms
/// a_k w_k + c_k s^e w_k^e over a simplex. For e <= 1 the minimum sits at a
/// vertex; for e > 1 it is found from the KKT conditions by bisection on the
/// multiplier. Vertex ties go to the smallest index.
class HamiltonianEvaluator {
public:
    HamiltonianEvaluator(const TreeDynamics& dyn, const RunningCostSpec& cost);

    void evaluate(std::span<const double> x, std::span<const double> p, HamiltonianResult& out);
    HamiltonianResult operator()(std::span<const double> x, std::span<const double> p);

private:
    const TreeDynamics* dyn_;
    const RunningCostSpec* cost_;
    ControlPoint trial_;
    std::vector<double> drift_;
    std::vector<double> slope_u_;
    std::vector<double> slope_v_;
    FlowScratch scratch_;
};

HamiltonianResult hamiltonian(const TreeDynamics& dyn, const RunningCostSpec& cost,
                              std::span<const double> x, std::span<const double> p);

enum class BoundaryMode {
    cost_to_go,   ///< Dirichlet data from the simulated static-priority cost
    extrapolate,  ///< zero second difference along the inward diagonal
};

enum class SweepKind { jacobi, gauss_seidel };

struct HjbOptions {
    BoundaryMode boundary = BoundaryMode::cost_to_go;
    double tolerance = 1e-8;
    std::size_t max_iterations = 2'000'000;
    SweepKind sweep = SweepKind::jacobi;
    Backend backend = Backend::openmp;
    std::size_t history_every = 100;

    std::size_t boundary_paths = 256;
    double boundary_dt = 1e-2;
    std::uint64_t seed = 0;
    /// Priority edge for the boundary policy; default is the first edge with mu >= theta.
    std::optional<Activity> boundary_priority;
};

struct HjbReport {
    bool converged = false;
    std::size_t iterations = 0;
    double last_update = 0.0;
    std::vector<double> update_history;  ///< sup-norm update every history_every sweeps
    double pde_residual = 0.0;           ///< interior residual, margin 2
};

struct HjbSolution {
    ValueField value;
    HjbReport report;
};

/// Markov-chain approximation of the HJB equation: from x the chain moves to
/// x +- h_i e_i with weights r_i^2/(2h_i^2) + b_i^{+-}/h_i, which gives the upwind
/// monotone scheme f = min_U (sum w f_nbr + L) / (sum w + gamma).
/// Throws InputError for I > 3 and ConvergenceError (with the update history in
/// the message) when max_iterations is reached.
HjbSolution solve_hjb(const TreeDynamics& dyn, const RunningCostSpec& cost, const Grid& grid,
                      const HjbOptions& options);

/// Static-priority edge used for cost-to-go boundary data.
Activity default_boundary_priority(const TreeModel& model);

/// Central-difference gradient at a grid point (one-sided on faces).
void grid_gradient(const ValueField& value, std::size_t flat, std::span<double> out);

/// Df by central differences, then the Hamiltonian argmin at every grid point.
PolicyField extract_policy(const ValueField& value, const TreeDynamics& dyn,
                           const RunningCostSpec& cost, Backend backend = Backend::openmp);

/// Per-point Hamiltonian gaps matching extract_policy, for tie detection.
std::vector<double> policy_gaps(const ValueField& value, const TreeDynamics& dyn,
                                const RunningCostSpec& cost);

/// max |Lf + H(x, Df) - gamma f| over points at least `margin` from every face,
/// all derivatives by central differences.
double pde_residual(const ValueField& value, const TreeDynamics& dyn, const RunningCostSpec& cost,
                    std::size_t margin);

struct BoxSensitivity {
    Grid enlarged;
    double max_abs_diff = 0.0;  ///< over original points at least `margin` from the faces
    double diff_at_center = 0.0;
};

/// Re-solves on a box grown by `factor` per axis at the same spacing and compares.
BoxSensitivity box_sensitivity(const TreeDynamics& dyn, const RunningCostSpec& cost,
                               const HjbSolution& base, const HjbOptions& options, double factor,
                               std::size_t margin);

}  // namespace hwsched
