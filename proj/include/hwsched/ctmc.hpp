#pragma once

#include "hwsched/diffusion.hpp"
#include "hwsched/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace hwsched {

/// n-th system rates: lambda^n = n lambda + sqrt(n) lambda_hat,
/// mu^n = mu + mu_hat / sqrt(n), theta^n = theta, N_j = round(n nu_j).
struct ScalingSpec {
    std::size_t n = 1;
    std::vector<double> lambda_hat;  ///< per class; empty means zeros
    RateMatrix mu_hat;               ///< classes x stations; empty means zeros

    double arrival_rate(const TreeModel& m, std::size_t i) const;
    double service_rate(const TreeModel& m, std::size_t i, std::size_t j) const;
    std::int64_t servers(const TreeModel& m, std::size_t j) const;
    /// Throws InputError on size mismatches, n = 0, negative arrival or
    /// non-positive service rates.
    void check(const TreeModel& m) const;
};

/// Diffusion parameters implied by the scaling: ell_i = lambda_hat_i - sum_j mu_hat_ij psi*_ij
/// and r_i = sqrt(2 lambda_i) (Poisson arrivals, exponential services).
TreeModel diffusion_limit(const TreeModel& model, const ScalingSpec& scaling);

struct CtmcState {
    std::vector<std::int64_t> X;    ///< headcount per class
    std::vector<std::int64_t> psi;  ///< in service, per edge (ordered as model.edges)
    std::vector<std::int64_t> N;    ///< servers per station

    std::vector<std::int64_t> queue(const TreeModel& m) const;  ///< Y = X - row sums
    std::vector<std::int64_t> idle(const TreeModel& m) const;   ///< Z = N - column sums
};

/// Empty when Y + sum psi = X, Z + sum psi = N, Y, Z, psi >= 0 all hold.
std::vector<std::string> state_violations(const TreeModel& m, const CtmcState& s);

/// Preemptive assignment: given X and N, writes psi.
struct AssignmentRule {
    std::string name;
    std::function<void(const TreeModel&, CtmcState&)> assign;
};

/// Targets Y = largest-remainder split of (e.X - e.N)^+ by u and
/// Z = split of (e.X - e.N)^- by v, then psi = G(X - Y, N - Z). If that
/// assignment has a negative entry, falls back to a maximum flow.
AssignmentRule tracking_rule(const TreeModel& model, const ControlPoint& control);
/// Tracking with u = e_cls, v = e_station.
AssignmentRule static_priority_rule(const TreeModel& model, std::size_t cls, std::size_t station);

/// Integer split of `total` proportional to `weights` (largest remainder,
/// ties to the smallest index), with entry k capped at cap[k].
std::vector<std::int64_t> largest_remainder(std::int64_t total, std::span<const double> weights,
                                            std::span<const std::int64_t> cap);

/// Scaled samples at t_k = k dt_out, k = 0..steps, row-major as in SimPath.
struct CtmcPath {
    double dt = 0.0;
    std::size_t classes = 0;
    std::size_t stations = 0;
    std::vector<double> x;  ///< (X - n x*) / sqrt(n)
    std::vector<double> y;  ///< Y / sqrt(n)
    std::vector<double> z;  ///< Z / sqrt(n)
    std::size_t events = 0;
    /// max over events of min(e.Y, e.Z); 0 for a work-conserving rule.
    std::int64_t max_work_gap = 0;
    CtmcState final_state;
};

struct CtmcOptions {
    double horizon = 1.0;
    double dt_out = 1e-2;
    std::uint64_t seed = 0;
    /// Called after each event with (time, state); for testing.
    std::function<void(double, const CtmcState&)> on_event;
};

/// Exponential race among arrivals, service completions and abandonments;
/// the rule reassigns after every event and the state identities are checked
/// each time (StructureError on violation).
CtmcPath simulate_ctmc(const TreeModel& model, const ScalingSpec& scaling, const AssignmentRule& rule,
                       std::span<const double> x_hat0, const CtmcOptions& options,
                       std::uint64_t replication = 0);

/// Initial headcounts round(n x*_i + sqrt(n) x_hat0_i), clamped at 0.
std::vector<std::int64_t> initial_headcounts(const TreeModel& model, std::size_t n,
                                             std::span<const double> x_hat0);

/// Scaled X at the given times for independent replications.
StateSamples ctmc_samples(const TreeModel& model, const ScalingSpec& scaling, const AssignmentRule& rule,
                          std::span<const double> x_hat0, std::span<const double> times,
                          std::size_t replications, std::uint64_t seed,
                          Backend backend = Backend::openmp);

struct MomentDiscrepancy {
    double time = 0.0;
    std::size_t cls = 0;
    double mean_a = 0.0, mean_b = 0.0, mean_diff = 0.0, mean_se = 0.0;
    double var_a = 0.0, var_b = 0.0, var_diff = 0.0, var_se = 0.0;

    double mean_z() const { return mean_se > 0.0 ? mean_diff / mean_se : (mean_diff == 0.0 ? 0.0 : 1e300); }
    double var_z() const { return var_se > 0.0 ? var_diff / var_se : (var_diff == 0.0 ? 0.0 : 1e300); }
};

/// Per time and class: mean and variance differences (a - b) with standard
/// errors; the variance error uses the sample fourth central moments.
/// Throws InputError when the times or class counts differ.
std::vector<MomentDiscrepancy> compare_to_diffusion(const StateSamples& a, const StateSamples& b);

}  // namespace hwsched
