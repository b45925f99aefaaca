#pragma once

#include "hwsched/det_system.hpp"
#include "hwsched/grid.hpp"
#include "hwsched/model.hpp"
#include "hwsched/tree_flow.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace hwsched {

enum class Backend { serial, openmp };

struct FixedControl {
    ControlPoint control;
};

/// u = e_cls, v = e_station.
struct StaticPriority {
    std::size_t cls = 0;
    std::size_t station = 0;
};

/// Deterministic time-dependent control; the last sample is held past the end.
struct ScheduledControl {
    ControlPath path;
};

/// A vertex pair redrawn every `period` time units from a hash of (seed, path, interval).
struct RandomSwitching {
    double period = 1.0;
    std::uint64_t seed = 0;
};

enum class Interpolation { nearest, multilinear };

/// Markov policy read off a PolicyField. Outside the grid the state is clamped.
/// Multilinear blending averages controls, which is only safe for affine costs.
struct GridMarkov {
    std::shared_ptr<const PolicyField> field;
    Interpolation mode = Interpolation::nearest;
};

class Policy {
public:
    using Kind = std::variant<FixedControl, StaticPriority, ScheduledControl, RandomSwitching, GridMarkov>;

    Policy(Kind kind) : kind_(std::move(kind)) {}  // NOLINT(google-explicit-constructor)

    /// Writes U(t, x) for path `path` into `out`, whose u and v must already
    /// have the class and station counts.
    void evaluate(double t, std::span<const double> x, std::uint64_t path, ControlPoint& out) const;
    ControlPoint operator()(double t, std::span<const double> x, std::size_t stations,
                            std::uint64_t path = 0) const;

    /// Throws InputError if the policy does not fit the model dimensions.
    void check(const TreeModel& model) const;
    std::string describe() const;
    const Kind& kind() const { return kind_; }

private:
    Kind kind_;
};

/// States, lifted queue/idleness and controls at t_k = k dt, k = 0..steps.
/// Row-major: row k holds the class (or station) entries at t_k.
struct SimPath {
    double dt = 0.0;
    std::size_t classes = 0;
    std::size_t stations = 0;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> z;
    std::vector<double> u;
    std::vector<double> v;
    std::vector<double> w;  ///< realized standard Brownian motion

    std::size_t steps() const { return classes == 0 ? 0 : x.size() / classes - 1; }
    std::span<const double> state(std::size_t k) const { return {x.data() + k * classes, classes}; }
};

/// Euler-Maruyama with left-endpoint control:
/// X_{k+1} = X_k + b(X_k, U_k) dt + r sqrt(dt) xi_k.
SimPath simulate_path(const TreeDynamics& dyn, std::span<const double> x0, const Policy& policy,
                      double horizon, double dt, std::uint64_t seed, std::uint64_t path_index = 0);

/// Same scheme driven by given Brownian increments dW (steps x classes, row-major).
SimPath simulate_path_from_noise(const TreeDynamics& dyn, std::span<const double> x0,
                                 const Policy& policy, double dt, std::span<const double> dW,
                                 std::uint64_t path_index = 0);

struct McOptions {
    std::size_t paths = 10000;
    double horizon = 0.0;  ///< 0 selects 12 / gamma
    double dt = 1e-3;
    std::uint64_t seed = 0;
    Backend backend = Backend::openmp;
};

struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t paths = 0;
    double horizon = 0.0;
    double dt = 0.0;
    double tail_bound = 0.0;  ///< bound on the discounted cost beyond the horizon
    double moment_scale = 0.0;     ///< A in E|X(t)|^m <= A (1+t)^b, fitted
    double moment_exponent = 0.0;  ///< b

    double upper() const { return mean + tail_bound; }
};

/// Discounted cost over [0, T) with the running cost held on each step, so step k
/// carries weight e^{-gamma k dt} (1 - e^{-gamma dt}) / gamma. Averaged over paths. Per-path totals
/// are reduced in path order, so both backends return identical numbers.
CostEstimate mc_cost(const TreeDynamics& dyn, const RunningCostSpec& cost, std::span<const double> x0,
                     const Policy& policy, const McOptions& options);

/// c_L * int_T^inf e^{-gamma t} (1 + A (1+t)^b) dt.
double tail_bound(double c_L, double gamma, double horizon, double scale, double exponent);

struct MomentCurve {
    std::vector<double> times;
    std::vector<double> mean;       ///< E |X(t)|^m
    std::vector<double> std_error;
};

struct SampleOptions {
    std::size_t paths = 1000;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    Backend backend = Backend::openmp;
};

/// X(t) at the requested times for every path: data[(p * times + k) * classes + i].
struct StateSamples {
    std::vector<double> times;
    std::size_t paths = 0;
    std::size_t classes = 0;
    std::vector<double> data;

    double at(std::size_t path, std::size_t time, std::size_t cls) const {
        return data[(path * times.size() + time) * classes + cls];
    }
};

/// Times must be positive, increasing and (up to rounding) multiples of dt.
StateSamples sample_states(const TreeDynamics& dyn, std::span<const double> x0, const Policy& policy,
                           std::span<const double> times, const SampleOptions& options);

/// E |X(t)|^m with |.| the l1 norm. Requires m >= 1.
MomentCurve moment_curve(const TreeDynamics& dyn, const Policy& policy, double m,
                         std::span<const double> times, std::span<const double> x0,
                         const SampleOptions& options);

}  // namespace hwsched
