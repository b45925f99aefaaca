#pragma once

#include "hwsched/model.hpp"
#include "hwsched/path_calculus.hpp"

#include <span>
#include <string>
#include <vector>

namespace hwsched {

/// Open-loop control samples on the same grid as the driver.
struct ControlPath {
    double dt = 0.0;
    std::vector<ControlPoint> points;

    static ControlPath constant(double dt, std::size_t length, const ControlPoint& c) {
        return {dt, std::vector<ControlPoint>(length, c)};
    }
};

struct DetTrajectory {
    double dt = 0.0;
    std::vector<Activity> edges;
    std::vector<TimeSeries> w;    ///< per class (includes the initial condition)
    std::vector<TimeSeries> x;    ///< per class
    std::vector<TimeSeries> y;    ///< per class
    std::vector<TimeSeries> z;    ///< per station
    std::vector<TimeSeries> psi;  ///< per edge, ordered as `edges`

    std::size_t size() const { return x.empty() ? 0 : x.front().size(); }
};

/// Explicit Euler stepping of the deterministic system: at each grid point the
/// lift gives (y, z, psi) from the current x and the control; x is then advanced
/// with left-endpoint integrals of psi and y.
DetTrajectory integrate_det(const TreeModel& model, std::span<const TimeSeries> w,
                            const ControlPath& controls);

struct NonidlingReport {
    double max_idle_norm = 0.0;  ///< max_t sum_j z_j(t)
    bool hypotheses_hold = true;
    std::vector<std::string> flags;
    DetTrajectory trajectory;
};

/// Runs integrate_det and measures idleness. Violated hypotheses (diameter > 3,
/// theta_i > mu_{i,hub}, drivers not strictly increasing or not starting positive)
/// are flagged in the report rather than thrown.
NonidlingReport check_nonidling(const TreeModel& model, std::span<const TimeSeries> w,
                                const ControlPath& controls);

/// Station through which every class can be served in a tree of diameter <= 3,
/// or -1 when there is none.
int hub_station(const TreeModel& model);

/// The closed-form non-tree counterexample on two classes and two stations
/// (rates 1 at station A, 2 at station B, w = y = z = 0).
struct CounterexampleReport {
    double k = 0.0;
    TimeSeries x1, x2;
    TimeSeries psi_1A, psi_2A, psi_1B, psi_2B;
    double residual_state = 0.0;     ///< state equation, exact integrals
    double residual_quadrature = 0.0;  ///< state equation, trapezoid integrals
    double residual_class_sums = 0.0;
    double residual_station_sums = 0.0;
    double residual_sign = 0.0;  ///< violations of y, z >= 0 and e.y ^ e.z = 0
    double sup_state_norm = 0.0;
    double sup_driver_norm = 0.0;

    double max_residual() const;
};

CounterexampleReport example1_counterexample(double k, double dt, double horizon);

/// Least-squares fits of log(q) against log(1+t) and against t.
struct GrowthReport {
    double poly_exponent = 0.0;
    double poly_intercept = 0.0;
    double poly_rss = 0.0;
    double exp_rate = 0.0;
    double exp_intercept = 0.0;
    double exp_rss = 0.0;

    bool polynomial_preferred() const { return poly_rss < exp_rss; }
};

/// Needs at least four strictly increasing positive times and positive values.
GrowthReport growth_report(std::span<const double> times, std::span<const double> values);

/// Geometric times t0, 2 t0, 4 t0, ... up to `last` inclusive.
std::vector<double> geometric_times(double first, double last);

}  // namespace hwsched
