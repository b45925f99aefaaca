#pragma once

#include "hwsched/model.hpp"

#include <span>
#include <vector>

namespace hwsched {

/// Uniformly sampled path f(0), f(dt), ..., f(T).
struct TimeSeries {
    double dt = 0.0;
    std::vector<double> values;

    TimeSeries() = default;
    TimeSeries(double step, std::vector<double> samples) : dt(step), values(std::move(samples)) {}
    static TimeSeries constant(double step, std::size_t length, double value) {
        return {step, std::vector<double>(length, value)};
    }

    std::size_t size() const { return values.size(); }
    double time(std::size_t k) const { return dt * static_cast<double>(k); }
    double operator[](std::size_t k) const { return values[k]; }
    double& operator[](std::size_t k) { return values[k]; }
    double sup_abs() const;

    /// Throws InputError unless dt > 0 and at least two samples.
    void check() const;
};

/// Sorted rate list; operator T_A depends only on the multiset.
using RateMultiset = std::vector<double>;

/// Rate multisets of the integral equation relating w, y and z.
struct OperatorSequences {
    std::size_t root = 0;
    std::vector<RateMultiset> A;        ///< per class
    std::vector<RateMultiset> A_prime;  ///< A[i] plus theta_i
    std::vector<RateMultiset> B;        ///< per station
};

/// Running integral by the trapezoid rule; result(0) = 0.
TimeSeries integrate(const TimeSeries& f);

/// f + alpha * integral of f.
TimeSeries apply_T(double alpha, const TimeSeries& f);

/// Composition over all rates in `rates` (order irrelevant up to rounding).
TimeSeries apply_T_seq(std::span<const double> rates, const TimeSeries& f);

/// Solves x + mu * integral(x) = w through the convolution form
/// x(t) = w(t) - mu int_0^t w(s) exp(-mu (t-s)) ds, trapezoid quadrature.
TimeSeries invert_T(double mu, const TimeSeries& w);

/// Elementary symmetric polynomials e_0 = 1, e_1, ..., e_n of the rates:
/// T_A = sum_n e_n(A) J^n.
std::vector<double> expand_coefficients(std::span<const double> rates);

/// sum_n coeffs[n] J^n f.
TimeSeries apply_power_series(std::span<const double> coeffs, const TimeSeries& f);

/// Level-by-level elimination of the edge flows, rooted at the tree's class node `comb.root`.
OperatorSequences build_sequences(const TreeModel& model, const TreeCombinatorics& comb);

/// Rooted at the lowest-index class.
OperatorSequences build_sequences(const TreeModel& model);

/// The reduced equation for station-only rates with no abandonment:
/// A_i empty, B_j = (mu_j). Throws InputError when the model does not match.
OperatorSequences station_dependent_sequences(const TreeModel& model);

/// The reduced equation for class-only rates with no abandonment:
/// A_i = (mu_i')_{i' != i}, B_j = (mu_i')_{all i'}.
OperatorSequences class_dependent_sequences(const TreeModel& model);

/// Left side sum_i T_{A_i} w_i - sum_i T_{A'_i} y_i + sum_j T_{B_j} z_j, pointwise.
TimeSeries residual_integral_eq(const OperatorSequences& seqs, std::span<const TimeSeries> w,
                                std::span<const TimeSeries> y, std::span<const TimeSeries> z);

/// Same equation evaluated through the expanded power series in J.
TimeSeries residual_power_series(const OperatorSequences& seqs, std::span<const TimeSeries> w,
                                 std::span<const TimeSeries> y, std::span<const TimeSeries> z);

/// Multiset helpers.
RateMultiset multiset_union(const RateMultiset& a, const RateMultiset& b);
RateMultiset multiset_remove_one(const RateMultiset& a, double value);

}  // namespace hwsched
