#include "hwsched/det_system.hpp"
#include "hwsched/error.hpp"
#include "hwsched/path_calculus.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace hwsched;
using namespace hwsched::testing;

namespace {

TimeSeries sampled(double dt, double T, const std::function<double(double)>& f) {
    const auto n = static_cast<std::size_t>(std::llround(T / dt)) + 1;
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = f(dt * static_cast<double>(k));
    return {dt, std::move(v)};
}

DetTrajectory smooth_reference(const TreeModel& m, std::mt19937_64& rng, double dt, double T) {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    std::vector<double> a(m.classes), f(m.classes), cu(m.classes), cv(m.stations);
    for (std::size_t i = 0; i < m.classes; ++i) {
        a[i] = u(rng);
        f[i] = u(rng);
        cu[i] = u(rng);
    }
    for (auto& c : cv) c = u(rng);
    return reference_trajectory(
        m,
        [&](double t, std::vector<double>& x) {
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = a[i] * std::sin(f[i] * t + static_cast<double>(i));
        },
        [&](double t, ControlPoint& U) {
            double su = 0.0, sv = 0.0;
            for (std::size_t i = 0; i < U.u.size(); ++i) su += U.u[i] = std::exp(std::sin(cu[i] * t + i));
            for (std::size_t j = 0; j < U.v.size(); ++j) sv += U.v[j] = std::exp(std::cos(cv[j] * t + j));
            for (auto& w : U.u) w /= su;
            for (auto& w : U.v) w /= sv;
        },
        dt, T);
}

}  // namespace

TEST_SUITE("path_calculus") {
    TEST_CASE("trapezoid integral") {
        const auto lin = integrate(sampled(0.01, 1.0, [](double t) { return 3.0 * t + 1.0; }));
        CHECK(lin.values.back() == doctest::Approx(2.5).epsilon(1e-13));
        CHECK(lin[0] == 0.0);
        const auto quad = integrate(sampled(0.01, 1.0, [](double t) { return t * t; }));
        CHECK(std::abs(quad.values.back() - 1.0 / 3.0) <= 1e-4);
        CHECK_THROWS_AS(integrate(TimeSeries(0.0, {1.0, 2.0})), InputError);
        CHECK_THROWS_AS(integrate(TimeSeries(0.1, {1.0})), InputError);
    }

    TEST_CASE("elementary symmetric coefficients") {
        const std::vector<double> rates{1.0, 2.0, 3.0};
        const auto e = expand_coefficients(rates);
        REQUIRE(e.size() == 4);
        CHECK(e[0] == 1.0);
        CHECK(e[1] == 6.0);
        CHECK(e[2] == 11.0);
        CHECK(e[3] == 6.0);
        CHECK(expand_coefficients(std::vector<double>{}) == std::vector<double>{1.0});
    }

    TEST_CASE("composition is order independent and equals the power series") {
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> u(0.0, 3.0);
        const auto f = sampled(1e-3, 2.0, [](double t) { return std::cos(3.0 * t) + t; });
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<double> rates(1 + trial % 5);
            for (auto& r : rates) r = u(rng);
            const auto a = apply_T_seq(rates, f);
            auto reversed = rates;
            std::reverse(reversed.begin(), reversed.end());
            const auto b = apply_T_seq(reversed, f);
            const auto c = apply_power_series(expand_coefficients(rates), f);
            for (std::size_t k = 0; k < f.size(); ++k) {
                CHECK(std::abs(a[k] - b[k]) <= 1e-10);
                CHECK(std::abs(a[k] - c[k]) <= 1e-10);
            }
        }
    }

    TEST_CASE("invert_T inverts T_mu") {
        const double mu = 1.7;
        const auto one = TimeSeries::constant(1e-3, 2001, 1.0);
        const auto x = invert_T(mu, one);
        for (std::size_t k = 0; k < x.size(); k += 100)
            CHECK(x[k] == doctest::Approx(std::exp(-mu * x.time(k))).epsilon(1e-5));
        const auto w = sampled(1e-3, 2.0, [](double t) { return std::sin(t) + 2.0 * t; });
        const auto back = apply_T(mu, invert_T(mu, w));
        for (std::size_t k = 0; k < w.size(); ++k) CHECK(std::abs(back[k] - w[k]) <= 1e-5);
        CHECK_THROWS_AS(invert_T(0.0, w), InputError);
    }

    TEST_CASE("multiset helpers") {
        CHECK(multiset_union({1.0, 3.0}, {2.0, 3.0}) == RateMultiset{1.0, 2.0, 3.0, 3.0});
        CHECK(multiset_remove_one({1.0, 2.0, 2.0}, 2.0) == RateMultiset{1.0, 2.0});
        CHECK_THROWS_AS(multiset_remove_one({1.0}, 5.0), InputError);
    }

    TEST_CASE("sequence sizes follow the tree") {
        const auto m = load_fixture("chain.json").model;
        const auto s = build_sequences(m);
        REQUIRE(s.A.size() == 3);
        REQUIRE(s.B.size() == 2);
        for (std::size_t i = 0; i < 3; ++i) CHECK(s.A_prime[i].size() == s.A[i].size() + 1);
        for (const auto& a : s.A) CHECK(std::is_sorted(a.begin(), a.end()));
    }

    TEST_CASE("integral equation vanishes on reference solutions of random trees") {
        std::mt19937_64 rng(22);
        for (int t = 0; t < 30; ++t) {
            const auto m = random_tree(rng, 9);
            const auto tr = smooth_reference(m, rng, 1e-3, 1.0);
            for (std::size_t root = 0; root < m.classes; ++root) {
                const auto seqs = build_sequences(m, build_combinatorics(m, root));
                const auto res = residual_integral_eq(seqs, tr.w, tr.y, tr.z);
                double scale = 1.0;
                for (const auto& w : tr.w) scale = std::max(scale, w.sup_abs());
                CHECK(res.sup_abs() <= 1e-5 * scale);
            }
        }
    }

    TEST_CASE("a wrong rate multiset leaves a visible residual") {
        std::mt19937_64 rng(23);
        const auto m = load_fixture("chain.json").model;
        const auto tr = smooth_reference(m, rng, 1e-3, 1.0);
        auto seqs = build_sequences(m);
        CHECK(residual_integral_eq(seqs, tr.w, tr.y, tr.z).sup_abs() <= 1e-5);
        seqs.A[1].push_back(0.5);
        CHECK(residual_integral_eq(seqs, tr.w, tr.y, tr.z).sup_abs() >= 1e-2);
    }

    TEST_CASE("residual of Euler trajectories is first order") {
        std::mt19937_64 rng(24);
        const auto m = random_tree(rng, 7, 3);
        const auto seqs = build_sequences(m);
        auto run = [&](double dt) {
            std::vector<TimeSeries> w;
            for (std::size_t i = 0; i < m.classes; ++i)
                w.push_back(sampled(dt, 2.0, [i](double t) { return 1.0 + t + 0.3 * std::sin(t + i); }));
            ControlPoint mid{std::vector<double>(m.classes, 1.0 / m.classes),
                             std::vector<double>(m.stations, 1.0 / m.stations)};
            const auto tr = integrate_det(m, w, ControlPath::constant(dt, w.front().size(), mid));
            return residual_integral_eq(seqs, tr.w, tr.y, tr.z).sup_abs();
        };
        const double ratio = run(2e-3) / run(1e-3);
        CHECK(ratio >= 1.7);
        CHECK(ratio <= 2.3);
    }

    TEST_CASE("special-case sequences") {
        std::mt19937_64 rng(25);
        const auto station = load_fixture("n_model_station_rates.json").model;
        const auto st = station_dependent_sequences(station);
        for (const auto& a : st.A) CHECK(a.empty());
        CHECK(st.B[0] == RateMultiset{1.0});
        CHECK(st.B[1] == RateMultiset{2.0});
        const auto tr = smooth_reference(station, rng, 1e-3, 1.0);
        CHECK(residual_integral_eq(st, tr.w, tr.y, tr.z).sup_abs() <= 1e-5);

        const auto cls_model = make_model(3, 2, {{0, 0}, {1, 0}, {1, 1}, {2, 1}}, {1.0, 2.0, 2.0, 3.0});
        const auto cl = class_dependent_sequences(cls_model);
        CHECK(cl.A[0] == RateMultiset{2.0, 3.0});
        CHECK(cl.B[0] == RateMultiset{1.0, 2.0, 3.0});
        const auto tr2 = smooth_reference(cls_model, rng, 1e-3, 1.0);
        CHECK(residual_integral_eq(cl, tr2.w, tr2.y, tr2.z).sup_abs() <= 1e-5);

        CHECK_THROWS_AS(station_dependent_sequences(load_fixture("n_model.json").model), InputError);
        CHECK_THROWS_AS(class_dependent_sequences(station), InputError);
    }

    TEST_CASE("grid mismatches are refused") {
        const auto m = load_fixture("single_class.json").model;
        const auto s = build_sequences(m);
        std::vector<TimeSeries> w{TimeSeries::constant(0.1, 5, 1.0)};
        std::vector<TimeSeries> y{TimeSeries::constant(0.1, 6, 1.0)};
        std::vector<TimeSeries> z{TimeSeries::constant(0.1, 5, 0.0)};
        CHECK_THROWS_AS(residual_integral_eq(s, w, y, z), InputError);
    }
}
