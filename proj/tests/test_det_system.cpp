#include "hwsched/det_system.hpp"
#include "hwsched/error.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace hwsched;
using namespace hwsched::testing;

namespace {

std::vector<TimeSeries> ramps(std::size_t I, double dt, double T, double w0 = 1.0, double slope = 1.0) {
    const auto n = static_cast<std::size_t>(std::llround(T / dt)) + 1;
    std::vector<TimeSeries> w;
    for (std::size_t i = 0; i < I; ++i) {
        std::vector<double> v(n);
        for (std::size_t k = 0; k < n; ++k) v[k] = w0 + slope * dt * static_cast<double>(k);
        w.emplace_back(dt, std::move(v));
    }
    return w;
}

ControlPath random_piecewise(std::mt19937_64& rng, std::size_t I, std::size_t J, double dt, std::size_t n,
                             std::size_t hold) {
    std::gamma_distribution<double> g(1.0, 1.0);
    ControlPath p{dt, {}};
    ControlPoint c{std::vector<double>(I), std::vector<double>(J)};
    for (std::size_t k = 0; k < n; ++k) {
        if (k % hold == 0) {
            double su = 0.0, sv = 0.0;
            for (auto& a : c.u) su += a = g(rng);
            for (auto& a : c.v) sv += a = g(rng);
            for (auto& a : c.u) a /= su;
            for (auto& a : c.v) a /= sv;
        }
        p.points.push_back(c);
    }
    return p;
}

}  // namespace

TEST_SUITE("det_system") {
    TEST_CASE("state identities hold along the trajectory") {
        std::mt19937_64 rng(31);
        for (int t = 0; t < 20; ++t) {
            const auto m = random_tree(rng, 8);
            const auto w = ramps(m.classes, 1e-2, 2.0, -1.0, 0.5);
            const auto tr = integrate_det(m, w, random_piecewise(rng, m.classes, m.stations, 1e-2, w[0].size(), 17));
            for (std::size_t k = 0; k < tr.size(); ++k) {
                double ey = 0.0, ez = 0.0;
                std::vector<double> row(m.classes, 0.0), col(m.stations, 0.0);
                for (std::size_t e = 0; e < m.edges.size(); ++e) {
                    row[m.edges[e].cls] += tr.psi[e][k];
                    col[m.edges[e].station] += tr.psi[e][k];
                }
                for (std::size_t i = 0; i < m.classes; ++i) {
                    CHECK(tr.y[i][k] >= 0.0);
                    CHECK(row[i] + tr.y[i][k] == doctest::Approx(tr.x[i][k]));
                    ey += tr.y[i][k];
                }
                for (std::size_t j = 0; j < m.stations; ++j) {
                    CHECK(tr.z[j][k] >= 0.0);
                    CHECK(col[j] + tr.z[j][k] == doctest::Approx(0.0).scale(1.0));
                    ez += tr.z[j][k];
                }
                CHECK(std::min(ey, ez) == 0.0);
            }
        }
    }

    TEST_CASE("one class: closed form x = w0 exp(-mu t) while idle") {
        const auto m = load_fixture("single_class.json").model;
        const double dt = 1e-4;
        std::vector<TimeSeries> w{TimeSeries::constant(dt, 10001, -1.0)};
        const auto tr = integrate_det(m, w, ControlPath::constant(dt, 10001, ControlPoint::vertex(1, 1, 0, 0)));
        CHECK(tr.x[0].values.back() == doctest::Approx(-std::exp(-1.0)).epsilon(1e-3));
        CHECK(tr.z[0].values.back() == doctest::Approx(std::exp(-1.0)).epsilon(1e-3));
    }

    TEST_CASE("nonidling on the N-model under random controls") {
        const auto m = load_fixture("n_model.json").model;
        REQUIRE(hub_station(m) == 0);
        std::mt19937_64 rng(32);
        const auto w = ramps(2, 1e-3, 3.0);
        for (int run = 0; run < 20; ++run) {
            const auto rep = check_nonidling(m, w, random_piecewise(rng, 2, 2, 1e-3, w[0].size(), 97));
            CHECK(rep.hypotheses_hold);
            CHECK(rep.max_idle_norm <= 1e-12);
        }
    }

    TEST_CASE("nonidling hypotheses are flagged, not thrown") {
        const auto chain = load_fixture("chain.json").model;
        const auto w = ramps(3, 1e-2, 1.0);
        const auto rep = check_nonidling(chain, w, ControlPath::constant(1e-2, w[0].size(),
                                                                         ControlPoint::vertex(3, 2, 0, 0)));
        CHECK_FALSE(rep.hypotheses_hold);
        CHECK_FALSE(rep.flags.empty());

        auto fast = load_fixture("n_model.json").model;
        fast.theta[0] = 5.0;
        const auto w2 = ramps(2, 1e-2, 1.0);
        const auto c = ControlPath::constant(1e-2, w2[0].size(), ControlPoint::vertex(2, 2, 0, 0));
        CHECK_FALSE(check_nonidling(fast, w2, c).hypotheses_hold);
        const auto flat = ramps(2, 1e-2, 1.0, 1.0, 0.0);
        CHECK_FALSE(check_nonidling(load_fixture("n_model.json").model, flat, c).hypotheses_hold);
    }

    TEST_CASE("decreasing drivers do idle") {
        const auto m = load_fixture("n_model.json").model;
        const auto w = ramps(2, 1e-2, 2.0, 1.0, -2.0);
        const auto rep = check_nonidling(m, w, ControlPath::constant(1e-2, w[0].size(), ControlPoint::vertex(2, 2, 0, 0)));
        CHECK(rep.max_idle_norm > 0.1);
    }

    TEST_CASE("input checks") {
        const auto m = load_fixture("n_model.json").model;
        const auto w = ramps(2, 1e-2, 1.0);
        CHECK_THROWS_AS(integrate_det(m, ramps(1, 1e-2, 1.0), ControlPath::constant(1e-2, 101, ControlPoint::vertex(2, 2, 0, 0))),
                        InputError);
        CHECK_THROWS_AS(integrate_det(m, w, ControlPath::constant(1e-2, 50, ControlPoint::vertex(2, 2, 0, 0))),
                        InputError);
        CHECK_THROWS_AS(integrate_det(m, w, ControlPath::constant(1e-2, 101, ControlPoint{{0.7, 0.7}, {1, 0}})),
                        InputError);
    }

    TEST_CASE("non-tree counterexample") {
        for (double k : {1.0, 10.0, 100.0}) {
            const auto rep = example1_counterexample(k, 1e-3, 5.0);
            CHECK(rep.max_residual() <= 1e-8 * std::max(1.0, k));
            CHECK(rep.sup_state_norm >= 0.99 * k);
            CHECK(rep.sup_state_norm <= 1.01 * k);
            CHECK(rep.sup_driver_norm == 0.0);
            CHECK(rep.residual_quadrature <= 1e-5 * k);
        }
        CHECK_THROWS_AS(example1_counterexample(-1.0, 1e-3, 5.0), InputError);
    }

    TEST_CASE("growth fits") {
        const auto t = geometric_times(1.0, 64.0);
        REQUIRE(t.size() == 7);
        std::vector<double> poly, expo;
        for (double s : t) {
            poly.push_back(3.0 * std::pow(1.0 + s, 1.5));
            expo.push_back(std::exp(0.2 * s));
        }
        const auto p = growth_report(t, poly);
        CHECK(p.polynomial_preferred());
        CHECK(p.poly_exponent == doctest::Approx(1.5));
        CHECK(p.poly_rss <= 1e-20);
        const auto e = growth_report(t, expo);
        CHECK_FALSE(e.polynomial_preferred());
        CHECK(e.exp_rate == doctest::Approx(0.2));
        CHECK_THROWS_AS(growth_report(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}), InputError);
        CHECK_THROWS_AS(growth_report(t, std::vector<double>(t.size(), 0.0)), InputError);
    }
}
