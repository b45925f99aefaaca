#include "hwsched/path_calculus.hpp"

#include "hwsched/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace hwsched {

double TimeSeries::sup_abs() const {
    double s = 0.0;
    for (double v : values) s = std::max(s, std::abs(v));
    return s;
}

void TimeSeries::check() const {
    if (!(dt > 0.0)) throw InputError("time series step must be positive");
    if (values.size() < 2) throw InputError("time series needs at least two samples");
}

TimeSeries integrate(const TimeSeries& f) {
    f.check();
    TimeSeries out(f.dt, std::vector<double>(f.size(), 0.0));
    const double half = 0.5 * f.dt;
    for (std::size_t k = 1; k < f.size(); ++k)
        out.values[k] = out.values[k - 1] + half * (f.values[k - 1] + f.values[k]);
    return out;
}

TimeSeries apply_T(double alpha, const TimeSeries& f) {
    if (alpha == 0.0) {
        f.check();
        return f;
    }
    auto out = integrate(f);
    for (std::size_t k = 0; k < f.size(); ++k) out.values[k] = f.values[k] + alpha * out.values[k];
    return out;
}

TimeSeries apply_T_seq(std::span<const double> rates, const TimeSeries& f) {
    f.check();
    TimeSeries out = f;
    for (double a : rates) out = apply_T(a, out);
    return out;
}

TimeSeries invert_T(double mu, const TimeSeries& w) {
    w.check();
    if (!(mu > 0.0)) throw InputError("invert_T needs mu > 0");
    // conv_k = int_0^{t_k} w(s) exp(-mu (t_k - s)) ds by composite trapezoid; the
    // recursion below is exactly that sum, panel by panel.
    const double decay = std::exp(-mu * w.dt);
    const double half = 0.5 * w.dt;
    TimeSeries x(w.dt, std::vector<double>(w.size()));
    double conv = 0.0;
    x.values[0] = w.values[0];
    for (std::size_t k = 1; k < w.size(); ++k) {
        conv = decay * conv + half * (decay * w.values[k - 1] + w.values[k]);
        x.values[k] = w.values[k] - mu * conv;
    }
    return x;
}

std::vector<double> expand_coefficients(std::span<const double> rates) {
    std::vector<double> e(rates.size() + 1, 0.0);
    e[0] = 1.0;
    std::size_t used = 0;
    for (double a : rates) {
        ++used;
        for (std::size_t n = used; n >= 1; --n) e[n] += a * e[n - 1];
    }
    return e;
}

TimeSeries apply_power_series(std::span<const double> coeffs, const TimeSeries& f) {
    f.check();
    TimeSeries out(f.dt, std::vector<double>(f.size(), 0.0));
    TimeSeries power = f;
    for (std::size_t n = 0; n < coeffs.size(); ++n) {
        if (n > 0) power = integrate(power);
        if (coeffs[n] == 0.0) continue;
        for (std::size_t k = 0; k < f.size(); ++k) out.values[k] += coeffs[n] * power.values[k];
    }
    return out;
}

RateMultiset multiset_union(const RateMultiset& a, const RateMultiset& b) {
    RateMultiset out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

RateMultiset multiset_remove_one(const RateMultiset& a, double value) {
    RateMultiset out = a;
    auto it = std::find(out.begin(), out.end(), value);
    if (it == out.end()) throw InputError("multiset does not contain the value to remove");
    out.erase(it);
    return out;
}

namespace {

void add_prime(const TreeModel& model, OperatorSequences& seqs) {
    seqs.A_prime.resize(model.classes);
    for (std::size_t i = 0; i < model.classes; ++i)
        seqs.A_prime[i] = multiset_union(seqs.A[i], RateMultiset{model.theta[i]});
}

}  // namespace

OperatorSequences build_sequences(const TreeModel& model, const TreeCombinatorics& comb) {
    require_valid(model);
    const auto I = model.classes;
    auto mu_edge = [&](std::size_t cls, std::size_t station_node) {
        return model.mu(cls, station_node - I);
    };
    auto parent = [&](std::size_t v) { return static_cast<std::size_t>(comb.parent[v]); };
    auto level = [&](std::size_t k) -> const std::vector<std::size_t>& {
        static const std::vector<std::size_t> empty;
        return k < comb.levels.size() ? comb.levels[k] : empty;
    };

    const auto root = comb.root;
    std::map<std::size_t, RateMultiset> A;  // classes already eliminated into w - y terms
    std::map<std::size_t, RateMultiset> B;  // stations already turned into z terms
    std::map<std::size_t, RateMultiset> C;  // classes whose parent-edge flow is still open

    // Base: the root's balance with the flows of its child stations substituted.
    A[root] = {};
    for (auto j : level(1)) B[j] = {mu_edge(root, j)};
    for (auto i : level(2)) C[i] = {mu_edge(root, parent(i))};

    for (std::size_t k = 1; !level(2 * k).empty(); ++k) {
        RateMultiset D;
        for (auto i : level(2 * k)) D.push_back(mu_edge(i, parent(i)));
        std::sort(D.begin(), D.end());
        for (auto& [node, seq] : A) seq = multiset_union(D, seq);
        for (auto& [node, seq] : B) seq = multiset_union(D, seq);

        std::map<std::size_t, RateMultiset> next_C;
        for (auto i : level(2 * k)) {
            const auto base = multiset_union(multiset_remove_one(D, mu_edge(i, parent(i))), C.at(i));
            A[i] = base;
            for (auto j : comb.children[i]) {
                auto with_child = multiset_union(base, RateMultiset{mu_edge(i, j)});
                B[j] = with_child;
                for (auto grandchild : comb.children[j]) next_C[grandchild] = with_child;
            }
        }
        C = std::move(next_C);
    }

    OperatorSequences seqs;
    seqs.root = root;
    seqs.A.resize(I);
    seqs.B.resize(model.stations);
    for (auto& [node, seq] : A) seqs.A[node] = seq;
    for (auto& [node, seq] : B) seqs.B[node - I] = seq;
    add_prime(model, seqs);
    return seqs;
}

OperatorSequences build_sequences(const TreeModel& model) {
    return build_sequences(model, build_combinatorics(model, 0));
}

OperatorSequences station_dependent_sequences(const TreeModel& model) {
    require_valid(model);
    OperatorSequences seqs;
    seqs.A.assign(model.classes, {});
    seqs.B.resize(model.stations);
    for (std::size_t j = 0; j < model.stations; ++j) {
        double rate = -1.0;
        for (const auto& e : model.edges) {
            if (e.station != j) continue;
            if (rate >= 0.0 && model.mu(e.cls, j) != rate)
                throw InputError("service rates are not station-dependent");
            rate = model.mu(e.cls, j);
        }
        seqs.B[j] = {rate};
    }
    for (double t : model.theta)
        if (t != 0.0) throw InputError("station-dependent reduction needs theta = 0");
    add_prime(model, seqs);
    return seqs;
}

OperatorSequences class_dependent_sequences(const TreeModel& model) {
    require_valid(model);
    std::vector<double> rate(model.classes, -1.0);
    for (const auto& e : model.edges) {
        if (rate[e.cls] >= 0.0 && model.mu(e.cls, e.station) != rate[e.cls])
            throw InputError("service rates are not class-dependent");
        rate[e.cls] = model.mu(e.cls, e.station);
    }
    for (double t : model.theta)
        if (t != 0.0) throw InputError("class-dependent reduction needs theta = 0");
    RateMultiset all(rate.begin(), rate.end());
    std::sort(all.begin(), all.end());
    OperatorSequences seqs;
    seqs.A.resize(model.classes);
    for (std::size_t i = 0; i < model.classes; ++i) seqs.A[i] = multiset_remove_one(all, rate[i]);
    seqs.B.assign(model.stations, all);
    add_prime(model, seqs);
    return seqs;
}

namespace {

void check_grids(const OperatorSequences& seqs, std::span<const TimeSeries> w,
                 std::span<const TimeSeries> y, std::span<const TimeSeries> z) {
    if (w.size() != seqs.A.size() || y.size() != seqs.A.size() || z.size() != seqs.B.size())
        throw InputError("series count does not match the sequences");
    if (w.empty()) throw InputError("no series");
    const auto& ref = w.front();
    ref.check();
    auto same = [&](const TimeSeries& s) {
        return s.dt == ref.dt && s.size() == ref.size();
    };
    for (const auto* group : {&w, &y, &z})
        for (const auto& s : *group)
            if (!same(s)) throw InputError("grid mismatch between series");
}

template <class Apply>
TimeSeries accumulate(const OperatorSequences& seqs, std::span<const TimeSeries> w,
                      std::span<const TimeSeries> y, std::span<const TimeSeries> z, Apply apply) {
    check_grids(seqs, w, y, z);
    TimeSeries out(w.front().dt, std::vector<double>(w.front().size(), 0.0));
    auto add = [&](const TimeSeries& s, double sign) {
        for (std::size_t k = 0; k < s.size(); ++k) out.values[k] += sign * s.values[k];
    };
    for (std::size_t i = 0; i < seqs.A.size(); ++i) {
        add(apply(seqs.A[i], w[i]), 1.0);
        add(apply(seqs.A_prime[i], y[i]), -1.0);
    }
    for (std::size_t j = 0; j < seqs.B.size(); ++j) add(apply(seqs.B[j], z[j]), 1.0);
    return out;
}

}  // namespace

TimeSeries residual_integral_eq(const OperatorSequences& seqs, std::span<const TimeSeries> w,
                                std::span<const TimeSeries> y, std::span<const TimeSeries> z) {
    return accumulate(seqs, w, y, z, [](const RateMultiset& rates, const TimeSeries& f) {
        return apply_T_seq(rates, f);
    });
}

TimeSeries residual_power_series(const OperatorSequences& seqs, std::span<const TimeSeries> w,
                                 std::span<const TimeSeries> y, std::span<const TimeSeries> z) {
    return accumulate(seqs, w, y, z, [](const RateMultiset& rates, const TimeSeries& f) {
        return apply_power_series(expand_coefficients(rates), f);
    });
}

}  // namespace hwsched
