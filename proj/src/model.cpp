#include "hwsched/model.hpp"

#include "hwsched/error.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>

namespace hwsched {

namespace {

constexpr double kBalanceTol = 1e-9;

std::vector<int> bfs_distances(const std::vector<std::vector<std::size_t>>& adj, std::size_t from) {
    std::vector<int> dist(adj.size(), -1);
    std::queue<std::size_t> frontier;
    dist[from] = 0;
    frontier.push(from);
    while (!frontier.empty()) {
        const auto v = frontier.front();
        frontier.pop();
        for (auto w : adj[v]) {
            if (dist[w] < 0) {
                dist[w] = dist[v] + 1;
                frontier.push(w);
            }
        }
    }
    return dist;
}

template <class... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

}  // namespace

bool TreeModel::has_edge(std::size_t i, std::size_t j) const {
    return std::any_of(edges.begin(), edges.end(),
                       [&](const Activity& e) { return e.cls == i && e.station == j; });
}

ControlPoint ControlPoint::vertex(std::size_t classes, std::size_t stations, std::size_t i,
                                  std::size_t j) {
    ControlPoint c{std::vector<double>(classes, 0.0), std::vector<double>(stations, 0.0)};
    c.u.at(i) = 1.0;
    c.v.at(j) = 1.0;
    return c;
}

bool ControlPoint::in_simplex(double tol) const {
    auto ok = [tol](const std::vector<double>& w) {
        if (w.empty()) return false;
        double s = 0.0;
        for (double a : w) {
            if (!(a >= -tol)) return false;
            s += a;
        }
        return std::abs(s - 1.0) <= tol * static_cast<double>(w.size());
    };
    return ok(u) && ok(v);
}

namespace {
double power(double a, double p) { return p == 1.0 ? a : std::pow(a, p); }
}  // namespace

double RunningCostSpec::evaluate(std::span<const double> x, const ControlPoint& control) const {
    double total = 0.0;
    double norm = 0.0;
    for (double xi : x) {
        total += xi;
        norm += std::abs(xi);
    }
    const double pos = std::max(total, 0.0);
    const double neg = std::max(-total, 0.0);
    double value = constant;
    if (pos > 0.0) {
        for (std::size_t i = 0; i < queue_weights.size(); ++i) {
            if (queue_weights[i] != 0.0) {
                value += queue_weights[i] * power(pos * control.u[i], queue_exponent);
            }
        }
    }
    if (neg > 0.0) {
        for (std::size_t j = 0; j < idle_weights.size(); ++j) {
            if (idle_weights[j] != 0.0) {
                value += idle_weights[j] * power(neg * control.v[j], idle_exponent);
            }
        }
    }
    if (norm_weight != 0.0) value += norm_weight * power(norm, norm_exponent);
    return value;
}

bool RunningCostSpec::bounded() const {
    auto zero = [](const std::vector<double>& w) {
        return std::all_of(w.begin(), w.end(), [](double a) { return a == 0.0; });
    };
    return zero(queue_weights) && zero(idle_weights) && norm_weight == 0.0;
}

bool RunningCostSpec::affine_in_control() const {
    auto zero = [](const std::vector<double>& w) {
        return std::all_of(w.begin(), w.end(), [](double a) { return a == 0.0; });
    };
    return (queue_exponent == 1.0 || zero(queue_weights)) &&
           (idle_exponent == 1.0 || zero(idle_weights));
}

double RunningCostSpec::growth_constant() const {
    auto max_of = [](const std::vector<double>& w) {
        return w.empty() ? 0.0 : *std::max_element(w.begin(), w.end());
    };
    // Each ((e.x)^+ u_i)^p <= |x|^p <= 1 + |x|^m_L because p <= m_L and sum u = 1.
    const double c = max_of(queue_weights) + max_of(idle_weights) + norm_weight + constant;
    return c > 0.0 ? c : 1.0;
}

double RunningCostSpec::growth_exponent() const {
    return bounded() ? 1.0 : std::max({queue_exponent, idle_exponent, norm_exponent, 1.0});
}

RunningCostSpec RunningCostSpec::scaled(double factor) const {
    RunningCostSpec out = *this;
    for (auto& c : out.queue_weights) c *= factor;
    for (auto& d : out.idle_weights) d *= factor;
    out.norm_weight *= factor;
    out.constant *= factor;
    return out;
}

std::vector<std::string> RunningCostSpec::violations(std::size_t classes,
                                                     std::size_t stations) const {
    std::vector<std::string> out;
    if (queue_weights.size() != classes) out.push_back("cost: queue_weights size != class count");
    if (idle_weights.size() != stations) out.push_back("cost: idle_weights size != station count");
    for (double c : queue_weights)
        if (!(c >= 0.0)) out.push_back("cost: negative queue weight");
    for (double d : idle_weights)
        if (!(d >= 0.0)) out.push_back("cost: negative idle weight");
    if (!(queue_exponent >= 1.0)) out.push_back("cost: queue_exponent < 1");
    if (!(idle_exponent >= 1.0)) out.push_back("cost: idle_exponent < 1");
    if (!(norm_exponent >= 1.0)) out.push_back("cost: norm_exponent < 1");
    if (!(norm_weight >= 0.0)) out.push_back("cost: negative norm_weight");
    if (!(constant >= 0.0)) out.push_back("cost: negative constant");
    return out;
}

std::vector<std::vector<std::size_t>> adjacency(const TreeModel& model) {
    std::vector<std::vector<std::size_t>> adj(model.node_count());
    for (const auto& e : model.edges) {
        if (e.cls >= model.classes || e.station >= model.stations) continue;
        const auto s = model.station_node(e.station);
        adj[e.cls].push_back(s);
        adj[s].push_back(e.cls);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
}

ValidationReport validate_model(const TreeModel& m) {
    ValidationReport rep;
    auto& bad = rep.violations;
    const auto I = m.classes;
    const auto J = m.stations;
    if (I == 0 || J == 0) {
        bad.push_back("model needs at least one class and one station");
        return rep;
    }

    bool sizes_ok = true;
    auto check_size = [&](std::size_t got, std::size_t want, const char* what) {
        if (got != want) {
            bad.push_back(cat(what, ": expected ", want, " entries, got ", got));
            sizes_ok = false;
        }
    };
    check_size(m.theta.size(), I, "theta");
    check_size(m.ell.size(), I, "ell");
    check_size(m.r.size(), I, "r");
    check_size(m.lambda.size(), I, "lambda");
    check_size(m.x_star.size(), I, "x_star");
    check_size(m.nu.size(), J, "nu");
    if (m.mu.rows() != I || m.mu.cols() != J) {
        bad.push_back("mu: wrong shape");
        sizes_ok = false;
    }
    if (m.psi_star.rows() != I || m.psi_star.cols() != J) {
        bad.push_back("psi_star: wrong shape");
        sizes_ok = false;
    }

    // Edge list sanity.
    std::vector<std::vector<bool>> is_edge(I, std::vector<bool>(J, false));
    for (const auto& e : m.edges) {
        if (e.cls >= I || e.station >= J) {
            bad.push_back(cat("edge (", e.cls, ",", e.station, ") out of range"));
            continue;
        }
        if (is_edge[e.cls][e.station]) bad.push_back(cat("duplicate edge (", e.cls, ",", e.station, ")"));
        is_edge[e.cls][e.station] = true;
    }

    // Graph structure: edge count and connectivity are checked independently.
    const auto adj = adjacency(m);
    rep.edge_count_ok = m.edges.size() == I + J - 1;
    if (!rep.edge_count_ok)
        bad.push_back(cat("graph has ", m.edges.size(), " edges, a tree on ", I + J, " nodes needs ",
                          I + J - 1));
    const auto dist0 = bfs_distances(adj, 0);
    rep.connected = std::all_of(dist0.begin(), dist0.end(), [](int d) { return d >= 0; });
    if (!rep.connected) bad.push_back("graph is not connected");
    if (rep.connected) {
        int diam = 0;
        for (std::size_t v = 0; v < adj.size(); ++v) {
            const auto d = bfs_distances(adj, v);
            diam = std::max(diam, *std::max_element(d.begin(), d.end()));
        }
        rep.diameter = diam;
    }

    if (!(m.gamma > 0.0)) bad.push_back("gamma must be > 0");
    if (!sizes_ok) return rep;

    for (std::size_t i = 0; i < I; ++i) {
        if (!(m.theta[i] >= 0.0)) bad.push_back(cat("theta[", i, "] < 0"));
        if (!(m.r[i] > 0.0)) bad.push_back(cat("r[", i, "] must be > 0"));
        if (!(m.lambda[i] > 0.0)) bad.push_back(cat("lambda[", i, "] must be > 0"));
        if (!std::isfinite(m.ell[i])) bad.push_back(cat("ell[", i, "] not finite"));
    }
    for (std::size_t j = 0; j < J; ++j)
        if (!(m.nu[j] > 0.0)) bad.push_back(cat("nu[", j, "] must be > 0"));

    for (std::size_t i = 0; i < I; ++i) {
        for (std::size_t j = 0; j < J; ++j) {
            if (is_edge[i][j]) {
                if (!(m.mu(i, j) > 0.0)) bad.push_back(cat("mu(", i, ",", j, ") must be > 0 on an edge"));
                if (!(m.psi_star(i, j) >= 0.0)) bad.push_back(cat("psi_star(", i, ",", j, ") < 0"));
            } else {
                if (m.mu(i, j) != 0.0) bad.push_back(cat("mu(", i, ",", j, ") nonzero off the edge set"));
                if (m.psi_star(i, j) != 0.0)
                    bad.push_back(cat("psi_star(", i, ",", j, ") nonzero off the edge set"));
            }
        }
    }

    // Fluid balance.
    for (std::size_t j = 0; j < J; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < I; ++i) s += m.psi_star(i, j);
        if (std::abs(s - m.nu[j]) > kBalanceTol)
            bad.push_back(cat("station ", j, ": sum_i psi_star = ", s, " != nu = ", m.nu[j]));
    }
    for (std::size_t i = 0; i < I; ++i) {
        double served = 0.0;
        double occupied = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            served += m.mu(i, j) * m.psi_star(i, j);
            occupied += m.psi_star(i, j);
        }
        if (std::abs(served - m.lambda[i]) > kBalanceTol)
            bad.push_back(cat("class ", i, ": sum_j mu psi_star = ", served, " != lambda = ", m.lambda[i]));
        if (std::abs(occupied - m.x_star[i]) > kBalanceTol)
            bad.push_back(cat("class ", i, ": sum_j psi_star = ", occupied, " != x_star = ", m.x_star[i]));
    }
    return rep;
}

void require_valid(const TreeModel& model) {
    const auto rep = validate_model(model);
    if (rep.valid()) return;
    std::string msg = "invalid model: " + rep.violations.front();
    if (!rep.connected || !rep.edge_count_ok) throw StructureError(msg);
    throw InputError(msg);
}

TreeCombinatorics build_combinatorics(const TreeModel& model, std::size_t root) {
    if (root >= model.classes) throw InputError("root must be a class node");
    require_valid(model);
    const auto adj = adjacency(model);
    const auto n = adj.size();

    TreeCombinatorics tc;
    tc.root = root;
    tc.level_of = bfs_distances(adj, root);
    tc.parent.assign(n, -1);
    tc.children.assign(n, {});
    int depth = *std::max_element(tc.level_of.begin(), tc.level_of.end());
    tc.levels.assign(static_cast<std::size_t>(depth) + 1, {});
    for (std::size_t v = 0; v < n; ++v) tc.levels[static_cast<std::size_t>(tc.level_of[v])].push_back(v);
    for (std::size_t v = 0; v < n; ++v) {
        for (auto w : adj[v]) {
            if (tc.level_of[w] == tc.level_of[v] - 1) tc.parent[v] = static_cast<int>(w);
            if (tc.level_of[w] == tc.level_of[v] + 1) tc.children[v].push_back(w);
        }
    }

    // Peel leaves, smallest id first, until a single edge remains.
    std::vector<std::size_t> degree(n);
    for (std::size_t v = 0; v < n; ++v) degree[v] = adj[v].size();
    std::vector<bool> removed(n, false);
    std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> leaves;
    for (std::size_t v = 0; v < n; ++v)
        if (degree[v] == 1) leaves.push(v);
    while (tc.peeling_order.size() + 2 < n) {
        const auto v = leaves.top();
        leaves.pop();
        removed[v] = true;
        tc.peeling_order.push_back(v);
        for (auto w : adj[v]) {
            if (removed[w]) continue;
            if (--degree[w] == 1) leaves.push(w);
        }
    }

    int diam = 0;
    for (std::size_t v = 0; v < n; ++v) {
        const auto d = bfs_distances(adj, v);
        diam = std::max(diam, *std::max_element(d.begin(), d.end()));
    }
    tc.diameter = diam;
    return tc;
}

std::string to_string(TheoremCase c) {
    switch (c) {
        case TheoremCase::class_or_station_rates: return "i";
        case TheoremCase::small_diameter: return "ii";
        case TheoremCase::norm_like_cost: return "iii";
        case TheoremCase::bounded_cost: return "iv";
    }
    return "?";
}

std::set<TheoremCase> classify_case(const TreeModel& model, const RunningCostSpec& cost) {
    const auto rep = validate_model(model);
    std::set<TheoremCase> out;

    bool class_only = true;
    bool station_only = true;
    for (const auto& a : model.edges) {
        for (const auto& b : model.edges) {
            if (a.cls == b.cls && model.mu(a.cls, a.station) != model.mu(b.cls, b.station))
                class_only = false;
            if (a.station == b.station && model.mu(a.cls, a.station) != model.mu(b.cls, b.station))
                station_only = false;
        }
    }
    const bool no_abandonment =
        std::all_of(model.theta.begin(), model.theta.end(), [](double t) { return t == 0.0; });
    bool all_edges_ok = true;
    bool some_edge_ok = false;
    for (const auto& e : model.edges) {
        const bool ok = model.theta[e.cls] <= model.mu(e.cls, e.station);
        all_edges_ok = all_edges_ok && ok;
        some_edge_ok = some_edge_ok || ok;
    }

    if ((class_only || station_only) && no_abandonment) out.insert(TheoremCase::class_or_station_rates);
    if (rep.diameter >= 0 && rep.diameter <= 3 && all_edges_ok) out.insert(TheoremCase::small_diameter);
    if (cost.norm_weight > 0.0 && some_edge_ok) out.insert(TheoremCase::norm_like_cost);
    if (cost.bounded()) out.insert(TheoremCase::bounded_cost);
    return out;
}

TreeModel make_model(std::size_t classes, std::size_t stations, const std::vector<Activity>& edges,
                     const std::vector<double>& edge_mu) {
    if (edge_mu.size() != edges.size()) throw InputError("one rate per edge required");
    TreeModel m;
    m.classes = classes;
    m.stations = stations;
    m.edges = edges;
    m.mu = RateMatrix(classes, stations);
    m.psi_star = RateMatrix(classes, stations);
    m.theta.assign(classes, 0.0);
    m.ell.assign(classes, 0.0);
    m.r.assign(classes, 1.0);
    m.lambda.assign(classes, 0.0);
    m.x_star.assign(classes, 0.0);
    m.nu.assign(stations, 0.0);
    // Unit fluid occupancy on every activity, with lambda, nu, x_star chosen to balance.
    for (std::size_t k = 0; k < edges.size(); ++k) {
        const auto& e = edges[k];
        if (e.cls >= classes || e.station >= stations) throw InputError("edge out of range");
        m.mu(e.cls, e.station) = edge_mu[k];
        m.psi_star(e.cls, e.station) = 1.0;
        m.lambda[e.cls] += edge_mu[k];
        m.x_star[e.cls] += 1.0;
        m.nu[e.station] += 1.0;
    }
    return m;
}

}  // namespace hwsched
