#pragma once

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace hwsched {

/// Dense row-major matrix, classes by stations.
class RateMatrix {
public:
    RateMatrix() = default;
    RateMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<const double> data() const { return data_; }

    bool operator==(const RateMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// An activity: class `cls` may be served at station `station` (both 0-based).
struct Activity {
    std::size_t cls = 0;
    std::size_t station = 0;
    bool operator==(const Activity&) const = default;
};

/// Buffer-station model. Classes are graph nodes 0..I-1, stations are nodes I..I+J-1.
///
/// The model is a plain value: construct it, then run validate_model() before
/// handing it to anything that assumes the tree structure. Functions that need a
/// valid model throw StructureError/InputError when given an invalid one.
struct TreeModel {
    std::size_t classes = 0;
    std::size_t stations = 0;
    std::vector<Activity> edges;
    RateMatrix mu;            ///< service rates, > 0 exactly on edges
    std::vector<double> theta;  ///< abandonment rates, >= 0
    std::vector<double> ell;    ///< drift constants of the driving Brownian motions
    std::vector<double> r;      ///< diffusion coefficients, > 0
    double gamma = 1.0;         ///< discount rate
    std::vector<double> lambda;  ///< first-order arrival rates
    std::vector<double> nu;      ///< station capacity fractions
    std::vector<double> x_star;  ///< static fluid headcounts
    RateMatrix psi_star;         ///< static fluid in-service fractions

    std::size_t node_count() const { return classes + stations; }
    std::size_t station_node(std::size_t j) const { return classes + j; }
    bool is_class_node(std::size_t node) const { return node < classes; }
    bool has_edge(std::size_t i, std::size_t j) const;
};

/// A point of the product of the class simplex and the station simplex.
struct ControlPoint {
    std::vector<double> u;
    std::vector<double> v;

    /// Vertex pair (e_i, e_j).
    static ControlPoint vertex(std::size_t classes, std::size_t stations, std::size_t i,
                               std::size_t j);
    bool in_simplex(double tol = 1e-12) const;
    bool operator==(const ControlPoint&) const = default;
};

/// L(x,U) = sum_i c_i ((e.x)^+ u_i)^p + sum_j d_j ((e.x)^- v_j)^q + kappa |x|^m + constant,
/// with |x| the l1 norm.
struct RunningCostSpec {
    std::vector<double> queue_weights;  ///< c, one per class
    std::vector<double> idle_weights;   ///< d, one per station
    double queue_exponent = 1.0;        ///< p
    double idle_exponent = 1.0;         ///< q
    double norm_weight = 0.0;           ///< kappa
    double norm_exponent = 1.0;         ///< m
    double constant = 0.0;

    double evaluate(std::span<const double> x, const ControlPoint& control) const;

    /// True when L does not depend on the state (c = d = kappa = 0).
    bool bounded() const;
    /// True when L is affine in the control for every x.
    bool affine_in_control() const;
    /// c_L and m_L of the polynomial growth bound L <= c_L (1 + |x|^m_L).
    double growth_constant() const;
    double growth_exponent() const;

    /// Multiply every weight (and the constant) by `factor`.
    RunningCostSpec scaled(double factor) const;

    std::vector<std::string> violations(std::size_t classes, std::size_t stations) const;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool connected = false;
    bool edge_count_ok = false;
    /// Graph diameter when connected, -1 otherwise.
    int diameter = -1;

    bool valid() const { return violations.empty(); }
};

/// Checks the tree structure, rate signs and the fluid balance equations
/// (absolute tolerance 1e-9). Never throws on a malformed model.
ValidationReport validate_model(const TreeModel& model);

/// Throws StructureError (graph) or InputError (parameters) unless valid.
void require_valid(const TreeModel& model);

struct TreeCombinatorics {
    std::size_t root = 0;
    std::vector<std::vector<std::size_t>> levels;  ///< levels[k] = nodes at distance k
    std::vector<int> level_of;                     ///< per node
    std::vector<int> parent;                       ///< -1 for the root
    std::vector<std::vector<std::size_t>> children;
    /// Leaves removed one per step (smallest node id first) until one edge is left.
    std::vector<std::size_t> peeling_order;
    int diameter = 0;
};

/// Breadth-first levels from a class node. Throws InputError if `root` is a station.
TreeCombinatorics build_combinatorics(const TreeModel& model, std::size_t root);

enum class TheoremCase { class_or_station_rates, small_diameter, norm_like_cost, bounded_cost };

std::string to_string(TheoremCase c);

/// Which of the four sufficient conditions for well-posedness of the control problem hold.
std::set<TheoremCase> classify_case(const TreeModel& model, const RunningCostSpec& cost);

/// Adjacency lists over graph nodes (classes then stations).
std::vector<std::vector<std::size_t>> adjacency(const TreeModel& model);

/// Dense mu/psi_star from edge list helpers for building models in code.
TreeModel make_model(std::size_t classes, std::size_t stations, const std::vector<Activity>& edges,
                     const std::vector<double>& edge_mu);

}  // namespace hwsched
