#pragma once

#include "hwsched/model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace hwsched {

struct GridAxis {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;

    double step() const { return (upper - lower) / static_cast<double>(count - 1); }
    double coord(std::size_t k) const { return lower + step() * static_cast<double>(k); }
    bool operator==(const GridAxis&) const = default;
};

/// Uniform tensor grid on a box, row-major (first axis slowest).
class Grid {
public:
    Grid() = default;
    /// Throws InputError unless every axis has finite bounds, lower < upper, count >= 3.
    explicit Grid(std::vector<GridAxis> axes);

    /// Per-dimension [-w_i, w_i] with w_i = half_width_sigmas * r_i / sqrt(2 gamma).
    static Grid centered_box(const TreeModel& model, double half_width_sigmas, std::size_t count);

    std::size_t dims() const { return axes_.size(); }
    std::size_t size() const { return size_; }
    const GridAxis& axis(std::size_t d) const { return axes_[d]; }
    const std::vector<GridAxis>& axes() const { return axes_; }
    std::size_t stride(std::size_t d) const { return strides_[d]; }

    std::size_t coordinate_index(std::size_t flat, std::size_t d) const {
        return (flat / strides_[d]) % axes_[d].count;
    }
    void coords(std::size_t flat, std::span<double> x) const;
    std::vector<double> coords(std::size_t flat) const;
    bool on_boundary(std::size_t flat) const;
    /// At least `margin` points away from every face.
    bool interior(std::size_t flat, std::size_t margin) const;

    /// Nearest grid point, with coordinates clamped into the box.
    std::size_t nearest(std::span<const double> x) const;

    /// Multilinear corner weights for x clamped into the box (2^dims entries).
    void multilinear(std::span<const double> x, std::vector<std::size_t>& corners,
                     std::vector<double>& weights) const;

    bool operator==(const Grid& o) const { return axes_ == o.axes_; }

private:
    std::vector<GridAxis> axes_;
    std::vector<std::size_t> strides_;
    std::size_t size_ = 0;
};

struct ValueField {
    Grid grid;
    std::vector<double> values;

    double at(std::span<const double> x) const;  ///< multilinear interpolation, clamped
};

struct PolicyField {
    Grid grid;
    std::size_t classes = 0;
    std::size_t stations = 0;
    std::vector<ControlPoint> controls;
};

}  // namespace hwsched
