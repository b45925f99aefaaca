#include "hwsched/grid.hpp"

#include "hwsched/error.hpp"

#include <algorithm>
#include <cmath>

namespace hwsched {

Grid::Grid(std::vector<GridAxis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw InputError("grid needs at least one axis");
    for (const auto& a : axes_) {
        if (!std::isfinite(a.lower) || !std::isfinite(a.upper) || !(a.lower < a.upper))
            throw InputError("grid axis needs finite bounds with lower < upper");
        if (a.count < 3) throw InputError("grid axis needs at least 3 points");
    }
    strides_.assign(axes_.size(), 1);
    for (std::size_t d = axes_.size(); d-- > 1;) strides_[d - 1] = strides_[d] * axes_[d].count;
    size_ = strides_[0] * axes_[0].count;
}

Grid Grid::centered_box(const TreeModel& model, double half_width_sigmas, std::size_t count) {
    std::vector<GridAxis> axes;
    for (std::size_t i = 0; i < model.classes; ++i) {
        const double sigma = model.r[i] / std::sqrt(2.0 * model.gamma);
        axes.push_back({-half_width_sigmas * sigma, half_width_sigmas * sigma, count});
    }
    return Grid(std::move(axes));
}

void Grid::coords(std::size_t flat, std::span<double> x) const {
    for (std::size_t d = 0; d < axes_.size(); ++d) x[d] = axes_[d].coord(coordinate_index(flat, d));
}

std::vector<double> Grid::coords(std::size_t flat) const {
    std::vector<double> x(dims());
    coords(flat, x);
    return x;
}

bool Grid::on_boundary(std::size_t flat) const { return !interior(flat, 1); }

bool Grid::interior(std::size_t flat, std::size_t margin) const {
    for (std::size_t d = 0; d < axes_.size(); ++d) {
        const auto k = coordinate_index(flat, d);
        if (k < margin || k + margin >= axes_[d].count) return false;
    }
    return true;
}

std::size_t Grid::nearest(std::span<const double> x) const {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < axes_.size(); ++d) {
        const auto& a = axes_[d];
        const double pos = std::round((x[d] - a.lower) / a.step());
        const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(a.count - 1)));
        flat += k * strides_[d];
    }
    return flat;
}

void Grid::multilinear(std::span<const double> x, std::vector<std::size_t>& corners,
                       std::vector<double>& weights) const {
    const auto D = axes_.size();
    std::vector<std::size_t> base(D);
    std::vector<double> frac(D);
    for (std::size_t d = 0; d < D; ++d) {
        const auto& a = axes_[d];
        const double pos = std::clamp((x[d] - a.lower) / a.step(), 0.0, static_cast<double>(a.count - 1));
        auto k = static_cast<std::size_t>(std::floor(pos));
        if (k >= a.count - 1) k = a.count - 2;
        base[d] = k;
        frac[d] = pos - static_cast<double>(k);
    }
    const std::size_t n = std::size_t{1} << D;
    corners.resize(n);
    weights.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t flat = 0;
        double w = 1.0;
        for (std::size_t d = 0; d < D; ++d) {
            const bool up = (c >> d) & 1U;
            flat += (base[d] + (up ? 1 : 0)) * strides_[d];
            w *= up ? frac[d] : 1.0 - frac[d];
        }
        corners[c] = flat;
        weights[c] = w;
    }
}

double ValueField::at(std::span<const double> x) const {
    std::vector<std::size_t> corners;
    std::vector<double> weights;
    grid.multilinear(x, corners, weights);
    double v = 0.0;
    for (std::size_t c = 0; c < corners.size(); ++c) v += weights[c] * values[corners[c]];
    return v;
}

}  // namespace hwsched
