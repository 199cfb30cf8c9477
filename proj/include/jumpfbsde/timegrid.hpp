#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jumpfbsde {

/// Grid point returned by TimeGrid::project.
struct GridPoint {
    std::size_t index;
    double time;
};

/// Partition 0 = t_0 < t_1 < ... < t_n = T of the horizon.
///
/// Step sizes are stored explicitly so that a uniform grid reports exactly
/// T/n for every step; schemes read step(i) and never assume uniformity.
/// Immutable after construction.
class TimeGrid {
public:
    /// Builds a grid from an explicit point list. The list must start at 0,
    /// be strictly increasing, and have mesh at most 1.
    explicit TimeGrid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) {
            throw std::invalid_argument("time grid needs at least two points");
        }
        if (points_.front() != 0.0) {
            throw std::invalid_argument("time grid must start at 0");
        }
        steps_.resize(points_.size() - 1);
        for (std::size_t i = 1; i < points_.size(); ++i) {
            if (!(points_[i] > points_[i - 1]) || !std::isfinite(points_[i])) {
                throw std::invalid_argument("time grid must be strictly increasing and finite");
            }
            steps_[i - 1] = points_[i] - points_[i - 1];
        }
        check_mesh();
    }

    static TimeGrid uniform(double horizon, std::size_t n) {
        if (n == 0) {
            throw std::invalid_argument("uniform grid needs n >= 1");
        }
        if (!(horizon > 0.0) || !std::isfinite(horizon)) {
            throw std::invalid_argument("uniform grid needs T > 0");
        }
        std::vector<double> pts(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            pts[i] = horizon * static_cast<double>(i) / static_cast<double>(n);
        }
        pts[n] = horizon;
        return TimeGrid(std::move(pts), std::vector<double>(n, horizon / static_cast<double>(n)));
    }

    /// Splits every step into `factor` equal substeps. Coarse points are kept
    /// bit-exactly, so fine index k*factor is coarse index k.
    TimeGrid refine(std::size_t factor) const {
        if (factor == 0) {
            throw std::invalid_argument("refinement factor must be >= 1");
        }
        if (factor == 1) {
            return *this;
        }
        std::vector<double> pts;
        std::vector<double> steps;
        pts.reserve(steps_.size() * factor + 1);
        steps.reserve(steps_.size() * factor);
        for (std::size_t i = 0; i < steps_.size(); ++i) {
            const double h = steps_[i] / static_cast<double>(factor);
            for (std::size_t m = 0; m < factor; ++m) {
                pts.push_back(m == 0 ? points_[i] : points_[i] + static_cast<double>(m) * h);
                steps.push_back(h);
            }
        }
        pts.push_back(points_.back());
        return TimeGrid(std::move(pts), std::move(steps));
    }

    std::size_t steps() const { return steps_.size(); }
    double horizon() const { return points_.back(); }
    double operator[](std::size_t i) const { return points_[i]; }
    std::span<const double> points() const { return points_; }

    /// Length of step i, i.e. t_i - t_{i-1}, for 1 <= i <= n.
    double step(std::size_t i) const { return steps_.at(i - 1); }

    double mesh() const { return *std::max_element(steps_.begin(), steps_.end()); }

    /// Largest grid point not exceeding t.
    GridPoint project(double t) const {
        if (!(t >= 0.0) || t > points_.back()) {
            throw std::out_of_range("time " + std::to_string(t) + " outside [0, T]");
        }
        auto it = std::upper_bound(points_.begin(), points_.end(), t);
        const auto idx = static_cast<std::size_t>(std::distance(points_.begin(), it)) - 1;
        return {idx, points_[idx]};
    }

private:
    TimeGrid(std::vector<double> points, std::vector<double> steps)
        : points_(std::move(points)), steps_(std::move(steps)) {
        check_mesh();
    }

    void check_mesh() const {
        if (mesh() > 1.0) {
            throw std::invalid_argument("grid mesh " + std::to_string(mesh()) + " exceeds 1");
        }
    }

    std::vector<double> points_;
    std::vector<double> steps_;
};

}  // namespace jumpfbsde
