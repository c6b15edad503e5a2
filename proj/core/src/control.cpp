#include "mvlab/control.hpp"

#include <cmath>
#include <limits>

#include "mvlab/errors.hpp"

namespace mvlab {

const char* to_string(ControlSet::Kind kind) {
    return kind == ControlSet::Kind::box ? "box" : "finite_grid";
}

ControlSet ControlSet::finite_grid(std::vector<Control> points) {
    if (points.empty()) throw DomainError("control set must be nonempty");
    const auto dim = points.front().size();
    if (dim < 1) throw StructuralError("control dimension must be >= 1");
    for (const auto& p : points) {
        if (p.size() != dim) throw StructuralError("control points must share one dimension");
        if (!p.allFinite()) throw DomainError("control points must be finite");
    }
    ControlSet set;
    set.kind_ = Kind::finite_grid;
    set.dim_ = static_cast<int>(dim);
    set.points_ = std::move(points);
    return set;
}

ControlSet ControlSet::box(Control lower, Control upper) {
    if (lower.size() < 1 || lower.size() != upper.size())
        throw StructuralError("box bounds must have equal positive dimension");
    if (!lower.allFinite() || !upper.allFinite()) throw DomainError("box bounds must be finite");
    if ((lower.array() > upper.array()).any()) throw DomainError("box lower bound exceeds upper bound");
    ControlSet set;
    set.kind_ = Kind::box;
    set.dim_ = static_cast<int>(lower.size());
    set.lower_ = std::move(lower);
    set.upper_ = std::move(upper);
    return set;
}

bool ControlSet::contains(const Control& u, double tol) const {
    if (u.size() != dim_ || !u.allFinite()) return false;
    if (kind_ == Kind::box)
        return ((u.array() >= lower_.array() - tol) && (u.array() <= upper_.array() + tol)).all();
    for (const auto& p : points_)
        if ((p - u).lpNorm<Eigen::Infinity>() <= tol) return true;
    return false;
}

Control ControlSet::project(const Control& u) const {
    if (u.size() != dim_) throw StructuralError("control dimension mismatch");
    if (kind_ == Kind::box) return u.cwiseMax(lower_).cwiseMin(upper_);
    double best = std::numeric_limits<double>::infinity();
    const Control* arg = &points_.front();
    for (const auto& p : points_) {
        const double d = (p - u).squaredNorm();
        if (d < best) {
            best = d;
            arg = &p;
        }
    }
    return *arg;
}

std::vector<Control> ControlSet::enumerate(int per_axis) const {
    if (kind_ == Kind::finite_grid) return points_;
    if (per_axis < 1) throw DomainError("enumerate needs at least one node per axis");
    std::vector<Control> out;
    std::vector<int> index(static_cast<std::size_t>(dim_), 0);
    while (true) {
        Control u(dim_);
        for (int c = 0; c < dim_; ++c) {
            const double frac = per_axis == 1 ? 0.5 : static_cast<double>(index[c]) / (per_axis - 1);
            u[c] = lower_[c] + frac * (upper_[c] - lower_[c]);
        }
        out.push_back(std::move(u));
        int c = 0;
        while (c < dim_ && ++index[c] == per_axis) index[c++] = 0;
        if (c == dim_) break;
    }
    return out;
}

bool ControlSet::is_singleton() const {
    if (kind_ == Kind::box) return (upper_ - lower_).lpNorm<Eigen::Infinity>() == 0.0;
    for (const auto& p : points_)
        if (p != points_.front()) return false;
    return true;
}

}  // namespace mvlab
