#pragma once

#include <vector>

#include <Eigen/Dense>

namespace mvlab {

/// A control value u in R^c.
using Control = Eigen::VectorXd;

/// The admissible control set U: either finitely many points (possibly nonconvex, e.g. two
/// points) or a closed box.
class ControlSet {
public:
    enum class Kind { finite_grid, box };

    static ControlSet finite_grid(std::vector<Control> points);
    static ControlSet box(Control lower, Control upper);

    Kind kind() const noexcept { return kind_; }
    int dim() const noexcept { return dim_; }
    const std::vector<Control>& points() const noexcept { return points_; }
    const Control& lower() const noexcept { return lower_; }
    const Control& upper() const noexcept { return upper_; }

    bool contains(const Control& u, double tol = 1e-12) const;
    /// Nearest admissible point (Euclidean).
    Control project(const Control& u) const;
    /// Candidate points for enumeration: the points themselves, or a tensor grid with
    /// `per_axis` nodes per coordinate for a box.
    std::vector<Control> enumerate(int per_axis) const;
    bool is_singleton() const;

private:
    ControlSet() = default;
    Kind kind_ = Kind::finite_grid;
    int dim_ = 0;
    std::vector<Control> points_;
    Control lower_, upper_;
};

const char* to_string(ControlSet::Kind kind);

}  // namespace mvlab
