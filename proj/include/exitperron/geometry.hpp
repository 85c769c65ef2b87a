#pragma once

#include <span>
#include <string>
#include <vector>

namespace exitperron {

using Point = std::vector<double>;

enum class PointClass { interior, boundary, exterior };

/// Tolerance band for boundary classification, in domain units.
inline constexpr double kGeoTol = 1e-12;

/// The open set G the controlled state exits from. The exit set is fixed
/// to G itself, so a boundary point is already outside and hitting the
/// boundary band counts as an exit.
class DomainGeometry {
public:
    enum class Kind { box, ball };

    static DomainGeometry make_box(std::vector<double> lo, std::vector<double> hi);
    static DomainGeometry make_ball(std::vector<double> center, double radius);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }

    /// Exactly one of interior / boundary (within kGeoTol) / exterior.
    PointClass classify(std::span<const double> x) const;

    bool is_interior(std::span<const double> x) const {
        return classify(x) == PointClass::interior;
    }

    /// Nearest point of ∂G (used to evaluate g for states that stepped
    /// past the boundary and for off-boundary lattice nodes).
    Point project_to_boundary(std::span<const double> x) const;

    void bounding_box(std::vector<double>& lo, std::vector<double>& hi) const;

    /// Domain midpoint (box center / ball center).
    Point center() const;

    /// Largest r such that the ball B_r(center()) fits inside G.
    double inradius() const;

    const std::vector<double>& box_lo() const { return lo_; }
    const std::vector<double>& box_hi() const { return hi_; }
    const std::vector<double>& ball_center() const { return center_; }
    double ball_radius() const { return radius_; }

    std::string describe() const;

private:
    Kind kind_ = Kind::box;
    int dim_ = 0;
    std::vector<double> lo_, hi_;    // box
    std::vector<double> center_;     // ball
    double radius_ = 0;              // ball
};

}  // namespace exitperron
