#include "exitperron/geometry.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace exitperron {

DomainGeometry DomainGeometry::make_box(std::vector<double> lo, std::vector<double> hi) {
    if (lo.empty() || lo.size() != hi.size())
        throw std::invalid_argument("domain: box lo/hi must be nonempty and of equal length");
    for (size_t i = 0; i < lo.size(); ++i)
        if (!(lo[i] < hi[i]))
            throw std::invalid_argument("domain: box must have positive volume (lo < hi per axis)");
    DomainGeometry g;
    g.kind_ = Kind::box;
    g.dim_ = static_cast<int>(lo.size());
    g.lo_ = std::move(lo);
    g.hi_ = std::move(hi);
    return g;
}

DomainGeometry DomainGeometry::make_ball(std::vector<double> center, double radius) {
    if (center.empty())
        throw std::invalid_argument("domain: ball center must be nonempty");
    if (!(radius > 0))
        throw std::invalid_argument("domain: ball radius must be positive");
    DomainGeometry g;
    g.kind_ = Kind::ball;
    g.dim_ = static_cast<int>(center.size());
    g.center_ = std::move(center);
    g.radius_ = radius;
    return g;
}

PointClass DomainGeometry::classify(std::span<const double> x) const {
    if (kind_ == Kind::box) {
        bool near_face = false;
        for (int i = 0; i < dim_; ++i) {
            if (x[i] < lo_[i] - kGeoTol || x[i] > hi_[i] + kGeoTol) return PointClass::exterior;
            if (std::fabs(x[i] - lo_[i]) <= kGeoTol || std::fabs(x[i] - hi_[i]) <= kGeoTol)
                near_face = true;
        }
        return near_face ? PointClass::boundary : PointClass::interior;
    }
    double d2 = 0;
    for (int i = 0; i < dim_; ++i) {
        double t = x[i] - center_[i];
        d2 += t * t;
    }
    double dist = std::sqrt(d2);
    if (dist > radius_ + kGeoTol) return PointClass::exterior;
    if (dist >= radius_ - kGeoTol) return PointClass::boundary;
    return PointClass::interior;
}

Point DomainGeometry::project_to_boundary(std::span<const double> x) const {
    Point p(x.begin(), x.end());
    if (kind_ == Kind::box) {
        for (int i = 0; i < dim_; ++i) {
            if (p[i] < lo_[i]) p[i] = lo_[i];
            if (p[i] > hi_[i]) p[i] = hi_[i];
        }
        // clamped interior point: push the coordinate closest to a face onto it
        if (classify(p) == PointClass::interior) {
            int best_axis = 0;
            double best_dist = std::numeric_limits<double>::infinity();
            double best_val = 0;
            for (int i = 0; i < dim_; ++i) {
                double dlo = p[i] - lo_[i];
                double dhi = hi_[i] - p[i];
                if (dlo < best_dist) { best_dist = dlo; best_axis = i; best_val = lo_[i]; }
                if (dhi < best_dist) { best_dist = dhi; best_axis = i; best_val = hi_[i]; }
            }
            p[best_axis] = best_val;
        }
        return p;
    }
    double d2 = 0;
    for (int i = 0; i < dim_; ++i) {
        double t = x[i] - center_[i];
        d2 += t * t;
    }
    double dist = std::sqrt(d2);
    if (dist == 0) {
        p = center_;
        p[0] += radius_;
        return p;
    }
    double s = radius_ / dist;
    for (int i = 0; i < dim_; ++i) p[i] = center_[i] + s * (x[i] - center_[i]);
    return p;
}

void DomainGeometry::bounding_box(std::vector<double>& lo, std::vector<double>& hi) const {
    if (kind_ == Kind::box) {
        lo = lo_;
        hi = hi_;
        return;
    }
    lo.assign(center_.begin(), center_.end());
    hi.assign(center_.begin(), center_.end());
    for (int i = 0; i < dim_; ++i) {
        lo[i] -= radius_;
        hi[i] += radius_;
    }
}

Point DomainGeometry::center() const {
    if (kind_ == Kind::ball) return center_;
    Point c(static_cast<size_t>(dim_));
    for (int i = 0; i < dim_; ++i) c[i] = 0.5 * (lo_[i] + hi_[i]);
    return c;
}

double DomainGeometry::inradius() const {
    if (kind_ == Kind::ball) return radius_;
    double r = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dim_; ++i) r = std::fmin(r, 0.5 * (hi_[i] - lo_[i]));
    return r;
}

std::string DomainGeometry::describe() const {
    std::string s = kind_ == Kind::box ? "box[" : "ball[";
    if (kind_ == Kind::box) {
        for (int i = 0; i < dim_; ++i) {
            if (i) s += " x ";
            s += "(" + std::to_string(lo_[i]) + "," + std::to_string(hi_[i]) + ")";
        }
    } else {
        s += "center=(";
        for (int i = 0; i < dim_; ++i) {
            if (i) s += ",";
            s += std::to_string(center_[i]);
        }
        s += "), r=" + std::to_string(radius_);
    }
    return s + "]";
}

}  // namespace exitperron
