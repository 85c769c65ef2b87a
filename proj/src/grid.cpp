#include "exitperron/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace exitperron {

Grid::Grid(const DomainGeometry& domain, std::vector<int> resolution) : res_(std::move(resolution)) {
    if (res_.size() != static_cast<size_t>(domain.dim()))
        throw std::invalid_argument("grid: resolution must have one entry per state dimension");
    for (int r : res_)
        if (r < 3) throw std::invalid_argument("grid: resolution must be >= 3 per axis");

    domain.bounding_box(lo_, hi_);
    int d = dim();
    h_.resize(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i) {
        double w = hi_[static_cast<size_t>(i)] - lo_[static_cast<size_t>(i)];
        if (!(w > 0)) throw std::invalid_argument("grid: degenerate bounding box");
        h_[static_cast<size_t>(i)] = w / (res_[static_cast<size_t>(i)] - 1);
    }
    stride_.assign(static_cast<size_t>(d), 1);
    total_ = 1;
    for (int i = d - 1; i >= 0; --i) {
        stride_[static_cast<size_t>(i)] = total_;
        total_ *= res_[static_cast<size_t>(i)];
    }

    cls_.resize(static_cast<size_t>(total_));
    Point x(static_cast<size_t>(d));
    for (int n = 0; n < total_; ++n) {
        node_point(n, x);
        cls_[static_cast<size_t>(n)] = domain.classify(x);
    }

    // promote exterior nodes in the Moore neighbourhood of an interior
    // node (the 7-point split stencil reaches diagonal corners)
    std::vector<int> coords(static_cast<size_t>(d)), nb(static_cast<size_t>(d));
    std::vector<int> promote;
    for (int n = 0; n < total_; ++n) {
        if (cls_[static_cast<size_t>(n)] != PointClass::interior) continue;
        node_coords(n, coords);
        int moore = 1;
        for (int i = 0; i < d; ++i) moore *= 3;
        for (int m = 0; m < moore; ++m) {
            int rem = m;
            bool ok = true;
            for (int i = 0; i < d; ++i) {
                int off = rem % 3 - 1;
                rem /= 3;
                nb[static_cast<size_t>(i)] = coords[static_cast<size_t>(i)] + off;
                if (nb[static_cast<size_t>(i)] < 0 || nb[static_cast<size_t>(i)] >= res_[static_cast<size_t>(i)])
                    ok = false;
            }
            if (!ok) continue;
            int nn = linear_index(nb);
            if (cls_[static_cast<size_t>(nn)] == PointClass::exterior) promote.push_back(nn);
        }
    }
    for (int n : promote) cls_[static_cast<size_t>(n)] = PointClass::boundary;

    proj_.assign(static_cast<size_t>(total_) * static_cast<size_t>(d), 0.0);
    for (int n = 0; n < total_; ++n) {
        if (cls_[static_cast<size_t>(n)] == PointClass::interior) {
            interior_.push_back(n);
        } else if (cls_[static_cast<size_t>(n)] == PointClass::boundary) {
            boundary_.push_back(n);
            node_point(n, x);
            Point bp = domain.project_to_boundary(x);
            for (int i = 0; i < d; ++i)
                proj_[static_cast<size_t>(n) * static_cast<size_t>(d) + static_cast<size_t>(i)] =
                    bp[static_cast<size_t>(i)];
        }
    }
}

Point Grid::node_point(int idx) const {
    Point x(static_cast<size_t>(dim()));
    node_point(idx, x);
    return x;
}

void Grid::node_point(int idx, std::span<double> out) const {
    int d = dim();
    for (int i = 0; i < d; ++i) {
        int c = (idx / stride_[static_cast<size_t>(i)]) % res_[static_cast<size_t>(i)];
        out[static_cast<size_t>(i)] = lo_[static_cast<size_t>(i)] + c * h_[static_cast<size_t>(i)];
    }
}

void Grid::node_coords(int idx, std::span<int> out) const {
    int d = dim();
    for (int i = 0; i < d; ++i)
        out[static_cast<size_t>(i)] = (idx / stride_[static_cast<size_t>(i)]) % res_[static_cast<size_t>(i)];
}

int Grid::linear_index(std::span<const int> coords) const {
    int idx = 0;
    for (size_t i = 0; i < coords.size(); ++i) idx += coords[i] * stride_[i];
    return idx;
}

Point Grid::boundary_point(int idx) const {
    int d = dim();
    Point x(static_cast<size_t>(d));
    for (int i = 0; i < d; ++i)
        x[static_cast<size_t>(i)] =
            proj_[static_cast<size_t>(idx) * static_cast<size_t>(d) + static_cast<size_t>(i)];
    return x;
}

int Grid::nearest_node(std::span<const double> x) const {
    int d = dim();
    int idx = 0;
    for (int i = 0; i < d; ++i) {
        double t = (x[static_cast<size_t>(i)] - lo_[static_cast<size_t>(i)]) / h_[static_cast<size_t>(i)];
        int c = static_cast<int>(std::lround(t));
        if (c < 0) c = 0;
        if (c >= res_[static_cast<size_t>(i)]) c = res_[static_cast<size_t>(i)] - 1;
        idx += c * stride_[static_cast<size_t>(i)];
    }
    return idx;
}

bool Grid::same_layout(const Grid& other) const {
    return res_ == other.res_ && lo_ == other.lo_ && hi_ == other.hi_;
}

std::shared_ptr<const Grid> build_grid(const DomainGeometry& domain,
                                       const std::vector<int>& resolution) {
    return std::make_shared<Grid>(domain, resolution);
}

// ---------------------------------------------------------------------------

ValueField::ValueField(std::shared_ptr<const Grid> grid, std::vector<double> values,
                       bool boundary_consistent)
    : grid_(std::move(grid)), values_(std::move(values)), boundary_consistent_(boundary_consistent) {
    if (values_.size() != static_cast<size_t>(grid_->size()))
        throw std::invalid_argument("value field: size mismatch with grid");
}

ValueField::ValueField(std::shared_ptr<const Grid> grid, double value, bool boundary_consistent)
    : grid_(std::move(grid)),
      values_(static_cast<size_t>(grid_->size()), value),
      boundary_consistent_(boundary_consistent) {}

double ValueField::interpolate(std::span<const double> x) const {
    const Grid& g = *grid_;
    int d = g.dim();
    // cell index + fractional offset per axis
    int base = 0;
    double frac[8];
    int stride_d[8];
    int s = 1;
    for (int i = d - 1; i >= 0; --i) {
        stride_d[i] = s;
        s *= g.resolution()[static_cast<size_t>(i)];
    }
    for (int i = 0; i < d; ++i) {
        double lo = g.origin(i);
        double h = g.spacing(i);
        int n = g.resolution()[static_cast<size_t>(i)];
        double t = (x[static_cast<size_t>(i)] - lo) / h;
        if (t < -kGeoTol / h || t > (n - 1) + kGeoTol / h)
            throw std::out_of_range("interpolate: point outside the lattice bounding box");
        int c = static_cast<int>(std::floor(t));
        if (c < 0) c = 0;
        if (c > n - 2) c = n - 2;
        frac[i] = t - c;
        if (frac[i] < 0) frac[i] = 0;
        if (frac[i] > 1) frac[i] = 1;
        base += c * stride_d[i];
    }
    double acc = 0;
    int corners = 1 << d;
    for (int m = 0; m < corners; ++m) {
        double w = 1;
        int off = 0;
        for (int i = 0; i < d; ++i) {
            if ((m >> i) & 1) {
                w *= frac[i];
                off += stride_d[i];
            } else {
                w *= 1.0 - frac[i];
            }
        }
        if (w != 0.0) acc += w * values_[static_cast<size_t>(base + off)];
    }
    return acc;
}

double ValueField::max_abs() const {
    double m = 0;
    for (size_t i = 0; i < values_.size(); ++i) {
        if (grid_->node_class(static_cast<int>(i)) == PointClass::exterior) continue;
        m = std::fmax(m, std::fabs(values_[i]));
    }
    return m;
}

// ---------------------------------------------------------------------------

PolicyField::PolicyField(std::shared_ptr<const Grid> grid, std::shared_ptr<const ControlSet> actions,
                         std::vector<int> action_index)
    : grid_(std::move(grid)), actions_(std::move(actions)), idx_(std::move(action_index)) {
    if (idx_.size() != static_cast<size_t>(grid_->size()))
        throw std::invalid_argument("policy field: size mismatch with grid");
    for (int i : idx_)
        if (i < 0 || i >= actions_->grid_size())
            throw std::invalid_argument("policy field: action index outside A_h");
}

std::span<const double> PolicyField::action_at(std::span<const double> x) const {
    return actions_->action(idx_[static_cast<size_t>(grid_->nearest_node(x))]);
}

}  // namespace exitperron
