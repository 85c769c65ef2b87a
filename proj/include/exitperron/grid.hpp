#pragma once

#include <memory>
#include <span>
#include <vector>

#include "exitperron/geometry.hpp"
#include "exitperron/problem.hpp"

namespace exitperron {

/// Rectangular lattice over the bounding box of Ḡ with per-node
/// classification. Exterior nodes that sit in the stencil neighbourhood
/// of an interior node are promoted to boundary nodes so every stencil
/// neighbour of an unknown carries Dirichlet data; each boundary node
/// stores its projection onto ∂G, where g is evaluated.
class Grid {
public:
    Grid(const DomainGeometry& domain, std::vector<int> resolution);

    int dim() const { return static_cast<int>(res_.size()); }
    int size() const { return total_; }
    const std::vector<int>& resolution() const { return res_; }
    double spacing(int axis) const { return h_[static_cast<size_t>(axis)]; }
    double origin(int axis) const { return lo_[static_cast<size_t>(axis)]; }

    PointClass node_class(int idx) const { return cls_[static_cast<size_t>(idx)]; }
    Point node_point(int idx) const;
    void node_point(int idx, std::span<double> out) const;
    /// Multi-index of a linear node id (row-major, last axis fastest).
    void node_coords(int idx, std::span<int> out) const;
    int linear_index(std::span<const int> coords) const;

    /// Projection of a boundary node onto ∂G (the node itself when it
    /// already lies on the boundary).
    Point boundary_point(int idx) const;

    const std::vector<int>& interior_nodes() const { return interior_; }
    const std::vector<int>& boundary_nodes() const { return boundary_; }

    /// Nearest node to x (clamped to the lattice).
    int nearest_node(std::span<const double> x) const;

    bool same_layout(const Grid& other) const;

private:
    std::vector<int> res_;
    std::vector<double> lo_, hi_, h_;
    std::vector<int> stride_;
    int total_ = 0;
    std::vector<PointClass> cls_;
    std::vector<double> proj_;  // total × dim, filled for boundary nodes
    std::vector<int> interior_, boundary_;
};

/// build_grid per the module contract: resolution >= 3 per axis.
std::shared_ptr<const Grid> build_grid(const DomainGeometry& domain,
                                       const std::vector<int>& resolution);

/// Grid-sampled scalar function on Ḡ with multilinear interpolation.
/// boundary_consistent marks fields whose boundary-node values equal g.
class ValueField {
public:
    ValueField() = default;
    ValueField(std::shared_ptr<const Grid> grid, std::vector<double> values,
               bool boundary_consistent);
    /// Constant field.
    ValueField(std::shared_ptr<const Grid> grid, double value, bool boundary_consistent);

    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
    std::span<const double> values() const { return values_; }
    double value(int idx) const { return values_[static_cast<size_t>(idx)]; }
    void set_value(int idx, double v) { values_[static_cast<size_t>(idx)] = v; }
    bool boundary_consistent() const { return boundary_consistent_; }
    void set_boundary_consistent(bool b) { boundary_consistent_ = b; }

    /// Multilinear interpolation; exact at nodes. Throws
    /// std::out_of_range if x falls outside the lattice bounding box
    /// (beyond kGeoTol).
    double interpolate(std::span<const double> x) const;

    double max_abs() const;

private:
    std::shared_ptr<const Grid> grid_;
    std::vector<double> values_;
    bool boundary_consistent_ = false;
};

/// Per-node action indices into A_h. Interior nodes carry the solver's
/// argmax; remaining nodes are filled from their nearest interior
/// neighbour so nearest-node lookups are total.
class PolicyField {
public:
    PolicyField(std::shared_ptr<const Grid> grid, std::shared_ptr<const ControlSet> actions,
                std::vector<int> action_index);

    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
    const ControlSet& actions() const { return *actions_; }
    int action_index(int node) const { return idx_[static_cast<size_t>(node)]; }
    std::span<const int> action_indices() const { return idx_; }

    /// Action at the node nearest to x.
    std::span<const double> action_at(std::span<const double> x) const;

private:
    std::shared_ptr<const Grid> grid_;
    std::shared_ptr<const ControlSet> actions_;
    std::vector<int> idx_;
};

}  // namespace exitperron
