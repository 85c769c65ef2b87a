#pragma once

#include <memory>
#include <string>
#include <vector>

#include "exitperron/grid.hpp"
#include "exitperron/problem.hpp"

namespace exitperron {

/// One substochastic row of the discrete operator at (interior node,
/// action): the node value satisfies
///     v(x) = reward + Σ weight_i · v(neighbor_i)
/// at the fixed point, with weight_i ≥ 0 and Σ weight_i = 1/(1+β·dt_eff)
/// < 1. Nonnegative weights are the monotonicity certificate.
struct SchemeRow {
    double reward = 0;   // f(x,a)·dt_eff
    double dt_eff = 0;   // 1/(β + outflow)
    int first = 0;       // index into Scheme::neighbors/weights
    int count = 0;
};

/// Thrown when the dominance h-check fails (cross terms too strong for
/// the lattice spacing): the offending node/action and deficit are in
/// the message.
struct MonotonicityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Upwind/central Kushner–Dupuis-style discretization of
/// βv − sup_a [L^a v + f] on the interior nodes.
class Scheme {
public:
    Scheme(std::shared_ptr<const ControlProblem> problem, std::shared_ptr<const Grid> grid);

    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
    const ControlProblem& problem() const { return *problem_; }
    int n_interior() const { return static_cast<int>(grid_->interior_nodes().size()); }
    int n_actions() const { return problem_->control_set->grid_size(); }

    const SchemeRow& row(int interior_idx, int action_idx) const {
        return rows_[static_cast<size_t>(interior_idx) * static_cast<size_t>(n_actions()) +
                     static_cast<size_t>(action_idx)];
    }
    std::span<const int> row_neighbors(const SchemeRow& r) const {
        return {neighbors_.data() + r.first, static_cast<size_t>(r.count)};
    }
    std::span<const double> row_weights(const SchemeRow& r) const {
        return {weights_.data() + r.first, static_cast<size_t>(r.count)};
    }

    /// reward + Σ w·v(neighbor): the Bellman operator applied at one row.
    double row_value(const SchemeRow& r, std::span<const double> node_values) const;

    /// (v(x) − Σ w·v_n)/dt_eff − f: discrete (βv − L^a v − f)(x).
    double row_residual(const SchemeRow& r, std::span<const double> node_values, int node) const;

private:
    std::shared_ptr<const ControlProblem> problem_;
    std::shared_ptr<const Grid> grid_;
    std::vector<SchemeRow> rows_;      // n_interior × n_actions
    std::vector<int> neighbors_;
    std::vector<double> weights_;
};

std::shared_ptr<const Scheme> discretize(std::shared_ptr<const ControlProblem> problem,
                                         std::shared_ptr<const Grid> grid);

struct SolveStats {
    bool converged = false;
    int outer_iterations = 0;
    long long evaluation_sweeps = 0;  // inner iterations (0 for direct solves)
    double final_change = 0;          // sup-norm change of the last outer step
    double bellman_residual_sup = 0;
    double bellman_residual_mean = 0;
};

struct SolveResult {
    ValueField value;
    std::shared_ptr<const PolicyField> policy;
    SolveStats stats;
};

/// Howard iteration: per-node argmax improvement (ties by A_h order)
/// alternating with policy evaluation — an exact tridiagonal solve in
/// one dimension, damped red/black sweeps to tol/10 otherwise. Boundary
/// nodes are pinned to g exactly; exterior nodes carry g at their
/// boundary projection so interpolation stays finite.
SolveResult solve_policy_iteration(const Scheme& scheme, double tol, int max_outer);

struct ResidualReport {
    std::vector<double> residual;  // per interior node, in interior order
    double sup = 0;
    double mean = 0;
};

/// βv̂ − H(x, Dv̂, D²v̂) at interior nodes with the scheme's own stencils.
/// Requires a boundary-consistent field.
ResidualReport bellman_residual(const Scheme& scheme, const ValueField& v);

struct RefineEntry {
    int resolution = 0;   // finer grid of the pair
    double h = 0;         // finer spacing (axis 0)
    double diff_sup = 0;  // ‖v_h − v_{h/2}‖∞ on common nodes
};

struct RefineTable {
    std::vector<RefineEntry> entries;
    bool monotone = true;  // strictly decreasing differences
};

/// Successive sup-norm differences between solves on nested resolutions.
RefineTable refine_study(std::shared_ptr<const ControlProblem> problem,
                         const std::vector<int>& resolutions, double tol, int max_outer);

}  // namespace exitperron
