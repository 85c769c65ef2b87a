#include "exitperron/scheme.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace exitperron {

Scheme::Scheme(std::shared_ptr<const ControlProblem> problem, std::shared_ptr<const Grid> grid)
    : problem_(std::move(problem)), grid_(std::move(grid)) {
    const ControlProblem& p = *problem_;
    const Grid& g = *grid_;
    const ControlSet& A = *p.control_set;
    int d = p.dim_state;
    double beta = p.discount;

    const auto& interior = g.interior_nodes();
    int na = A.grid_size();
    rows_.resize(interior.size() * static_cast<size_t>(na));

    std::vector<double> x(static_cast<size_t>(d));
    std::vector<double> b(static_cast<size_t>(d));
    std::vector<double> a2(static_cast<size_t>(d) * static_cast<size_t>(d));
    std::vector<int> coords(static_cast<size_t>(d)), nb(static_cast<size_t>(d));

    // scratch for one row: axis neighbours then corner neighbours
    std::vector<int> row_nodes;
    std::vector<double> row_w;

    for (size_t ii = 0; ii < interior.size(); ++ii) {
        int node = interior[ii];
        g.node_point(node, x);
        g.node_coords(node, coords);
        for (int ai = 0; ai < na; ++ai) {
            auto a = A.action(ai);
            p.eval_drift(x, a, b);
            p.eval_diffusion_sq(x, a, a2);
            double f = p.eval_f(x, a);

            if (d > 2) {
                for (int r = 0; r < d; ++r)
                    for (int c = 0; c < d; ++c)
                        if (r != c && std::fabs(a2[static_cast<size_t>(r * d + c)]) > 1e-14)
                            throw MonotonicityError(
                                "cross diffusion terms are only supported for dim_state <= 2");
            }

            row_nodes.clear();
            row_w.clear();
            double outflow = 0;

            auto neighbor_index = [&](int axis, int off) {
                nb.assign(coords.begin(), coords.end());
                nb[static_cast<size_t>(axis)] += off;
                return g.linear_index(nb);
            };

            // axis terms: upwind drift + central second differences with
            // the cross-term mass removed from the diagonal
            for (int i = 0; i < d; ++i) {
                double hi = g.spacing(i);
                double cross = 0;
                for (int j = 0; j < d; ++j)
                    if (j != i)
                        cross += std::fabs(a2[static_cast<size_t>(i * d + j)]) * hi / g.spacing(j);
                double diag = a2[static_cast<size_t>(i * d + i)] - cross;
                if (diag < -1e-12) {
                    throw MonotonicityError(
                        "dominance h-check failed at interior node " + std::to_string(node) +
                        ", action " + std::to_string(ai) + ", axis " + std::to_string(i) +
                        ": deficit " + std::to_string(-diag));
                }
                if (diag < 0) diag = 0;
                double second = diag / (2.0 * hi * hi);
                double bi = b[static_cast<size_t>(i)];
                double up = second + (bi > 0 ? bi / hi : 0.0);
                double dn = second + (bi < 0 ? -bi / hi : 0.0);
                if (up > 0) {
                    row_nodes.push_back(neighbor_index(i, +1));
                    row_w.push_back(up);
                    outflow += up;
                }
                if (dn > 0) {
                    row_nodes.push_back(neighbor_index(i, -1));
                    row_w.push_back(dn);
                    outflow += dn;
                }
            }

            // 7-point split for cross terms (d == 2 only)
            if (d == 2) {
                double a12 = a2[1];
                if (std::fabs(a12) > 0) {
                    double w = std::fabs(a12) / (2.0 * g.spacing(0) * g.spacing(1));
                    int s = a12 > 0 ? +1 : -1;
                    nb[0] = coords[0] + 1;
                    nb[1] = coords[1] + s;
                    row_nodes.push_back(g.linear_index(nb));
                    row_w.push_back(w);
                    nb[0] = coords[0] - 1;
                    nb[1] = coords[1] - s;
                    row_nodes.push_back(g.linear_index(nb));
                    row_w.push_back(w);
                    outflow += 2 * w;
                }
            }

            double c = beta + outflow;
            SchemeRow& row = rows_[ii * static_cast<size_t>(na) + static_cast<size_t>(ai)];
            row.dt_eff = 1.0 / c;
            row.reward = f / c;
            row.first = static_cast<int>(neighbors_.size());
            row.count = static_cast<int>(row_nodes.size());
            for (size_t t = 0; t < row_nodes.size(); ++t) {
                neighbors_.push_back(row_nodes[t]);
                weights_.push_back(row_w[t] / c);
            }
        }
    }
}

double Scheme::row_value(const SchemeRow& r, std::span<const double> v) const {
    double acc = r.reward;
    for (int t = 0; t < r.count; ++t)
        acc += weights_[static_cast<size_t>(r.first + t)] *
               v[static_cast<size_t>(neighbors_[static_cast<size_t>(r.first + t)])];
    return acc;
}

double Scheme::row_residual(const SchemeRow& r, std::span<const double> v, int node) const {
    double acc = v[static_cast<size_t>(node)];
    for (int t = 0; t < r.count; ++t)
        acc -= weights_[static_cast<size_t>(r.first + t)] *
               v[static_cast<size_t>(neighbors_[static_cast<size_t>(r.first + t)])];
    return acc / r.dt_eff - r.reward / r.dt_eff;
}

std::shared_ptr<const Scheme> discretize(std::shared_ptr<const ControlProblem> problem,
                                         std::shared_ptr<const Grid> grid) {
    return std::make_shared<Scheme>(std::move(problem), std::move(grid));
}

// ---------------------------------------------------------------------------

namespace {

/// Exact policy evaluation for 1-d grids: the interior nodes are
/// consecutive, each row touches node±1 only, so (I − P_π)v = r is
/// tridiagonal and the Thomas recursion applies.
void evaluate_policy_1d(const Scheme& scheme, const std::vector<int>& policy,
                        std::vector<double>& v) {
    const Grid& g = scheme.grid();
    const auto& interior = g.interior_nodes();
    size_t n = interior.size();
    std::vector<double> sub(n, 0.0), diag(n, 1.0), sup(n, 0.0), rhs(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        int node = interior[i];
        const SchemeRow& row = scheme.row(static_cast<int>(i), policy[i]);
        rhs[i] = row.reward;
        auto nbs = scheme.row_neighbors(row);
        auto ws = scheme.row_weights(row);
        for (size_t t = 0; t < nbs.size(); ++t) {
            int nb = nbs[t];
            if (nb == node - 1) {
                if (i > 0 && interior[i - 1] == nb)
                    sub[i] = -ws[t];
                else
                    rhs[i] += ws[t] * v[static_cast<size_t>(nb)];  // boundary neighbour
            } else if (nb == node + 1) {
                if (i + 1 < n && interior[i + 1] == nb)
                    sup[i] = -ws[t];
                else
                    rhs[i] += ws[t] * v[static_cast<size_t>(nb)];
            } else {
                rhs[i] += ws[t] * v[static_cast<size_t>(nb)];
            }
        }
    }
    // Thomas forward sweep; diag is strictly dominant (weights sum < 1)
    for (size_t i = 1; i < n; ++i) {
        double m = sub[i] / diag[i - 1];
        diag[i] -= m * sup[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    std::vector<double> sol(n);
    sol[n - 1] = rhs[n - 1] / diag[n - 1];
    for (size_t i = n - 1; i-- > 0;) sol[i] = (rhs[i] - sup[i] * sol[i + 1]) / diag[i];
    for (size_t i = 0; i < n; ++i) v[static_cast<size_t>(interior[i])] = sol[i];
}

/// Damped fixed-point sweeps in deterministic red/black order. Rows are
/// contractions (factor 1/(1+β·dt_eff)), so this converges for any
/// sweep order; red/black is the documented deterministic choice.
long long evaluate_policy_sweeps(const Scheme& scheme, const std::vector<int>& policy,
                                 std::vector<double>& v, double tol, long long max_sweeps) {
    const Grid& g = scheme.grid();
    const auto& interior = g.interior_nodes();
    size_t n = interior.size();
    int d = g.dim();
    std::vector<int> coords(static_cast<size_t>(d));
    std::vector<char> color(n);
    for (size_t i = 0; i < n; ++i) {
        g.node_coords(interior[i], coords);
        int s = 0;
        for (int c : coords) s += c;
        color[i] = static_cast<char>(s & 1);
    }
    long long sweeps = 0;
    for (; sweeps < max_sweeps; ++sweeps) {
        double change = 0;
        for (int phase = 0; phase < 2; ++phase) {
            for (size_t i = 0; i < n; ++i) {
                if (color[i] != phase) continue;
                int node = interior[i];
                double nv = scheme.row_value(scheme.row(static_cast<int>(i), policy[i]), v);
                change = std::fmax(change, std::fabs(nv - v[static_cast<size_t>(node)]));
                v[static_cast<size_t>(node)] = nv;
            }
        }
        if (change < tol) {
            ++sweeps;
            break;
        }
    }
    return sweeps;
}

}  // namespace

SolveResult solve_policy_iteration(const Scheme& scheme, double tol, int max_outer) {
    if (!(tol > 0)) throw std::invalid_argument("solve: tol must be positive");
    const Grid& g = scheme.grid();
    const ControlProblem& p = scheme.problem();
    auto grid_ptr = scheme.grid_ptr();
    int total = g.size();
    int na = scheme.n_actions();
    const auto& interior = g.interior_nodes();

    std::vector<double> v(static_cast<size_t>(total), 0.0);
    // Dirichlet data at boundary nodes; exterior nodes carry g at their
    // projection so interpolation near curved boundaries stays finite.
    for (int n = 0; n < total; ++n) {
        if (g.node_class(n) == PointClass::interior) continue;
        Point bp = g.node_class(n) == PointClass::boundary
                       ? g.boundary_point(n)
                       : p.domain->project_to_boundary(g.node_point(n));
        v[static_cast<size_t>(n)] = p.eval_g(bp);
    }

    SolveStats stats;
    std::vector<int> policy(interior.size(), 0);

    if (!interior.empty()) {
        std::vector<double> prev_v;
        for (int outer = 0; outer < max_outer; ++outer) {
            // improvement: per-node argmax, ties to the first maximizer
            for (size_t i = 0; i < interior.size(); ++i) {
                int best = 0;
                double best_v = scheme.row_value(scheme.row(static_cast<int>(i), 0), v);
                for (int ai = 1; ai < na; ++ai) {
                    double q = scheme.row_value(scheme.row(static_cast<int>(i), ai), v);
                    if (q > best_v) {
                        best_v = q;
                        best = ai;
                    }
                }
                policy[i] = best;
            }
            prev_v = v;
            if (g.dim() == 1) {
                evaluate_policy_1d(scheme, policy, v);
            } else {
                stats.evaluation_sweeps +=
                    evaluate_policy_sweeps(scheme, policy, v, tol / 10.0, 2'000'000);
            }
            double change = 0;
            for (int node : interior)
                change = std::fmax(change,
                                   std::fabs(v[static_cast<size_t>(node)] - prev_v[static_cast<size_t>(node)]));
            stats.final_change = change;
            ++stats.outer_iterations;
            if (change < tol) {
                stats.converged = true;
                break;
            }
        }
    } else {
        stats.converged = true;  // no unknowns: v = g, zero iterations
    }

    ValueField field(grid_ptr, std::move(v), true);

    // fill the policy at non-interior nodes from the nearest interior
    // node so Markov lookups are total
    std::vector<int> full_policy(static_cast<size_t>(total), 0);
    for (size_t i = 0; i < interior.size(); ++i)
        full_policy[static_cast<size_t>(interior[i])] = policy[i];
    if (!interior.empty()) {
        // breadth-first dilation from the interior in deterministic order
        std::vector<char> assigned(static_cast<size_t>(total), 0);
        for (int n : interior) assigned[static_cast<size_t>(n)] = 1;
        std::vector<int> frontier = interior;
        int d = g.dim();
        std::vector<int> coords(static_cast<size_t>(d)), nbc(static_cast<size_t>(d));
        while (!frontier.empty()) {
            std::vector<int> next;
            for (int n : frontier) {
                g.node_coords(n, coords);
                for (int axis = 0; axis < d; ++axis) {
                    for (int off = -1; off <= 1; off += 2) {
                        nbc.assign(coords.begin(), coords.end());
                        nbc[static_cast<size_t>(axis)] += off;
                        if (nbc[static_cast<size_t>(axis)] < 0 ||
                            nbc[static_cast<size_t>(axis)] >= g.resolution()[static_cast<size_t>(axis)])
                            continue;
                        int m = g.linear_index(nbc);
                        if (assigned[static_cast<size_t>(m)]) continue;
                        assigned[static_cast<size_t>(m)] = 1;
                        full_policy[static_cast<size_t>(m)] = full_policy[static_cast<size_t>(n)];
                        next.push_back(m);
                    }
                }
            }
            frontier = std::move(next);
        }
    }
    auto pol = std::make_shared<PolicyField>(
        grid_ptr, std::shared_ptr<const ControlSet>(scheme.problem().control_set), std::move(full_policy));

    ResidualReport rr = bellman_residual(scheme, field);
    stats.bellman_residual_sup = rr.sup;
    stats.bellman_residual_mean = rr.mean;

    return SolveResult{std::move(field), pol, stats};
}

ResidualReport bellman_residual(const Scheme& scheme, const ValueField& v) {
    if (!v.boundary_consistent())
        throw std::invalid_argument("bellman_residual: field must be boundary-consistent");
    const auto& interior = scheme.grid().interior_nodes();
    ResidualReport rep;
    rep.residual.resize(interior.size());
    double sum = 0;
    for (size_t i = 0; i < interior.size(); ++i) {
        int node = interior[i];
        // βv − H = min over actions of the per-action residual
        double r = scheme.row_residual(scheme.row(static_cast<int>(i), 0), v.values(), node);
        for (int ai = 1; ai < scheme.n_actions(); ++ai)
            r = std::fmin(r, scheme.row_residual(scheme.row(static_cast<int>(i), ai), v.values(), node));
        rep.residual[i] = r;
        rep.sup = std::fmax(rep.sup, std::fabs(r));
        sum += std::fabs(r);
    }
    rep.mean = interior.empty() ? 0.0 : sum / static_cast<double>(interior.size());
    return rep;
}

RefineTable refine_study(std::shared_ptr<const ControlProblem> problem,
                         const std::vector<int>& resolutions, double tol, int max_outer) {
    if (resolutions.size() < 2) return RefineTable{};  // nothing to compare
    for (size_t i = 1; i < resolutions.size(); ++i) {
        if (resolutions[i] <= resolutions[i - 1] ||
            (resolutions[i] - 1) % (resolutions[i - 1] - 1) != 0)
            throw std::invalid_argument("refine_study: resolutions must be increasing and nested");
    }

    RefineTable table;
    std::vector<double> prev_values;
    std::shared_ptr<const Grid> prev_grid;
    double prev_diff = 0;
    for (size_t ri = 0; ri < resolutions.size(); ++ri) {
        int res = resolutions[ri];
        std::vector<int> per_axis(static_cast<size_t>(problem->dim_state), res);
        auto grid = build_grid(*problem->domain, per_axis);
        auto scheme = discretize(problem, grid);
        SolveResult sol = solve_policy_iteration(*scheme, tol, max_outer);
        if (prev_grid) {
            int stride = (res - 1) / (resolutions[ri - 1] - 1);
            int d = grid->dim();
            std::vector<int> cc(static_cast<size_t>(d)), fc(static_cast<size_t>(d));
            double sup = 0;
            for (int n = 0; n < prev_grid->size(); ++n) {
                if (prev_grid->node_class(n) == PointClass::exterior) continue;
                prev_grid->node_coords(n, cc);
                for (int i = 0; i < d; ++i) fc[static_cast<size_t>(i)] = cc[static_cast<size_t>(i)] * stride;
                int fn = grid->linear_index(fc);
                if (grid->node_class(fn) == PointClass::exterior) continue;
                sup = std::fmax(sup, std::fabs(prev_values[static_cast<size_t>(n)] -
                                               sol.value.value(fn)));
            }
            RefineEntry e;
            e.resolution = res;
            e.h = grid->spacing(0);
            e.diff_sup = sup;
            if (!table.entries.empty() && sup >= prev_diff) table.monotone = false;
            prev_diff = sup;
            table.entries.push_back(e);
        }
        prev_grid = grid;
        prev_values.assign(sol.value.values().begin(), sol.value.values().end());
    }
    return table;
}

}  // namespace exitperron
