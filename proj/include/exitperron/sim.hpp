#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exitperron/grid.hpp"
#include "exitperron/problem.hpp"

namespace exitperron {

/// Nonfinite state or failed coefficient evaluation during stepping;
/// message carries path index and step.
struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Worker count for path-parallel loops: min(EXITPERRON_THREADS,
/// hardware_concurrency), at least 1. Results never depend on it.
int worker_count();

/// Per-path start pair (t0, ξ). The {τ=∞} branch of a randomized
/// initial condition is never simulated; paths always materialize from
/// a finite t0.
class RandomizedStart {
public:
    static RandomizedStart fixed(Point x, double t0 = 0.0);
    /// Uniform over the interior nodes of `grid` (t0 = 0).
    static RandomizedStart uniform_interior(std::shared_ptr<const Grid> grid);
    static RandomizedStart explicit_list(std::vector<std::pair<double, Point>> starts);

    /// Start pair for path `path_index`; `pick` must be a uniform draw
    /// in [0,1) from the path's own stream (ignored unless sampling).
    std::pair<double, Point> realize(int path_index, double pick) const;

    /// Largest possible t0 (bounds the T_max precondition).
    double max_t0() const;

    std::string describe() const;

private:
    enum class Kind { fixed, uniform_nodes, list };
    Kind kind_ = Kind::fixed;
    double t0_ = 0;
    Point point_;
    std::shared_ptr<const Grid> grid_;
    std::vector<std::pair<double, Point>> list_;
};

/// How the control process is produced along a path.
struct ControlSpec {
    enum class Kind { constant, markov, concatenated };
    Kind kind = Kind::constant;

    std::vector<double> constant_action;

    std::shared_ptr<const PolicyField> policy;  // held constant over each step,
                                                // nearest-node lookup

    // concatenated: `first` until the path hits ∂B_radius(center)
    // (truncated at exit), then `second`; switches exactly once
    std::shared_ptr<const ControlSpec> first, second;
    Point switch_center;
    double switch_radius = 0;

    static ControlSpec constant(std::vector<double> action);
    static ControlSpec markov(std::shared_ptr<const PolicyField> policy);
    static ControlSpec concatenated(ControlSpec first_spec, Point center, double radius,
                                    ControlSpec second_spec);

    /// All referenced actions lie in the problem's control box.
    void check_actions(const ControlSet& box) const;

    std::string describe() const;
};

/// One simulated path. States and the cumulative discounted running
/// integral are stored per step when the batch records trajectories;
/// summaries are always present.
struct PathData {
    double t0 = 0;
    Point start;
    bool censored = false;
    int exit_index = 0;            // steps from t0 (also last stored index)
    double exit_time = 0;          // t0 + exit_index·dt (censor time if censored)
    double discounted_running = 0; // ∫ e^{-βs} f ds up to exit_time, trapezoidal
    Point final_state;
    std::vector<double> states;    // (exit_index+1)×d when recorded
    std::vector<double> cumint;    // exit_index+1 when recorded
};

class TrajectoryBatch {
public:
    TrajectoryBatch(uint64_t seed, double dt, int dim, std::vector<PathData> paths)
        : seed_(seed), dt_(dt), dim_(dim), paths_(std::move(paths)) {}

    uint64_t seed() const { return seed_; }
    double dt() const { return dt_; }
    int dim() const { return dim_; }
    int n_paths() const { return static_cast<int>(paths_.size()); }
    const PathData& path(int i) const { return paths_[static_cast<size_t>(i)]; }
    const std::vector<PathData>& paths() const { return paths_; }
    bool has_trajectories() const {
        return paths_.empty() || !paths_.front().cumint.empty();
    }

    std::span<const double> state_at(int path, int step) const {
        const PathData& p = paths_[static_cast<size_t>(path)];
        return {p.states.data() + static_cast<size_t>(step) * static_cast<size_t>(dim_),
                static_cast<size_t>(dim_)};
    }

private:
    uint64_t seed_;
    double dt_;
    int dim_;
    std::vector<PathData> paths_;
};

/// Euler–Maruyama with discrete-time exit detection (no bridge
/// correction; the O(√Δt) outward bias is absorbed by callers'
/// tolerances). Each path consumes the stream keyed on (seed, path
/// index), so batches are bit-identical for a given seed regardless of
/// the worker count.
TrajectoryBatch simulate(const ControlProblem& p, const RandomizedStart& start,
                         const ControlSpec& ctrl, double dt, int n_paths, double t_max,
                         uint64_t seed, bool record_trajectories = true);

struct ValueEstimate {
    double mean = 0;
    double se = 0;
    int n = 0;
    double censored_fraction = 0;
    double dt = 0;
    double ci99_lo = 0, ci99_hi = 0;
    /// e^{-β·T_max}·‖g‖∞ — bound on the payoff mass censoring can drop.
    double truncation_bound = 0;
};

/// Monte Carlo estimate of J(x, α): discounted running reward plus
/// discounted boundary payoff at the (projected) exit state; censored
/// paths contribute their running integral only.
ValueEstimate estimate_value(const ControlProblem& p, const Point& x, const ControlSpec& ctrl,
                             double dt, int n_paths, double t_max, uint64_t seed);

/// Same estimator over an already-simulated batch.
ValueEstimate estimate_from_batch(const ControlProblem& p, const TrajectoryBatch& batch,
                                  double t_max);

/// The stopping rules the artifact can evaluate on a simulated path.
struct StoppingRule {
    enum class Kind { at_start, fixed_time, hit_ball, at_exit };
    Kind kind = Kind::at_exit;
    double t_star = 0;   // fixed_time: ρ = t* ∧ σ (∨ τ)
    Point center;        // hit_ball: entry into {|x-c| <= radius} ∧ σ
    double radius = 0;

    static StoppingRule at_start();
    static StoppingRule fixed_time(double t);
    static StoppingRule hit_ball(Point c, double r);
    static StoppingRule at_exit();

    std::string label() const;
};

/// Z evaluated at τ and at ρ for one path. Z_τ = e^{-βτ}u(ξ) is exact;
/// Z_ρ combines the trapezoidal running integral with interpolated u
/// (g at the projected exit state when u is boundary-consistent).
struct ZPair {
    double z_tau = 0;
    double z_rho = 0;
    double rho_time = 0;
    bool censored = false;  // rule undecidable on a censored path
};

std::vector<ZPair> z_process(const ControlProblem& p, const ValueField& u,
                             const TrajectoryBatch& batch, const StoppingRule& rule);

/// Sampled sup of |g| on ∂G (used for censoring bounds).
double g_sup_sampled(const ControlProblem& p, int n = 256, uint64_t seed = 0xB0A2ULL);

}  // namespace exitperron
