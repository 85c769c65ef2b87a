#include "exitperron/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "exitperron/rng.hpp"

namespace exitperron {

int worker_count() {
    if (const char* env = std::getenv("EXITPERRON_THREADS")) {
        long v = std::atol(env);
        if (v >= 1) return static_cast<int>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// ---------------------------------------------------------------------------

RandomizedStart RandomizedStart::fixed(Point x, double t0) {
    if (!(t0 >= 0)) throw std::invalid_argument("start: t0 must be >= 0");
    RandomizedStart s;
    s.kind_ = Kind::fixed;
    s.point_ = std::move(x);
    s.t0_ = t0;
    return s;
}

RandomizedStart RandomizedStart::uniform_interior(std::shared_ptr<const Grid> grid) {
    if (grid->interior_nodes().empty())
        throw std::invalid_argument("start: grid has no interior nodes to sample");
    RandomizedStart s;
    s.kind_ = Kind::uniform_nodes;
    s.grid_ = std::move(grid);
    return s;
}

RandomizedStart RandomizedStart::explicit_list(std::vector<std::pair<double, Point>> starts) {
    if (starts.empty()) throw std::invalid_argument("start: empty explicit list");
    for (const auto& [t0, x] : starts)
        if (!(t0 >= 0)) throw std::invalid_argument("start: t0 must be >= 0");
    RandomizedStart s;
    s.kind_ = Kind::list;
    s.list_ = std::move(starts);
    return s;
}

std::pair<double, Point> RandomizedStart::realize(int path_index, double pick) const {
    switch (kind_) {
        case Kind::fixed:
            return {t0_, point_};
        case Kind::uniform_nodes: {
            const auto& nodes = grid_->interior_nodes();
            auto i = static_cast<size_t>(pick * static_cast<double>(nodes.size()));
            if (i >= nodes.size()) i = nodes.size() - 1;
            return {0.0, grid_->node_point(nodes[i])};
        }
        case Kind::list:
            return list_[static_cast<size_t>(path_index) % list_.size()];
    }
    return {0.0, {}};
}

double RandomizedStart::max_t0() const {
    switch (kind_) {
        case Kind::fixed:
            return t0_;
        case Kind::uniform_nodes:
            return 0.0;
        case Kind::list: {
            double m = 0;
            for (const auto& [t0, x] : list_) m = std::fmax(m, t0);
            return m;
        }
    }
    return 0.0;
}

std::string RandomizedStart::describe() const {
    switch (kind_) {
        case Kind::fixed: {
            std::string s = "fixed(t0=" + std::to_string(t0_) + ", x=(";
            for (size_t i = 0; i < point_.size(); ++i) {
                if (i) s += ",";
                s += std::to_string(point_[i]);
            }
            return s + ")); tau=inf branch excluded";
        }
        case Kind::uniform_nodes:
            return "uniform over interior grid nodes; tau=inf branch excluded";
        case Kind::list:
            return "explicit list of " + std::to_string(list_.size()) +
                   " start pairs; tau=inf branch excluded";
    }
    return "";
}

// ---------------------------------------------------------------------------

ControlSpec ControlSpec::constant(std::vector<double> action) {
    ControlSpec c;
    c.kind = Kind::constant;
    c.constant_action = std::move(action);
    return c;
}

ControlSpec ControlSpec::markov(std::shared_ptr<const PolicyField> policy) {
    ControlSpec c;
    c.kind = Kind::markov;
    c.policy = std::move(policy);
    return c;
}

ControlSpec ControlSpec::concatenated(ControlSpec first_spec, Point center, double radius,
                                      ControlSpec second_spec) {
    if (!(radius > 0)) throw std::invalid_argument("control: switch radius must be positive");
    ControlSpec c;
    c.kind = Kind::concatenated;
    c.first = std::make_shared<ControlSpec>(std::move(first_spec));
    c.second = std::make_shared<ControlSpec>(std::move(second_spec));
    c.switch_center = std::move(center);
    c.switch_radius = radius;
    return c;
}

void ControlSpec::check_actions(const ControlSet& box) const {
    switch (kind) {
        case Kind::constant:
            if (!box.contains(constant_action))
                throw std::invalid_argument("control: constant action outside the control box");
            return;
        case Kind::markov:
            return;  // policy fields index into A_h by construction
        case Kind::concatenated:
            first->check_actions(box);
            second->check_actions(box);
            return;
    }
}

std::string ControlSpec::describe() const {
    switch (kind) {
        case Kind::constant: {
            std::string s = "constant(";
            for (size_t i = 0; i < constant_action.size(); ++i) {
                if (i) s += ",";
                s += std::to_string(constant_action[i]);
            }
            return s + ")";
        }
        case Kind::markov:
            return "markov policy";
        case Kind::concatenated:
            return "concat[" + first->describe() + " until hit r=" +
                   std::to_string(switch_radius) + ", then " + second->describe() + "]";
    }
    return "";
}

namespace {

/// Runtime state of a ControlSpec along one path; switches exactly once
/// per concatenation level.
class Controller {
public:
    explicit Controller(const ControlSpec& spec) : spec_(&spec) {
        if (spec_->kind == ControlSpec::Kind::concatenated)
            inner_ = std::make_unique<Controller>(*spec_->first);
    }

    std::span<const double> action(std::span<const double> x) {
        switch (spec_->kind) {
            case ControlSpec::Kind::constant:
                return spec_->constant_action;
            case ControlSpec::Kind::markov:
                return spec_->policy->action_at(x);
            case ControlSpec::Kind::concatenated: {
                if (!switched_) {
                    double d2 = 0;
                    for (size_t i = 0; i < x.size(); ++i) {
                        double t = x[i] - spec_->switch_center[i];
                        d2 += t * t;
                    }
                    if (d2 >= spec_->switch_radius * spec_->switch_radius) {
                        switched_ = true;
                        inner_ = std::make_unique<Controller>(*spec_->second);
                    }
                }
                return inner_->action(x);
            }
        }
        return {};
    }

private:
    const ControlSpec* spec_;
    std::unique_ptr<Controller> inner_;
    bool switched_ = false;
};

/// One Euler–Maruyama path. The caller owns the stream so start
/// sampling and noise share it deterministically.
PathData run_path(const ControlProblem& p, double t0, const Point& xi, const ControlSpec& ctrl,
                  double dt, double t_max, SplitStream& rng, bool record, int path_index) {
    const DomainGeometry& dom = *p.domain;
    int d = p.dim_state, m = p.dim_noise;
    double beta = p.discount;
    double sqdt = std::sqrt(dt);

    PathData out;
    out.t0 = t0;
    out.start = xi;

    Point x = xi;
    if (dom.classify(x) == PointClass::exterior)
        throw std::invalid_argument("simulate: start point outside the closed domain");

    long long max_steps = static_cast<long long>(std::ceil((t_max - t0) / dt - 1e-9));
    if (max_steps < 0) max_steps = 0;

    Controller controller(ctrl);
    std::vector<double> b(static_cast<size_t>(d));
    std::vector<double> sig(static_cast<size_t>(d) * static_cast<size_t>(m));
    Point x_next(static_cast<size_t>(d));
    double cum = 0;
    // running discount factor; the multiplicative chain stays within
    // ~k·ulp of exp(-β(t0+k·dt)), far below the O(√Δt) scheme error
    double disc = std::exp(-beta * t0);
    const double decay = std::exp(-beta * dt);

    if (record) {
        out.states.insert(out.states.end(), x.begin(), x.end());
        out.cumint.push_back(0.0);
    }

    int k = 0;
    bool exited = dom.classify(x) != PointClass::interior;  // boundary start: σ = t0
    while (!exited && k < max_steps) {
        auto a = controller.action(x);
        double f0, f1;
        try {
            f0 = p.eval_f(x, a);
            p.eval_drift(x, a, b);
            p.eval_diffusion(x, a, sig);
        } catch (const EvalError& e) {
            throw SimError("path " + std::to_string(path_index) + " step " + std::to_string(k) +
                           ": " + e.what());
        }
        for (int i = 0; i < d; ++i) x_next[static_cast<size_t>(i)] = x[static_cast<size_t>(i)] + b[static_cast<size_t>(i)] * dt;
        for (int j = 0; j < m; ++j) {
            double z = rng.next_normal();
            double w = sqdt * z;
            for (int i = 0; i < d; ++i)
                x_next[static_cast<size_t>(i)] += sig[static_cast<size_t>(i * m + j)] * w;
        }
        try {
            f1 = p.eval_f(x_next, a);
        } catch (const EvalError& e) {
            throw SimError("path " + std::to_string(path_index) + " step " + std::to_string(k) +
                           ": " + e.what());
        }
        double disc_next = disc * decay;
        cum += 0.5 * dt * (disc * f0 + disc_next * f1);
        disc = disc_next;
        for (int i = 0; i < d; ++i) {
            if (!std::isfinite(x_next[static_cast<size_t>(i)]))
                throw SimError("path " + std::to_string(path_index) + " step " + std::to_string(k) +
                               ": nonfinite state");
        }
        x = x_next;
        ++k;
        if (record) {
            out.states.insert(out.states.end(), x.begin(), x.end());
            out.cumint.push_back(cum);
        }
        exited = dom.classify(x) != PointClass::interior;
    }

    out.exit_index = k;
    out.exit_time = t0 + k * dt;
    out.censored = !exited;
    out.discounted_running = cum;
    out.final_state = x;
    return out;
}

/// Evenly partitions paths over workers; each path's stream is keyed on
/// (seed, path index), so the partition does not affect results.
std::vector<PathData> run_batch(const ControlProblem& p, const RandomizedStart& start,
                                const ControlSpec& ctrl, double dt, int n_paths, double t_max,
                                uint64_t seed, bool record) {
    if (!(dt > 0)) throw std::invalid_argument("simulate: dt must be positive");
    if (n_paths < 1) throw std::invalid_argument("simulate: n_paths must be >= 1");
    if (!(t_max >= start.max_t0()))
        throw std::invalid_argument("simulate: t_max must cover the largest start time");
    ctrl.check_actions(*p.control_set);

    std::vector<PathData> paths(static_cast<size_t>(n_paths));
    std::exception_ptr error;
    std::mutex error_mu;

    auto work = [&](int lo, int hi) {
        try {
            for (int i = lo; i < hi; ++i) {
                SplitStream rng(seed, static_cast<uint64_t>(i));
                double pick = rng.next_uniform_pos() - 0x1.0p-53;  // [0,1)
                auto [t0, xi] = start.realize(i, pick);
                paths[static_cast<size_t>(i)] = run_path(p, t0, xi, ctrl, dt, t_max, rng, record, i);
            }
        } catch (...) {
            std::lock_guard<std::mutex> lk(error_mu);
            if (!error) error = std::current_exception();
        }
    };

    int workers = std::min(worker_count(), n_paths);
    if (workers <= 1) {
        work(0, n_paths);
    } else {
        std::vector<std::thread> pool;
        int chunk = (n_paths + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            int lo = w * chunk;
            int hi = std::min(n_paths, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(work, lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    return paths;
}

}  // namespace

TrajectoryBatch simulate(const ControlProblem& p, const RandomizedStart& start,
                         const ControlSpec& ctrl, double dt, int n_paths, double t_max,
                         uint64_t seed, bool record_trajectories) {
    return TrajectoryBatch(seed, dt, p.dim_state,
                           run_batch(p, start, ctrl, dt, n_paths, t_max, seed, record_trajectories));
}

double g_sup_sampled(const ControlProblem& p, int n, uint64_t seed) {
    SplitStream rng(seed, 1);
    const DomainGeometry& dom = *p.domain;
    std::vector<double> lo, hi;
    dom.bounding_box(lo, hi);
    int d = dom.dim();
    double g_inf = 0;
    Point x(static_cast<size_t>(d));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j)
            x[static_cast<size_t>(j)] =
                lo[static_cast<size_t>(j)] +
                (hi[static_cast<size_t>(j)] - lo[static_cast<size_t>(j)]) * rng.next_uniform_pos();
        Point bp = dom.project_to_boundary(x);
        g_inf = std::fmax(g_inf, std::fabs(p.eval_g(bp)));
    }
    return g_inf;
}

ValueEstimate estimate_from_batch(const ControlProblem& p, const TrajectoryBatch& batch,
                                  double t_max) {
    const auto& paths = batch.paths();
    std::vector<double> vals(paths.size());
    int censored = 0;
    for (size_t i = 0; i < paths.size(); ++i) {
        const PathData& pd = paths[i];
        double v = pd.discounted_running;
        if (pd.censored) {
            ++censored;
        } else {
            Point bp = p.domain->project_to_boundary(pd.final_state);
            v += std::exp(-p.discount * pd.exit_time) * p.eval_g(bp);
        }
        vals[i] = v;
    }
    double sum = 0;
    for (double v : vals) sum += v;
    double mean = sum / static_cast<double>(vals.size());
    double ss = 0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    double se = vals.size() > 1
                    ? std::sqrt(ss / (static_cast<double>(vals.size()) - 1.0) /
                                static_cast<double>(vals.size()))
                    : 0.0;

    ValueEstimate est;
    est.mean = mean;
    est.se = se;
    est.n = static_cast<int>(vals.size());
    est.censored_fraction = static_cast<double>(censored) / static_cast<double>(vals.size());
    est.dt = batch.dt();
    constexpr double z99 = 2.5758293035489004;  // Φ^{-1}(0.995)
    est.ci99_lo = mean - z99 * se;
    est.ci99_hi = mean + z99 * se;
    est.truncation_bound = std::exp(-p.discount * t_max) * g_sup_sampled(p);
    return est;
}

ValueEstimate estimate_value(const ControlProblem& p, const Point& x, const ControlSpec& ctrl,
                             double dt, int n_paths, double t_max, uint64_t seed) {
    if (p.domain->classify(x) == PointClass::exterior)
        throw std::invalid_argument("estimate_value: x must lie in the closed domain");
    TrajectoryBatch batch(seed, dt, p.dim_state,
                          run_batch(p, RandomizedStart::fixed(x), ctrl, dt, n_paths, t_max, seed,
                                    false));
    return estimate_from_batch(p, batch, t_max);
}

// ---------------------------------------------------------------------------

StoppingRule StoppingRule::at_start() {
    StoppingRule r;
    r.kind = Kind::at_start;
    return r;
}
StoppingRule StoppingRule::fixed_time(double t) {
    StoppingRule r;
    r.kind = Kind::fixed_time;
    r.t_star = t;
    return r;
}
StoppingRule StoppingRule::hit_ball(Point c, double rad) {
    StoppingRule r;
    r.kind = Kind::hit_ball;
    r.center = std::move(c);
    r.radius = rad;
    return r;
}
StoppingRule StoppingRule::at_exit() {
    StoppingRule r;
    r.kind = Kind::at_exit;
    return r;
}

std::string StoppingRule::label() const {
    switch (kind) {
        case Kind::at_start:
            return "rho=tau";
        case Kind::fixed_time:
            return "rho=t*^sigma(t*=" + std::to_string(t_star) + ")";
        case Kind::hit_ball:
            return "rho=hit_ball(r=" + std::to_string(radius) + ")^sigma";
        case Kind::at_exit:
            return "rho=sigma";
    }
    return "";
}

std::vector<ZPair> z_process(const ControlProblem& p, const ValueField& u,
                             const TrajectoryBatch& batch, const StoppingRule& rule) {
    if (!batch.has_trajectories())
        throw std::invalid_argument("z_process: batch was simulated without trajectory storage");
    double beta = p.discount;
    double dt = batch.dt();
    std::vector<ZPair> out(static_cast<size_t>(batch.n_paths()));

    for (int pi = 0; pi < batch.n_paths(); ++pi) {
        const PathData& pd = batch.path(pi);
        ZPair z;
        z.z_tau = std::exp(-beta * pd.t0) * u.interpolate(pd.start);

        int j = 0;
        bool undecidable = false;
        switch (rule.kind) {
            case StoppingRule::Kind::at_start:
                j = 0;
                break;
            case StoppingRule::Kind::fixed_time: {
                if (rule.t_star <= pd.t0) {
                    j = 0;
                } else {
                    long long steps =
                        static_cast<long long>(std::ceil((rule.t_star - pd.t0) / dt - 1e-9));
                    if (steps >= pd.exit_index && pd.censored)
                        undecidable = true;  // σ beyond the horizon, t* beyond too
                    j = static_cast<int>(std::min<long long>(steps, pd.exit_index));
                }
                break;
            }
            case StoppingRule::Kind::hit_ball: {
                bool hit = false;
                for (int s = 0; s <= pd.exit_index; ++s) {
                    auto xs = batch.state_at(pi, s);
                    double d2 = 0;
                    for (size_t i = 0; i < xs.size(); ++i) {
                        double t = xs[i] - rule.center[i];
                        d2 += t * t;
                    }
                    if (d2 <= rule.radius * rule.radius) {
                        j = s;
                        hit = true;
                        break;
                    }
                }
                if (!hit) {
                    if (pd.censored)
                        undecidable = true;
                    else
                        j = pd.exit_index;  // truncated at exit
                }
                break;
            }
            case StoppingRule::Kind::at_exit:
                if (pd.censored)
                    undecidable = true;
                else
                    j = pd.exit_index;
                break;
        }

        if (undecidable) {
            z.censored = true;
            z.z_rho = 0;
            z.rho_time = pd.exit_time;
            out[static_cast<size_t>(pi)] = z;
            continue;
        }

        double t_rho = pd.t0 + j * dt;
        auto xs = batch.state_at(pi, j);
        double u_val;
        if (j == pd.exit_index && !pd.censored) {
            Point bp = p.domain->project_to_boundary(xs);
            u_val = u.boundary_consistent() ? p.eval_g(bp) : u.interpolate(bp);
        } else {
            u_val = u.interpolate(xs);
        }
        z.z_rho = pd.cumint[static_cast<size_t>(j)] + std::exp(-beta * t_rho) * u_val;
        z.rho_time = t_rho;
        out[static_cast<size_t>(pi)] = z;
    }
    return out;
}

}  // namespace exitperron
