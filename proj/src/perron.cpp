#include "exitperron/perron.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "exitperron/rng.hpp"

namespace exitperron {

namespace {

constexpr double kTouchTol = 1e-9;
constexpr double kConstTol = 1e-12;

std::string point_str(std::span<const double> x) {
    std::string s = "(";
    for (size_t i = 0; i < x.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(x[i]);
    }
    return s + ")";
}

double dist(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double t = a[i] - b[i];
        s += t * t;
    }
    return std::sqrt(s);
}

}  // namespace

double f_sup_sampled(const ControlProblem& p, int n, uint64_t seed) {
    SplitStream rng(seed, 2);
    const DomainGeometry& dom = *p.domain;
    std::vector<double> lo, hi;
    dom.bounding_box(lo, hi);
    int d = dom.dim();
    const ControlSet& A = *p.control_set;
    double f_inf = 0;
    Point x(static_cast<size_t>(d));
    int found = 0, attempts = 0;
    while (found < n && attempts < 100 * n) {
        ++attempts;
        for (int j = 0; j < d; ++j)
            x[static_cast<size_t>(j)] =
                lo[static_cast<size_t>(j)] +
                (hi[static_cast<size_t>(j)] - lo[static_cast<size_t>(j)]) * rng.next_uniform_pos();
        if (dom.classify(x) == PointClass::exterior) continue;
        ++found;
        for (int ai = 0; ai < A.grid_size(); ++ai)
            f_inf = std::fmax(f_inf, std::fabs(p.eval_f(x, A.action(ai))));
    }
    return f_inf;
}

ValueField constant_subsolution(const ControlProblem& p, std::shared_ptr<const Grid> grid,
                                const AssumptionReport& bounds) {
    double c = std::fmin(bounds.f_lo / p.discount, bounds.g_lo);
    bool g_const = std::fabs(bounds.g_hi - bounds.g_lo) <= kConstTol;
    bool consistent = g_const && std::fabs(c - bounds.g_lo) <= kConstTol;
    return ValueField(std::move(grid), c, consistent);
}

ValueField constant_supersolution(const ControlProblem& p, std::shared_ptr<const Grid> grid,
                                  const AssumptionReport& bounds) {
    double c = std::fmax(bounds.f_hi / p.discount, bounds.g_hi);
    bool g_const = std::fabs(bounds.g_hi - bounds.g_lo) <= kConstTol;
    bool consistent = g_const && std::fabs(c - bounds.g_hi) <= kConstTol;
    return ValueField(std::move(grid), c, consistent);
}

namespace {

ValueField lattice_combine(const ValueField& a, const ValueField& b, bool take_max) {
    if (!a.grid().same_layout(b.grid()))
        throw std::invalid_argument("lattice join/meet: grid layout mismatch");
    std::vector<double> v(a.values().begin(), a.values().end());
    for (size_t i = 0; i < v.size(); ++i)
        v[i] = take_max ? std::fmax(v[i], b.values()[i]) : std::fmin(v[i], b.values()[i]);
    return ValueField(a.grid_ptr(), std::move(v),
                      a.boundary_consistent() && b.boundary_consistent());
}

}  // namespace

ValueField lattice_join(const ValueField& u1, const ValueField& u2) {
    return lattice_combine(u1, u2, true);
}

ValueField lattice_meet(const ValueField& w1, const ValueField& w2) {
    return lattice_combine(w1, w2, false);
}

ControlBuilder composite_builder(ValueField u1, ControlBuilder b1, ValueField u2,
                                 ControlBuilder b2) {
    return [u1 = std::move(u1), u2 = std::move(u2), b1 = std::move(b1),
            b2 = std::move(b2)](double t0, const Point& xi) {
        return u1.interpolate(xi) > u2.interpolate(xi) ? b1(t0, xi) : b2(t0, xi);
    };
}

std::vector<StoppingRule> default_stopping_rules(const ControlProblem& p) {
    double scale = 1.0 / p.discount;
    std::vector<StoppingRule> rules;
    rules.push_back(StoppingRule::at_start());
    rules.push_back(StoppingRule::fixed_time(0.05 * scale));
    rules.push_back(StoppingRule::fixed_time(0.25 * scale));
    rules.push_back(StoppingRule::fixed_time(1.0 * scale));
    rules.push_back(StoppingRule::hit_ball(p.domain->center(), 0.5 * p.domain->inradius()));
    rules.push_back(StoppingRule::at_exit());
    return rules;
}

// ---------------------------------------------------------------------------

namespace {

struct BoundarySample {
    Point point;      // on ∂G
    double g = 0;
    double cand = 0;  // candidate interpolated at the point
};

std::vector<BoundarySample> boundary_samples(const ControlProblem& p, const ValueField& cand,
                                             int extra) {
    std::vector<BoundarySample> out;
    const Grid& g = cand.grid();
    for (int n : g.boundary_nodes()) {
        Point bp = g.boundary_point(n);
        out.push_back({bp, p.eval_g(bp), cand.interpolate(bp)});
    }
    SplitStream rng(0x5EED5EEDULL, 3);
    std::vector<double> lo, hi;
    p.domain->bounding_box(lo, hi);
    int d = p.dim_state;
    Point x(static_cast<size_t>(d));
    for (int i = 0; i < extra; ++i) {
        for (int j = 0; j < d; ++j)
            x[static_cast<size_t>(j)] =
                lo[static_cast<size_t>(j)] +
                (hi[static_cast<size_t>(j)] - lo[static_cast<size_t>(j)]) * rng.next_uniform_pos();
        Point bp = p.domain->project_to_boundary(x);
        out.push_back({bp, p.eval_g(bp), cand.interpolate(bp)});
    }
    return out;
}

double resolve_c_bias(const ControlProblem& p, const ValueField& cand, double requested) {
    if (requested >= 0) return requested;
    return 0.5 * (cand.max_abs() + f_sup_sampled(p) / p.discount);
}

double resolve_t_max(const ControlProblem& p, double max_t0, double requested) {
    if (requested > 0) return requested;
    return max_t0 + 30.0 / p.discount;
}

MartingaleReport run_martingale(const ControlProblem& p, const ValueField& cand, bool sub,
                                const std::vector<std::pair<const ControlSpec*, std::string>>& controls_per_start,
                                const std::vector<std::pair<double, Point>>& starts, double dt,
                                int n_paths, const std::vector<StoppingRule>& rules, uint64_t seed,
                                const MartingaleOptions& opts, const std::string& ctrl_desc) {
    MartingaleReport rep;
    rep.direction = sub ? "sub" : "super";
    rep.dt = dt;
    rep.n_paths = n_paths;
    rep.seed = seed;
    rep.c_bias = resolve_c_bias(p, cand, opts.c_bias);
    rep.control_description = ctrl_desc;
    for (const auto& r : rules) rep.rules_tested.push_back(r.label());
    rep.pass = true;

    double t_max_all = 0;
    for (const auto& [t0, xi] : starts) t_max_all = std::fmax(t_max_all, t0);
    double t_max = resolve_t_max(p, t_max_all, opts.t_max);
    double bias = rep.c_bias * std::sqrt(dt);

    for (size_t ci = 0; ci < controls_per_start.size(); ++ci) {
        const auto& [spec, label] = controls_per_start[ci];
        size_t si = sub ? ci : ci % starts.size();
        const auto& [t0, xi] = starts[si];
        uint64_t run_seed = SplitStream::mix(seed + 0x9E3779B97F4A7C15ULL * (ci + 1));
        TrajectoryBatch batch =
            simulate(p, RandomizedStart::fixed(xi, t0), *spec, dt, n_paths, t_max, run_seed, true);
        for (const auto& rule : rules) {
            auto pairs = z_process(p, cand, batch, rule);
            double sum = 0;
            int n = 0, n_cens = 0;
            for (const auto& z : pairs) {
                if (z.censored) {
                    ++n_cens;
                    continue;
                }
                sum += z.z_rho - z.z_tau;
                ++n;
            }
            double mean = n > 0 ? sum / n : 0.0;
            double ss = 0;
            for (const auto& z : pairs) {
                if (z.censored) continue;
                double dev = (z.z_rho - z.z_tau) - mean;
                ss += dev * dev;
            }
            double se = n > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
            MartingaleRecord rec;
            rec.rule = rule.label();
            rec.start_index = static_cast<int>(si);
            rec.control = label;
            rec.mean = mean;
            rec.se = se;
            rec.eps_stat = 3.0 * se + bias;
            rec.n = n;
            rec.n_censored = n_cens;
            rec.pass = n == 0 ? true : (sub ? mean >= -rec.eps_stat : mean <= rec.eps_stat);
            rep.pass = rep.pass && rec.pass;
            rep.records.push_back(std::move(rec));
        }
    }
    return rep;
}

}  // namespace

MartingaleReport test_submartingale(const ControlProblem& p, const ValueField& u,
                                    const ControlBuilder& builder,
                                    const std::vector<std::pair<double, Point>>& starts, double dt,
                                    int n_paths, const std::vector<StoppingRule>& rules,
                                    uint64_t seed, const MartingaleOptions& opts) {
    if (starts.empty()) throw std::invalid_argument("test_submartingale: no starts");
    double bias = resolve_c_bias(p, u, opts.c_bias) * std::sqrt(dt);
    if (opts.check_boundary) {
        for (const auto& s : boundary_samples(p, u, opts.boundary_samples)) {
            if (s.cand > s.g + bias + 1e-12)
                throw BoundaryViolation("subsolution candidate exceeds g at boundary point " +
                                        point_str(s.point) + ": u=" + std::to_string(s.cand) +
                                        " > g=" + std::to_string(s.g));
        }
    }
    // one control per start, realized by the builder
    std::vector<ControlSpec> specs;
    specs.reserve(starts.size());
    for (const auto& [t0, xi] : starts) specs.push_back(builder(t0, xi));
    std::vector<std::pair<const ControlSpec*, std::string>> controls;
    for (size_t i = 0; i < specs.size(); ++i)
        controls.emplace_back(&specs[i], specs[i].describe());
    return run_martingale(p, u, true, controls, starts, dt, n_paths, rules, seed, opts,
                          "builder-realized (one control per start)");
}

MartingaleReport test_supermartingale(const ControlProblem& p, const ValueField& w,
                                      const std::vector<ControlSpec>& ctrl_samples,
                                      const std::vector<std::pair<double, Point>>& starts,
                                      double dt, int n_paths,
                                      const std::vector<StoppingRule>& rules, uint64_t seed,
                                      const MartingaleOptions& opts) {
    if (starts.empty()) throw std::invalid_argument("test_supermartingale: no starts");
    if (ctrl_samples.empty()) throw std::invalid_argument("test_supermartingale: no controls");
    double bias = resolve_c_bias(p, w, opts.c_bias) * std::sqrt(dt);
    if (opts.check_boundary) {
        for (const auto& s : boundary_samples(p, w, opts.boundary_samples)) {
            if (s.cand < s.g - bias - 1e-12)
                throw BoundaryViolation("supersolution candidate falls below g at boundary point " +
                                        point_str(s.point) + ": w=" + std::to_string(s.cand) +
                                        " < g=" + std::to_string(s.g));
        }
    }
    // every sampled control × every start
    std::vector<std::pair<const ControlSpec*, std::string>> controls;
    for (size_t c = 0; c < ctrl_samples.size(); ++c)
        for (size_t s = 0; s < starts.size(); ++s)
            controls.emplace_back(&ctrl_samples[c],
                                  ctrl_samples[c].describe());
    std::string desc = std::to_string(ctrl_samples.size()) + " sampled controls (finite sample of the universal quantifier)";
    return run_martingale(p, w, false, controls, starts, dt, n_paths, rules, seed, opts, desc);
}

// ---------------------------------------------------------------------------

double bump_up_sign_value(const ControlProblem& p, const QuadProbe& phi, double eta,
                          std::span<const double> action, std::span<const double> x) {
    double phi_eta = phi.eval(x) + eta;
    return p.discount * phi_eta - generator_apply(p, phi, x, action) - p.eval_f(x, action);
}

double bump_down_sign_value(const ControlProblem& p, const QuadProbe& phi, double eta,
                            std::span<const double> x) {
    double phi_eta = phi.eval(x) - eta;
    std::vector<double> grad = phi.gradient_at(x);
    HamiltonianResult h = hamiltonian(p, x, grad, phi.hess);
    return p.discount * phi_eta - h.value;
}

namespace {

/// Deterministic lattice over [x0-ε, x0+ε]^d, filtered to Ḡ, split into
/// ball samples (|x-x0| < ε) and shell samples (ε/2 ≤ |x-x0| ≤ ε).
struct BallSamples {
    std::vector<Point> ball;
    std::vector<Point> shell;
    std::vector<Point> ball_boundary;  // on ∂G within the open ball
};

BallSamples sample_ball(const ControlProblem& p, const Point& x0, double eps, int per_axis) {
    BallSamples out;
    int d = p.dim_state;
    long long total = 1;
    for (int i = 0; i < d; ++i) total *= per_axis;
    Point x(static_cast<size_t>(d));
    for (long long m = 0; m < total; ++m) {
        long long rem = m;
        for (int i = 0; i < d; ++i) {
            int c = static_cast<int>(rem % per_axis);
            rem /= per_axis;
            x[static_cast<size_t>(i)] =
                x0[static_cast<size_t>(i)] + eps * (2.0 * c / (per_axis - 1) - 1.0);
        }
        PointClass pc = p.domain->classify(x);
        if (pc == PointClass::exterior) continue;
        double r = dist(x, x0);
        if (r < eps) {
            out.ball.push_back(x);
            if (pc == PointClass::boundary) out.ball_boundary.push_back(x);
            // curved boundaries are measure zero for the lattice: also
            // probe the projection when it falls inside the ball
            Point proj = p.domain->project_to_boundary(x);
            if (dist(proj, x0) < eps) out.ball_boundary.push_back(proj);
        }
        if (r >= eps / 2 && r <= eps) out.shell.push_back(x);
    }
    return out;
}

BumpOutcome reject(std::string reason, Point worst = {}, double value = 0) {
    BumpOutcome o;
    o.accepted = false;
    o.reason = std::move(reason);
    o.worst_point = std::move(worst);
    o.worst_value = value;
    return o;
}

}  // namespace

BumpOutcome bump_up(const ValueField& u, const BumpSpec& spec, const ControlProblem& p) {
    if (!(spec.radius > 0)) return reject("degenerate ball (radius must be positive)");
    if (!(spec.height > 0)) return reject("bump height must be positive");
    if (!p.control_set->contains(spec.inner_action))
        return reject("inner action outside the control box");
    double u_center = u.interpolate(spec.center);
    if (std::fabs(spec.probe.value - u_center) > kTouchTol)
        return reject("probe must touch the field at the center", spec.center,
                      spec.probe.value - u_center);

    BallSamples samples = sample_ball(p, spec.center, spec.radius, spec.sample_per_axis);

    // shell margin δ′ = min (u − φ); needs δ′ > η
    double margin = std::numeric_limits<double>::infinity();
    Point margin_at;
    for (const auto& x : samples.shell) {
        double m = u.interpolate(x) - spec.probe.eval(x);
        if (m < margin) {
            margin = m;
            margin_at = x;
        }
    }
    BumpOutcome out;
    out.shell_margin = margin;
    if (!(margin > spec.height)) {
        auto r = reject("shell margin violated: u − φ must exceed η on the shell", margin_at, margin);
        r.shell_margin = margin;
        return r;
    }

    // boundary sign condition: φ+η < g on B_ε ∩ ∂G
    for (const auto& x : samples.ball_boundary) {
        double v = spec.probe.eval(x) + spec.height - p.eval_g(x);
        if (!(v < 0)) {
            auto r = reject("boundary sign condition violated: φ+η must stay below g", x, v);
            r.shell_margin = margin;
            return r;
        }
    }

    // generator sign condition: β(φ+η) − L^aφ − f < 0 on B_ε ∩ Ḡ
    for (const auto& x : samples.ball) {
        double v = bump_up_sign_value(p, spec.probe, spec.height, spec.inner_action, x);
        if (!(v < 0)) {
            auto r = reject("generator sign condition violated: β·φ^η − L^aφ − f must be negative",
                            x, v);
            r.shell_margin = margin;
            return r;
        }
    }

    // splice: max(φ+η, u) on ball nodes
    const Grid& g = u.grid();
    std::vector<double> vals(u.values().begin(), u.values().end());
    bool boundary_touched = false;
    Point xn(static_cast<size_t>(g.dim()));
    for (int n = 0; n < g.size(); ++n) {
        if (g.node_class(n) == PointClass::exterior) continue;
        g.node_point(n, xn);
        if (dist(xn, spec.center) >= spec.radius) continue;
        double lifted = spec.probe.eval(xn) + spec.height;
        if (lifted > vals[static_cast<size_t>(n)]) {
            vals[static_cast<size_t>(n)] = lifted;
            if (g.node_class(n) == PointClass::boundary) boundary_touched = true;
        }
    }
    out.accepted = true;
    out.field = ValueField(u.grid_ptr(), std::move(vals),
                           u.boundary_consistent() && !boundary_touched);
    return out;
}

BumpOutcome bump_down(const ValueField& w, const BumpSpec& spec, const ControlProblem& p) {
    if (!(spec.radius > 0)) return reject("degenerate ball (radius must be positive)");
    if (!(spec.height > 0)) return reject("bump height must be positive");
    double w_center = w.interpolate(spec.center);
    if (std::fabs(spec.probe.value - w_center) > kTouchTol)
        return reject("probe must touch the field at the center", spec.center,
                      spec.probe.value - w_center);

    BallSamples samples = sample_ball(p, spec.center, spec.radius, spec.sample_per_axis);

    double margin = std::numeric_limits<double>::infinity();
    Point margin_at;
    for (const auto& x : samples.shell) {
        double m = spec.probe.eval(x) - w.interpolate(x);
        if (m < margin) {
            margin = m;
            margin_at = x;
        }
    }
    BumpOutcome out;
    out.shell_margin = margin;
    if (!(margin > spec.height)) {
        auto r = reject("shell margin violated: φ − w must exceed η on the shell", margin_at, margin);
        r.shell_margin = margin;
        return r;
    }

    // boundary sign condition: φ−η > g on B_ε ∩ ∂G
    for (const auto& x : samples.ball_boundary) {
        double v = spec.probe.eval(x) - spec.height - p.eval_g(x);
        if (!(v > 0)) {
            auto r = reject("boundary sign condition violated: φ−η must stay above g", x, v);
            r.shell_margin = margin;
            return r;
        }
    }

    // Hamiltonian sign condition: β(φ−η) − H(x, φ_x, φ_xx) > 0 on B_ε ∩ Ḡ
    for (const auto& x : samples.ball) {
        double v = bump_down_sign_value(p, spec.probe, spec.height, x);
        if (!(v > 0)) {
            auto r = reject("Hamiltonian sign condition violated: β·φ^η − H must be positive", x, v);
            r.shell_margin = margin;
            return r;
        }
    }

    const Grid& g = w.grid();
    std::vector<double> vals(w.values().begin(), w.values().end());
    bool boundary_touched = false;
    Point xn(static_cast<size_t>(g.dim()));
    for (int n = 0; n < g.size(); ++n) {
        if (g.node_class(n) == PointClass::exterior) continue;
        g.node_point(n, xn);
        if (dist(xn, spec.center) >= spec.radius) continue;
        double lowered = spec.probe.eval(xn) - spec.height;
        if (lowered < vals[static_cast<size_t>(n)]) {
            vals[static_cast<size_t>(n)] = lowered;
            if (g.node_class(n) == PointClass::boundary) boundary_touched = true;
        }
    }
    out.accepted = true;
    out.field = ValueField(w.grid_ptr(), std::move(vals),
                           w.boundary_consistent() && !boundary_touched);
    return out;
}

ControlBuilder bump_suitable_builder(const BumpSpec& spec, ValueField base_field) {
    Point center = spec.center;
    double radius = spec.radius;
    double eta = spec.height;
    QuadProbe probe = spec.probe;
    std::vector<double> action = spec.inner_action;
    ControlSpec fallback = spec.fallback;
    return [=, base = std::move(base_field)](double, const Point& xi) {
        bool in_half_ball = dist(xi, center) < radius / 2;
        bool improved = probe.eval(xi) + eta > base.interpolate(xi);
        if (in_half_ball && improved)
            return ControlSpec::concatenated(ControlSpec::constant(action), center, radius / 2,
                                             fallback);
        return fallback;
    };
}

// ---------------------------------------------------------------------------

EnvelopeResult envelope_iterate(const ControlProblem& p, const std::vector<ValueField>& seeds,
                                EnvelopeDirection direction,
                                const std::vector<BumpProposal>& proposals, int rounds,
                                const ControlSpec& fallback) {
    if (seeds.empty()) throw std::invalid_argument("envelope_iterate: no seeds");
    EnvelopeResult res;
    bool up = direction == EnvelopeDirection::up;

    ValueField current = seeds[0];
    for (size_t i = 1; i < seeds.size(); ++i)
        current = up ? lattice_join(current, seeds[i]) : lattice_meet(current, seeds[i]);
    res.sequence.push_back(current);

    for (int round = 0; round < rounds; ++round) {
        ValueField next = current;
        for (size_t pi = 0; pi < proposals.size(); ++pi) {
            const BumpProposal& prop = proposals[pi];
            BumpSpec spec;
            spec.center = prop.center;
            spec.radius = prop.radius;
            spec.height = prop.height;
            spec.inner_action = prop.inner_action;
            spec.fallback = fallback;
            spec.sample_per_axis = prop.sample_per_axis;
            spec.probe.x0 = prop.center;
            spec.probe.value = current.interpolate(prop.center);
            spec.probe.grad = prop.grad;
            spec.probe.hess = prop.hess;
            BumpOutcome out =
                up ? bump_up(current, spec, p) : bump_down(current, spec, p);
            std::string tag = "round " + std::to_string(round) + " proposal " + std::to_string(pi);
            if (out.accepted) {
                ++res.accepted;
                res.log.push_back(tag + ": accepted");
                next = up ? lattice_join(next, *out.field) : lattice_meet(next, *out.field);
            } else {
                ++res.rejected;
                res.log.push_back(tag + ": rejected (" + out.reason + ")");
            }
        }
        for (const auto& s : seeds)
            next = up ? lattice_join(next, s) : lattice_meet(next, s);
        current = std::move(next);
        res.sequence.push_back(current);
    }
    return res;
}

// ---------------------------------------------------------------------------

ViscosityReport viscosity_probe(const ValueField& field, const ControlProblem& p,
                                const std::vector<Point>& points, const ViscosityOptions& opts) {
    ViscosityReport rep;
    rep.tol = opts.tol;
    const Grid& g = field.grid();
    int d = g.dim();
    std::vector<int> coords(static_cast<size_t>(d)), nb(static_cast<size_t>(d));

    for (const auto& pt : points) {
        ViscosityRecord rec;
        int node = g.nearest_node(pt);
        rec.x = g.node_point(node);
        rec.node_class = g.node_class(node);
        if (rec.node_class == PointClass::exterior) {
            rec.skipped = true;
            rec.branch = "exterior node";
            ++rep.n_skipped;
            rep.records.push_back(std::move(rec));
            continue;
        }

        // centred-difference jet, available only if the full stencil is
        // inside the lattice and touches no exterior node
        bool stencil_ok = true;
        g.node_coords(node, coords);
        auto node_at = [&](int axis_a, int off_a, int axis_b, int off_b) {
            nb.assign(coords.begin(), coords.end());
            nb[static_cast<size_t>(axis_a)] += off_a;
            if (axis_b >= 0) nb[static_cast<size_t>(axis_b)] += off_b;
            for (int i = 0; i < d; ++i)
                if (nb[static_cast<size_t>(i)] < 0 ||
                    nb[static_cast<size_t>(i)] >= g.resolution()[static_cast<size_t>(i)])
                    return -1;
            int idx = g.linear_index(nb);
            return g.node_class(idx) == PointClass::exterior ? -1 : idx;
        };

        std::vector<double> grad(static_cast<size_t>(d), 0.0);
        std::vector<double> hess(static_cast<size_t>(d) * static_cast<size_t>(d), 0.0);
        for (int i = 0; i < d && stencil_ok; ++i) {
            int up = node_at(i, +1, -1, 0), dn = node_at(i, -1, -1, 0);
            if (up < 0 || dn < 0) {
                stencil_ok = false;
                break;
            }
            double h = g.spacing(i);
            grad[static_cast<size_t>(i)] = (field.value(up) - field.value(dn)) / (2 * h);
            hess[static_cast<size_t>(i * d + i)] =
                (field.value(up) - 2 * field.value(node) + field.value(dn)) / (h * h);
        }
        if (stencil_ok && d == 2) {
            int pp = node_at(0, +1, 1, +1), mm = node_at(0, -1, 1, -1);
            int pm = node_at(0, +1, 1, -1), mp = node_at(0, -1, 1, +1);
            if (pp < 0 || mm < 0 || pm < 0 || mp < 0) {
                stencil_ok = false;
            } else {
                double cross = (field.value(pp) + field.value(mm) - field.value(pm) -
                                field.value(mp)) /
                               (4 * g.spacing(0) * g.spacing(1));
                hess[1] = hess[2] = cross;
            }
        }

        double vx = field.value(node);
        if (rec.node_class == PointClass::interior) {
            if (!stencil_ok) {
                rec.skipped = true;
                rec.branch = "degenerate stencil";
                ++rep.n_skipped;
                rep.records.push_back(std::move(rec));
                continue;
            }
            std::vector<double> hess_up = hess, hess_dn = hess;
            for (int i = 0; i < d; ++i) {
                hess_up[static_cast<size_t>(i * d + i)] += opts.curvature_offset;
                hess_dn[static_cast<size_t>(i * d + i)] -= opts.curvature_offset;
            }
            rec.sub_residual = p.discount * vx - hamiltonian(p, rec.x, grad, hess_up).value;
            rec.super_residual = p.discount * vx - hamiltonian(p, rec.x, grad, hess_dn).value;
            rec.sub_pass = rec.sub_residual <= opts.tol;
            rec.super_pass = rec.super_residual >= -opts.tol;
            rec.branch = "pde";
        } else {
            // relaxed boundary disjunction: the g-branch settles it when
            // the field matches g; otherwise fall back to the jet when
            // the stencil exists
            Point bp = g.boundary_point(node);
            double diff = vx - p.eval_g(bp);
            bool sub_g = diff <= opts.tol;
            bool super_g = diff >= -opts.tol;
            bool sub_pde = false, super_pde = false;
            if (stencil_ok) {
                rec.sub_residual = p.discount * vx - hamiltonian(p, rec.x, grad, hess).value;
                rec.super_residual = rec.sub_residual;
                sub_pde = rec.sub_residual <= opts.tol;
                super_pde = rec.super_residual >= -opts.tol;
            }
            rec.sub_pass = sub_g || sub_pde;
            rec.super_pass = super_g || super_pde;
            rec.branch = (sub_g && super_g) ? "g-branch" : "pde-branch";
        }
        rep.sub_pass = rep.sub_pass && (rec.skipped || rec.sub_pass);
        rep.super_pass = rep.super_pass && (rec.skipped || rec.super_pass);
        rep.records.push_back(std::move(rec));
    }
    return rep;
}

// ---------------------------------------------------------------------------

SandwichReport check_sandwich(const ValueField& u, const ValueField& v_hat, const ValueField& w,
                              double eps) {
    if (!u.grid().same_layout(v_hat.grid()) || !v_hat.grid().same_layout(w.grid()))
        throw std::invalid_argument("check_sandwich: grid layout mismatch");
    SandwichReport rep;
    rep.eps = eps;
    const Grid& g = u.grid();
    double m1 = std::numeric_limits<double>::infinity();
    double m2 = std::numeric_limits<double>::infinity();
    double m1b = std::numeric_limits<double>::infinity();
    double m2b = std::numeric_limits<double>::infinity();
    double gap = -std::numeric_limits<double>::infinity();
    for (int n = 0; n < g.size(); ++n) {
        if (g.node_class(n) == PointClass::exterior) continue;
        double a = v_hat.value(n) - u.value(n);
        double b = w.value(n) - v_hat.value(n);
        if (a < m1) {
            m1 = a;
            rep.argmin_v_minus_u = g.node_point(n);
        }
        if (b < m2) {
            m2 = b;
            rep.argmin_w_minus_v = g.node_point(n);
        }
        gap = std::fmax(gap, w.value(n) - u.value(n));
        if (g.node_class(n) == PointClass::boundary) {
            m1b = std::fmin(m1b, a);
            m2b = std::fmin(m2b, b);
        }
    }
    rep.min_v_minus_u = m1;
    rep.min_w_minus_v = m2;
    rep.min_v_minus_u_boundary = m1b;
    rep.min_w_minus_v_boundary = m2b;
    rep.max_gap = gap;
    rep.pass = m1 >= -eps && m2 >= -eps;
    return rep;
}

// ---------------------------------------------------------------------------

DPPReport dpp_residual(const ControlProblem& p, const ValueField& v_hat,
                       const std::vector<Point>& points, const std::vector<ControlSpec>& policies,
                       const std::vector<StoppingRule>& rules, double dt, int n_paths,
                       uint64_t seed, const DppOptions& opts) {
    if (!v_hat.boundary_consistent())
        throw std::invalid_argument("dpp_residual: v̂ must be boundary-consistent");
    if (policies.empty()) throw std::invalid_argument("dpp_residual: no policies");
    DPPReport rep;
    rep.dt = dt;
    rep.n_paths = n_paths;
    rep.seed = seed;
    double c_bias = opts.c_bias >= 0
                        ? opts.c_bias
                        : 0.5 * (v_hat.max_abs() + f_sup_sampled(p) / p.discount);
    double h_max = 0;
    for (int i = 0; i < v_hat.grid().dim(); ++i) h_max = std::fmax(h_max, v_hat.grid().spacing(i));
    double t_max = opts.t_max > 0 ? opts.t_max : 30.0 / p.discount;

    for (size_t qi = 0; qi < points.size(); ++qi) {
        const Point& x = points[qi];
        DppPointRecord prec;
        prec.x = x;
        prec.v_hat = v_hat.interpolate(x);
        PointClass pc = p.domain->classify(x);
        if (pc != PointClass::interior) {
            // σ = 0 for starts outside the open set: the bracket is v̂(x)
            // itself for every policy and rule
            prec.boundary = true;
            for (const auto& rule : rules) {
                DppRuleRecord rr;
                rr.rule = rule.label();
                rr.bracket.assign(policies.size(), prec.v_hat);
                rr.se.assign(policies.size(), 0.0);
                rr.max_bracket = prec.v_hat;
                rr.residual = 0.0;
                rr.eps = c_bias * std::sqrt(dt) + opts.grid_C * h_max;
                rr.within = true;
                prec.rules.push_back(std::move(rr));
            }
            rep.points.push_back(std::move(prec));
            continue;
        }

        // one batch per policy, all rules evaluated on it
        std::vector<TrajectoryBatch> batches;
        batches.reserve(policies.size());
        for (size_t pi = 0; pi < policies.size(); ++pi) {
            uint64_t run_seed =
                SplitStream::mix(seed + 0x9E3779B97F4A7C15ULL * (qi * policies.size() + pi + 1));
            batches.push_back(simulate(p, RandomizedStart::fixed(x), policies[pi], dt, n_paths,
                                       t_max, run_seed, true));
        }
        for (const auto& rule : rules) {
            DppRuleRecord rr;
            rr.rule = rule.label();
            for (size_t pi = 0; pi < policies.size(); ++pi) {
                auto pairs = z_process(p, v_hat, batches[pi], rule);
                double sum = 0;
                int n = 0;
                for (const auto& z : pairs) {
                    if (z.censored) {
                        ++rr.n_censored;
                        continue;
                    }
                    sum += z.z_rho;
                    ++n;
                }
                double mean = n > 0 ? sum / n : 0.0;
                double ss = 0;
                for (const auto& z : pairs) {
                    if (z.censored) continue;
                    ss += (z.z_rho - mean) * (z.z_rho - mean);
                }
                double se = n > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
                rr.bracket.push_back(mean);
                rr.se.push_back(se);
            }
            rr.argmax_policy = 0;
            rr.max_bracket = rr.bracket[0];
            for (size_t pi = 1; pi < rr.bracket.size(); ++pi) {
                if (rr.bracket[pi] > rr.max_bracket) {
                    rr.max_bracket = rr.bracket[pi];
                    rr.argmax_policy = static_cast<int>(pi);
                }
            }
            rr.se_at_max = rr.se[static_cast<size_t>(rr.argmax_policy)];
            rr.residual = prec.v_hat - rr.max_bracket;
            rr.eps = 3.0 * rr.se_at_max + c_bias * std::sqrt(dt) + opts.grid_C * h_max;
            rr.within = std::fabs(rr.residual) <= rr.eps;
            rep.pass = rep.pass && rr.within;
            prec.rules.push_back(std::move(rr));
        }
        rep.points.push_back(std::move(prec));
    }
    return rep;
}

}  // namespace exitperron
