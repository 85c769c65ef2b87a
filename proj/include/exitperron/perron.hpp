#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "exitperron/grid.hpp"
#include "exitperron/problem.hpp"
#include "exitperron/scheme.hpp"
#include "exitperron/sim.hpp"

namespace exitperron {

/// A candidate's boundary inequality (u ≤ g resp. w ≥ g on ∂G) failed
/// beyond tolerance; message carries the worst location.
struct BoundaryViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Constant field at min{f̲/β, g̲}: a stochastic subsolution under every
/// control. Bounds come from the sampled AssumptionReport.
ValueField constant_subsolution(const ControlProblem& p, std::shared_ptr<const Grid> grid,
                                const AssumptionReport& bounds);

/// Constant field at max{f̄/β, ḡ}: a stochastic supersolution.
ValueField constant_supersolution(const ControlProblem& p, std::shared_ptr<const Grid> grid,
                                  const AssumptionReport& bounds);

/// Nodewise max / min; boundary-consistent flag is the conjunction.
/// Throws std::invalid_argument on grid layout mismatch.
ValueField lattice_join(const ValueField& u1, const ValueField& u2);
ValueField lattice_meet(const ValueField& w1, const ValueField& w2);

/// Realizes the existential quantifier of the subsolution definition:
/// produces a candidate suitable control for a start pair (t0, ξ).
using ControlBuilder = std::function<ControlSpec(double t0, const Point& xi)>;

/// Join-closure builder: selects B1 on {u1(ξ) > u2(ξ)}, B2 otherwise.
ControlBuilder composite_builder(ValueField u1, ControlBuilder b1, ValueField u2,
                                 ControlBuilder b2);

struct MartingaleRecord {
    std::string rule;
    int start_index = 0;
    std::string control;
    double mean = 0;
    double se = 0;
    double eps_stat = 0;  // 3·SE + c_bias·√Δt
    int n = 0;
    int n_censored = 0;
    bool pass = false;
};

struct MartingaleReport {
    std::string direction;  // "sub" or "super"
    double dt = 0;
    int n_paths = 0;
    uint64_t seed = 0;
    double c_bias = 0;
    std::vector<std::string> rules_tested;
    std::string control_description;
    std::vector<MartingaleRecord> records;
    bool pass = false;
};

struct MartingaleOptions {
    double c_bias = -1;        // <0: 0.5·(‖candidate‖∞ + ‖f‖∞/β)
    double t_max = -1;         // <0: max t0 + 30/β
    bool check_boundary = true;
    int boundary_samples = 128;
};

/// Statistical test of the submartingale inequality E(Z_ρ − Z_τ) ≥ 0 for
/// the candidate u under the builder's controls, for every start and
/// stopping rule. Fails fast (BoundaryViolation) when u exceeds g on a
/// sampled boundary point beyond tolerance, unless disabled.
MartingaleReport test_submartingale(const ControlProblem& p, const ValueField& u,
                                    const ControlBuilder& builder,
                                    const std::vector<std::pair<double, Point>>& starts, double dt,
                                    int n_paths, const std::vector<StoppingRule>& rules,
                                    uint64_t seed, const MartingaleOptions& opts = {});

/// Mirror test of E(Z_ρ − Z_τ) ≤ 0 for every sampled control. The
/// definition quantifies over all controls; the report lists exactly the
/// finite set it exercised.
MartingaleReport test_supermartingale(const ControlProblem& p, const ValueField& w,
                                      const std::vector<ControlSpec>& ctrl_samples,
                                      const std::vector<std::pair<double, Point>>& starts,
                                      double dt, int n_paths,
                                      const std::vector<StoppingRule>& rules, uint64_t seed,
                                      const MartingaleOptions& opts = {});

/// The rule family used throughout verification: ρ=τ, three fixed times
/// (scaled by 1/β) truncated at exit, entry into the concentric
/// half-inradius ball truncated at exit, and ρ=σ.
std::vector<StoppingRule> default_stopping_rules(const ControlProblem& p);

// ---------------------------------------------------------------------------

/// Local improvement datum: probe φ (touching the field at `center`),
/// ball radius ε, lift η, inner action for the up-direction control, and
/// the fallback control used off the improvement set.
struct BumpSpec {
    Point center;                      // x₀ ∈ Ḡ
    double radius = 0;                 // ε
    double height = 0;                 // η > 0
    QuadProbe probe;                   // φ with explicit derivatives at x₀
    std::vector<double> inner_action;  // a ∈ A (up-direction only)
    ControlSpec fallback;              // suitable control for the base field
    int sample_per_axis = 5;           // sign-condition lattice density
};

struct BumpOutcome {
    bool accepted = false;
    std::string reason;      // rejection reason when not accepted
    Point worst_point;       // offending sample for sign/margin failures
    double worst_value = 0;  // measured margin at the offending sample
    double shell_margin = 0; // δ′ = min over the shell of (u−φ) resp. (φ−w)
    std::optional<ValueField> field;
};

/// Sign-condition values the bump checks sample (exposed for tests):
/// up: β·(φ+η) − L^aφ − f(·,a), required < 0;
/// down: β·(φ−η) − H(·, φ_x, φ_xx), required > 0.
double bump_up_sign_value(const ControlProblem& p, const QuadProbe& phi, double eta,
                          std::span<const double> action, std::span<const double> x);
double bump_down_sign_value(const ControlProblem& p, const QuadProbe& phi, double eta,
                            std::span<const double> x);

/// u^η = (φ+η) ∨ u on B_ε(x₀) ∩ Ḡ, u elsewhere — accepted only when the
/// probe touches u at x₀, the shell margin exceeds η, and the sampled
/// sign conditions hold (both the boundary inequality and the
/// single-action generator inequality).
BumpOutcome bump_up(const ValueField& u, const BumpSpec& spec, const ControlProblem& p);

/// w^η = (φ−η) ∧ w on B_ε(x₀) ∩ Ḡ, w elsewhere, with the mirrored
/// preconditions; the generator inequality uses the full Hamiltonian.
BumpOutcome bump_down(const ValueField& w, const BumpSpec& spec, const ControlProblem& p);

/// Control builder for a bumped field: inner constant action on
/// U = B_{ε/2}(x₀) ∩ {φ+η > u} until the path hits ∂B_{ε/2}(x₀)
/// (truncated at exit), then the fallback; fallback alone off U.
ControlBuilder bump_suitable_builder(const BumpSpec& spec, ValueField base_field);

// ---------------------------------------------------------------------------

enum class EnvelopeDirection { up, down };

/// A bump recipe re-anchored to the current field each round: the probe
/// value is set to the field value at the center, derivatives are taken
/// as given.
struct BumpProposal {
    Point center;
    double radius = 0;
    double height = 0;
    std::vector<double> grad;
    std::vector<double> hess;
    std::vector<double> inner_action;
    int sample_per_axis = 5;
};

struct EnvelopeResult {
    std::vector<ValueField> sequence;  // nodewise monotone by construction
    int accepted = 0;
    int rejected = 0;
    std::vector<std::string> log;
};

/// Monotone envelope iteration: each round joins (up) / meets (down) the
/// current field with every accepted bump result and the seeds.
EnvelopeResult envelope_iterate(const ControlProblem& p, const std::vector<ValueField>& seeds,
                                EnvelopeDirection direction,
                                const std::vector<BumpProposal>& proposals, int rounds,
                                const ControlSpec& fallback);

// ---------------------------------------------------------------------------

struct ViscosityRecord {
    Point x;
    PointClass node_class = PointClass::interior;
    bool skipped = false;       // degenerate stencil
    std::string branch;         // which disjunct carried a boundary point
    double sub_residual = 0;    // β·v − H with upward-shifted curvature
    double super_residual = 0;  // β·v − H with downward-shifted curvature
    bool sub_pass = false;
    bool super_pass = false;
};

struct ViscosityReport {
    std::vector<ViscosityRecord> records;
    int n_skipped = 0;
    bool sub_pass = true;
    bool super_pass = true;
    double tol = 0;
};

struct ViscosityOptions {
    double tol = 1e-3;
    double curvature_offset = 0;  // ±λ added to the fitted Hessian
};

/// Second-order-jet viscosity check at grid nodes: quadratics fitted
/// from centred differences (the jet is all H reads). Interior points
/// test both inequalities; boundary points test the relaxed disjunction
/// including v−g.
ViscosityReport viscosity_probe(const ValueField& field, const ControlProblem& p,
                                const std::vector<Point>& points,
                                const ViscosityOptions& opts = {});

// ---------------------------------------------------------------------------

struct SandwichReport {
    double min_v_minus_u = 0;
    double min_w_minus_v = 0;
    Point argmin_v_minus_u;
    Point argmin_w_minus_v;
    double max_gap = 0;  // max (w − u): empirical bound on |v̂ − v|
    double min_v_minus_u_boundary = 0;
    double min_w_minus_v_boundary = 0;
    double eps = 0;
    bool pass = false;
};

/// u ≤ v̂ ≤ w over all non-exterior nodes, margins allowed down to −eps.
SandwichReport check_sandwich(const ValueField& u, const ValueField& v_hat, const ValueField& w,
                              double eps);

// ---------------------------------------------------------------------------

struct DppRuleRecord {
    std::string rule;
    std::vector<double> bracket;  // per policy: E[∫ + e^{-βρ} v̂(X_ρ)]
    std::vector<double> se;
    double max_bracket = 0;
    int argmax_policy = 0;
    double se_at_max = 0;
    double residual = 0;  // v̂(x) − max_bracket
    double eps = 0;       // 3·SE + c_bias·√Δt + C·h
    bool within = false;
    int n_censored = 0;
};

struct DppPointRecord {
    Point x;
    bool boundary = false;  // σ = 0: residual exactly zero
    double v_hat = 0;
    std::vector<DppRuleRecord> rules;
};

struct DPPReport {
    std::vector<DppPointRecord> points;
    bool pass = true;
    double dt = 0;
    int n_paths = 0;
    uint64_t seed = 0;
};

struct DppOptions {
    double c_bias = -1;   // <0: 0.5·(‖v̂‖∞ + ‖f‖∞/β)
    double grid_C = 10.0; // coefficient of the C·h term
    double t_max = -1;    // <0: 30/β
};

/// Dynamic-programming residual v̂(x) − max over policies of the stopped
/// expectation, per stopping rule. Boundary points short-circuit to an
/// exact zero (the exit time is 0 there).
DPPReport dpp_residual(const ControlProblem& p, const ValueField& v_hat,
                       const std::vector<Point>& points, const std::vector<ControlSpec>& policies,
                       const std::vector<StoppingRule>& rules, double dt, int n_paths,
                       uint64_t seed, const DppOptions& opts = {});

/// Sampled sup of |f| over Ḡ×A_h (feeds default bias constants).
double f_sup_sampled(const ControlProblem& p, int n = 128, uint64_t seed = 0xF00DULL);

}  // namespace exitperron
