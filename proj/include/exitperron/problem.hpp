#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "exitperron/expr.hpp"
#include "exitperron/geometry.hpp"

namespace exitperron {

/// Compact action box A ⊂ R^k with a per-axis uniform discretization A_h.
/// The supremum over A in the Hamiltonian is taken as a finite max over
/// A_h, enumerated in a fixed order (first axis slowest) so argmaxes are
/// reproducible.
class ControlSet {
public:
    ControlSet(std::vector<double> lo, std::vector<double> hi, std::vector<int> points);

    int dim() const { return static_cast<int>(lo_.size()); }
    int grid_size() const { return static_cast<int>(actions_.size() / lo_.size()); }

    /// Action #i of A_h in enumeration order.
    std::span<const double> action(int i) const {
        size_t k = lo_.size();
        return {actions_.data() + static_cast<size_t>(i) * k, k};
    }

    /// True when `a` lies in the box A (not necessarily on A_h).
    bool contains(std::span<const double> a) const;

    const std::vector<double>& lo() const { return lo_; }
    const std::vector<double>& hi() const { return hi_; }
    const std::vector<int>& points() const { return points_; }

private:
    std::vector<double> lo_, hi_;
    std::vector<int> points_;
    std::vector<double> actions_;  // grid_size × dim, flattened
};

/// A full problem instance: dynamics dX = b(X,a)dt + σ(X,a)dW on the open
/// domain G, reward ∫ e^{-βs} f(X,a) ds + e^{-βσ} g(X_σ) collected at the
/// exit time σ, actions constrained to the compact box A.
///
/// Immutable after construction; evaluation is reentrant and stateless.
struct ControlProblem {
    int dim_state = 0;
    int dim_noise = 0;
    std::vector<Expression> drift;       // length d
    std::vector<Expression> diffusion;   // d×m, row-major
    Expression running_reward;           // f(x,a)
    Expression boundary_payoff;          // g(x), evaluated on ∂G
    double discount = 0;                 // β > 0
    std::shared_ptr<const ControlSet> control_set;
    std::shared_ptr<const DomainGeometry> domain;

    /// Structural invariants (dimensions, β>0, nonempty A_h, positive
    /// volume). Throws std::invalid_argument on violation.
    void check_structure() const;

    void eval_drift(std::span<const double> x, std::span<const double> a,
                    std::span<double> out) const;
    void eval_diffusion(std::span<const double> x, std::span<const double> a,
                        std::span<double> out) const;  // d×m row-major
    /// σσᵀ, d×d row-major.
    void eval_diffusion_sq(std::span<const double> x, std::span<const double> a,
                           std::span<double> out) const;
    double eval_f(std::span<const double> x, std::span<const double> a) const {
        return running_reward.eval(x, a);
    }
    double eval_g(std::span<const double> x) const { return boundary_payoff.eval(x, {}); }

    /// Canonical problem-file text; feeding it back to parse_problem
    /// reproduces an equivalent instance. Basis of the report hash.
    std::string canonical_text() const;
    uint64_t hash() const;
};

/// Parse a problem file (line-oriented `[section]` / `key = value`
/// grammar, see README). Throws ParseError with a line annotation, or
/// std::invalid_argument for semantic violations. The returned problem
/// has all expressions parsed, structure checked, and f/g/b/σ verified
/// finite on a fixed validation sample.
ControlProblem parse_problem(const std::string& text);

/// A C² probe with explicit derivatives:
/// φ(x) = value + grad·(x-x0) + ½ (x-x0)ᵀ hess (x-x0).
struct QuadProbe {
    Point x0;
    double value = 0;
    std::vector<double> grad;   // length d
    std::vector<double> hess;   // d×d row-major, symmetric

    double eval(std::span<const double> x) const;
    /// Gradient of φ at x (grad + hess·(x-x0)).
    std::vector<double> gradient_at(std::span<const double> x) const;
};

struct HamiltonianResult {
    double value = 0;
    int argmax_index = 0;         // index into A_h enumeration
    std::vector<double> argmax;   // the action itself
};

/// H(x, p, M) = max over A_h of [f + b·p + ½Tr(σσᵀM)].
/// Ties broken by enumeration order (first maximizer wins).
HamiltonianResult hamiltonian(const ControlProblem& p, std::span<const double> x,
                              std::span<const double> grad, std::span<const double> hess);

/// (L^a φ)(x) = b(x,a)·φ_x(x) + ½Tr(σ(x,a)σᵀ(x,a)φ_xx).
double generator_apply(const ControlProblem& p, const QuadProbe& phi,
                       std::span<const double> x, std::span<const double> a);

/// Sampled diagnostics for the standing assumptions. Ratios are maxima
/// over the drawn sample only; they cannot certify global Lipschitzness
/// (`certified` stays false by construction).
struct AssumptionReport {
    int n_samples = 0;
    uint64_t seed = 0;
    double lipschitz_b = 0;       // max |b(x,a)-b(y,a)| / |x-y|
    double lipschitz_sigma = 0;   // max |σ(x,a)-σ(y,a)| / |x-y|
    double growth = 0;            // max (|b|+|σ|) / (1+|x|)
    double f_lo = 0, f_hi = 0;    // sampled bounds of f on Ḡ×A
    double g_lo = 0, g_hi = 0;    // sampled bounds of g on ∂G
    double user_K = 0;
    bool violates_K = false;
    bool all_finite = true;
    bool certified = false;       // sampled evidence only
};

/// Sample Ḡ×A_h and ∂G; report Lipschitz/growth ratios and the bounds
/// f̲, f̄, g̲, ḡ that feed the constant sub/supersolutions.
AssumptionReport validate_assumptions(const ControlProblem& p, int n_samples, uint64_t seed,
                                      double user_K = 0);

}  // namespace exitperron
