#include "exitperron/catalog.hpp"

#include <cmath>
#include <stdexcept>

namespace exitperron {

std::vector<std::string> catalog_names() {
    return {"bm-1d", "drift-control-1d", "const-reward-1d", "disc-2d"};
}

ControlProblem catalog_problem(const std::string& name) {
    if (name == "bm-1d") {
        return parse_problem(R"(
[problem]
dim_state = 1
dim_noise = 1
discount = 1

[dynamics]
drift = "0"
diffusion = "1"

[reward]
running = "0"
boundary = "x1"

[control]
dim = 1
lo = "0"
hi = "0"
points = "1"

[domain]
kind = box
lo = "0"
hi = "1"
)");
    }
    if (name == "drift-control-1d") {
        return parse_problem(R"(
[problem]
dim_state = 1
dim_noise = 1
discount = 1

[dynamics]
drift = "a1"
diffusion = "1"

[reward]
running = "0"
boundary = "1"

[control]
dim = 1
lo = "-1"
hi = "1"
points = "21"

[domain]
kind = box
lo = "0"
hi = "1"
)");
    }
    if (name == "const-reward-1d") {
        return parse_problem(R"(
[problem]
dim_state = 1
dim_noise = 1
discount = 2

[dynamics]
drift = "0"
diffusion = "1"

[reward]
running = "1"
boundary = "0"

[control]
dim = 1
lo = "-1"
hi = "1"
points = "3"

[domain]
kind = box
lo = "0"
hi = "1"
)");
    }
    if (name == "disc-2d") {
        return parse_problem(R"(
[problem]
dim_state = 2
dim_noise = 2
discount = 1

[dynamics]
drift = "0; 0"
diffusion = "1, 0; 0, 1"

[reward]
running = "0"
boundary = "x1"

[control]
dim = 1
lo = "0"
hi = "0"
points = "1"

[domain]
kind = ball
center = "0, 0"
radius = 1
)");
    }
    throw std::invalid_argument("unknown catalog problem '" + name + "'");
}

bool oracle_available(const std::string& name) { return name == "bm-1d" || name == "disc-2d"; }

namespace {

/// I_1(z) by its power series; terms fall off factorially, and the
/// remainder after a term below tol/2 is below tol for the z used here.
double bessel_i1(double z, double tol) {
    double half = 0.5 * z;
    double term = half;  // k = 0: (z/2)/(0!·1!)
    double sum = term;
    for (int k = 1; k < 64; ++k) {
        term *= half * half / (static_cast<double>(k) * (k + 1));
        sum += term;
        if (term < tol / 2) break;
    }
    return sum;
}

}  // namespace

double oracle_value(const std::string& name, const Point& x, double truncation_tol) {
    if (name == "bm-1d") {
        // βv = ½v'' with v(0)=0, v(1)=1 → v(x) = sinh(√2 x)/sinh(√2)
        const double s2 = std::sqrt(2.0);
        return std::sinh(s2 * x.at(0)) / std::sinh(s2);
    }
    if (name == "disc-2d") {
        // βv = ½Δv on the unit disc with v = cos θ on the circle:
        // v(r,θ) = cos θ · I₁(√2 r)/I₁(√2)
        const double s2 = std::sqrt(2.0);
        double r = std::sqrt(x.at(0) * x.at(0) + x.at(1) * x.at(1));
        if (r == 0) return 0.0;
        double cos_theta = x[0] / r;
        return cos_theta * bessel_i1(s2 * r, truncation_tol) / bessel_i1(s2, truncation_tol);
    }
    throw std::invalid_argument("no closed-form oracle for problem '" + name + "'");
}

}  // namespace exitperron
