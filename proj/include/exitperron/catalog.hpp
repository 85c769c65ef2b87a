#pragma once

#include <optional>
#include <string>
#include <vector>

#include "exitperron/problem.hpp"

namespace exitperron {

/// Built-in problem instances:
///   bm-1d            uncontrolled Brownian exit from (0,1), g(x)=x, β=1
///   drift-control-1d bounded drift control a∈[-1,1] on (0,1), g≡1, β=1
///   const-reward-1d  f≡1, g≡0, β=2 on (0,1) (uncontrolled dynamics)
///   disc-2d          uncontrolled planar Brownian exit from the unit
///                    disc, g=cos θ, β=1
std::vector<std::string> catalog_names();

/// Throws std::invalid_argument for unknown names.
ControlProblem catalog_problem(const std::string& name);

/// Closed-form value functions where one exists (bm-1d, disc-2d).
bool oracle_available(const std::string& name);

/// Oracle value at x. For disc-2d the modified-Bessel series is
/// truncated with remainder below `truncation_tol`.
double oracle_value(const std::string& name, const Point& x, double truncation_tol = 1e-14);

}  // namespace exitperron
