#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "exitperron/catalog.hpp"
#include "exitperron/perron.hpp"
#include "exitperron/scheme.hpp"
#include "exitperron/sim.hpp"

namespace py = pybind11;
using namespace exitperron;

namespace {

struct Solution {
    std::shared_ptr<const Grid> grid;
    ValueField value;
    std::shared_ptr<const PolicyField> policy;
    SolveStats stats;
};

Solution solve_impl(const ControlProblem& p, int res, double tol, int max_outer) {
    auto problem = std::make_shared<ControlProblem>(p);
    std::vector<int> per_axis(static_cast<size_t>(p.dim_state), res);
    auto grid = build_grid(*p.domain, per_axis);
    auto scheme = discretize(problem, grid);
    SolveResult sol = solve_policy_iteration(*scheme, tol, max_outer);
    return Solution{grid, std::move(sol.value), sol.policy, sol.stats};
}

const char* class_name(PointClass c) {
    switch (c) {
        case PointClass::interior: return "interior";
        case PointClass::boundary: return "boundary";
        case PointClass::exterior: return "exterior";
    }
    return "";
}

py::dict estimate_dict(const ValueEstimate& est) {
    py::dict d;
    d["mean"] = est.mean;
    d["se"] = est.se;
    d["n"] = est.n;
    d["censored_frac"] = est.censored_fraction;
    d["dt"] = est.dt;
    d["ci99_lo"] = est.ci99_lo;
    d["ci99_hi"] = est.ci99_hi;
    d["truncation_bound"] = est.truncation_bound;
    return d;
}

}  // namespace

PYBIND11_MODULE(_exitperron, m) {
    m.doc() = "stochastic exit-time control: HJB grid solver, SDE simulation, and "
              "stochastic-Perron verification";

    py::register_exception<ParseError>(m, "ParseError");
    py::register_exception<BoundaryViolation>(m, "BoundaryViolation");

    py::class_<ControlProblem>(m, "Problem")
        .def_static("from_catalog", &catalog_problem, py::arg("name"))
        .def_static("from_text", &parse_problem, py::arg("text"))
        .def_readonly("dim_state", &ControlProblem::dim_state)
        .def_readonly("dim_noise", &ControlProblem::dim_noise)
        .def_readonly("discount", &ControlProblem::discount)
        .def_property_readonly("n_actions",
                               [](const ControlProblem& p) { return p.control_set->grid_size(); })
        .def("hash", [](const ControlProblem& p) { return p.hash(); })
        .def("canonical_text", &ControlProblem::canonical_text)
        .def(
            "hamiltonian",
            [](const ControlProblem& p, const Point& x, const std::vector<double>& grad,
               const std::vector<double>& hess) {
                HamiltonianResult h = hamiltonian(p, x, grad, hess);
                return py::make_tuple(h.value, h.argmax);
            },
            py::arg("x"), py::arg("grad"), py::arg("hess"))
        .def(
            "validate",
            [](const ControlProblem& p, int n_samples, uint64_t seed) {
                AssumptionReport r = validate_assumptions(p, n_samples, seed);
                py::dict d;
                d["lipschitz_b"] = r.lipschitz_b;
                d["lipschitz_sigma"] = r.lipschitz_sigma;
                d["growth"] = r.growth;
                d["f_lo"] = r.f_lo;
                d["f_hi"] = r.f_hi;
                d["g_lo"] = r.g_lo;
                d["g_hi"] = r.g_hi;
                d["all_finite"] = r.all_finite;
                d["certified"] = r.certified;
                return d;
            },
            py::arg("n_samples") = 256, py::arg("seed") = 1);

    py::class_<Solution>(m, "Solution")
        .def_property_readonly("converged", [](const Solution& s) { return s.stats.converged; })
        .def_property_readonly("iterations",
                               [](const Solution& s) { return s.stats.outer_iterations; })
        .def_property_readonly("bellman_residual_sup",
                               [](const Solution& s) { return s.stats.bellman_residual_sup; })
        .def_property_readonly("values",
                               [](const Solution& s) {
                                   return std::vector<double>(s.value.values().begin(),
                                                              s.value.values().end());
                               })
        .def_property_readonly("coords",
                               [](const Solution& s) {
                                   std::vector<Point> pts;
                                   for (int n = 0; n < s.grid->size(); ++n)
                                       pts.push_back(s.grid->node_point(n));
                                   return pts;
                               })
        .def_property_readonly("node_classes",
                               [](const Solution& s) {
                                   std::vector<std::string> cls;
                                   for (int n = 0; n < s.grid->size(); ++n)
                                       cls.emplace_back(class_name(s.grid->node_class(n)));
                                   return cls;
                               })
        .def("interpolate",
             [](const Solution& s, const Point& x) { return s.value.interpolate(x); })
        .def("policy_action",
             [](const Solution& s, const Point& x) {
                 auto a = s.policy->action_at(x);
                 return std::vector<double>(a.begin(), a.end());
             });

    m.def("catalog_names", &catalog_names);
    m.def("oracle_available", &oracle_available, py::arg("name"));
    m.def("oracle_value", &oracle_value, py::arg("name"), py::arg("x"),
          py::arg("truncation_tol") = 1e-14);

    m.def("solve", &solve_impl, py::arg("problem"), py::arg("res"), py::arg("tol") = 1e-8,
          py::arg("max_outer") = 200);

    m.def(
        "estimate_value",
        [](const ControlProblem& p, const Point& x, const std::vector<double>& action, double dt,
           int paths, double tmax, uint64_t seed) {
            return estimate_dict(
                estimate_value(p, x, ControlSpec::constant(action), dt, paths, tmax, seed));
        },
        py::arg("problem"), py::arg("x"), py::arg("action"), py::arg("dt") = 1e-3,
        py::arg("paths") = 10000, py::arg("tmax") = 30.0, py::arg("seed") = 0);

    m.def(
        "estimate_value_optimal",
        [](const ControlProblem& p, const Solution& sol, const Point& x, double dt, int paths,
           double tmax, uint64_t seed) {
            return estimate_dict(
                estimate_value(p, x, ControlSpec::markov(sol.policy), dt, paths, tmax, seed));
        },
        py::arg("problem"), py::arg("solution"), py::arg("x"), py::arg("dt") = 1e-3,
        py::arg("paths") = 10000, py::arg("tmax") = 30.0, py::arg("seed") = 0);

    m.def(
        "verify_constant_certificates",
        [](const ControlProblem& p, int res, double dt, int paths, uint64_t seed) {
            std::vector<int> per_axis(static_cast<size_t>(p.dim_state), res);
            auto grid = build_grid(*p.domain, per_axis);
            AssumptionReport bounds = validate_assumptions(p, 512, seed);
            ValueField u = constant_subsolution(p, grid, bounds);
            ValueField w = constant_supersolution(p, grid, bounds);
            auto a0 = p.control_set->action(0);
            std::vector<double> action(a0.begin(), a0.end());
            std::vector<std::pair<double, Point>> starts{{0.0, p.domain->center()}};
            auto rules = default_stopping_rules(p);
            MartingaleOptions opts;
            opts.t_max = 30.0 / p.discount;
            ControlBuilder builder = [action](double, const Point&) {
                return ControlSpec::constant(action);
            };
            MartingaleReport sub =
                test_submartingale(p, u, builder, starts, dt, paths, rules, seed, opts);
            MartingaleReport super = test_supermartingale(
                p, w, {ControlSpec::constant(action)}, starts, dt, paths, rules, seed + 1, opts);
            py::dict d;
            d["sub_pass"] = sub.pass;
            d["super_pass"] = super.pass;
            d["sub_value"] = u.value(0);
            d["super_value"] = w.value(0);
            return d;
        },
        py::arg("problem"), py::arg("res") = 33, py::arg("dt") = 1e-3, py::arg("paths") = 2000,
        py::arg("seed") = 1);

    m.def(
        "refine_study",
        [](const ControlProblem& p, const std::vector<int>& resolutions, double tol) {
            auto problem = std::make_shared<ControlProblem>(p);
            RefineTable t = refine_study(problem, resolutions, tol, 200);
            std::vector<py::dict> rows;
            for (const auto& e : t.entries) {
                py::dict d;
                d["resolution"] = e.resolution;
                d["h"] = e.h;
                d["diff_sup"] = e.diff_sup;
                rows.push_back(d);
            }
            py::dict out;
            out["entries"] = rows;
            out["monotone"] = t.monotone;
            return out;
        },
        py::arg("problem"), py::arg("resolutions"), py::arg("tol") = 1e-8);
}
