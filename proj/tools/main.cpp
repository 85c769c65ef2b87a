#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "exitperron/catalog.hpp"
#include "exitperron/perron.hpp"
#include "exitperron/report.hpp"
#include "exitperron/scheme.hpp"
#include "exitperron/sim.hpp"

namespace fs = std::filesystem;
using namespace exitperron;
using nlohmann::json;

namespace {

// exit codes: 0 pass, 1 usage/config error, 2 non-convergence,
// 3 verification failure
constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kNoConvergence = 2;
constexpr int kVerifyFail = 3;

struct CommonOpts {
    std::string problem;
    std::string file;
    int res = 65;
    double dt = 1e-3;
    int paths = 10000;
    double tmax = -1;
    double tol = 1e-8;
    uint64_t seed = 0;
    std::string out = ".";
};

ControlProblem load_problem(const CommonOpts& c) {
    if (!c.file.empty()) {
        std::ifstream in(c.file);
        if (!in) throw std::runtime_error("cannot open problem file " + c.file);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_problem(ss.str());
    }
    if (c.problem.empty()) throw std::runtime_error("one of --problem or --file is required");
    return catalog_problem(c.problem);
}

std::string out_path(const CommonOpts& c, const std::string& name) {
    fs::create_directories(c.out);
    return (fs::path(c.out) / name).string();
}

std::vector<double> parse_point(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

// the output directory is not echoed: it does not shape the results,
// and outputs must be byte-comparable across locations
json common_params(const CommonOpts& c) {
    return {{"problem", c.problem}, {"file", c.file},   {"res", c.res},
            {"dt", c.dt},           {"paths", c.paths}, {"tmax", c.tmax},
            {"tol", c.tol}};
}

double default_tmax(const ControlProblem& p, double requested) {
    return requested > 0 ? requested : 30.0 / p.discount;
}

/// Interior points along the first axis at the given fractions of its
/// bounding-box extent (other coordinates at the domain center).
std::vector<Point> axis_points(const ControlProblem& p, const std::vector<double>& fractions) {
    std::vector<double> lo, hi;
    p.domain->bounding_box(lo, hi);
    Point c = p.domain->center();
    std::vector<Point> pts;
    for (double f : fractions) {
        Point x = c;
        x[0] = lo[0] + f * (hi[0] - lo[0]);
        if (p.domain->classify(x) == PointClass::interior) pts.push_back(x);
    }
    return pts;
}

struct SolveArtifacts {
    std::shared_ptr<const Grid> grid;
    std::shared_ptr<const Scheme> scheme;
    SolveResult result;
};

SolveArtifacts run_solve(const ControlProblem& p, int res, double tol) {
    auto problem = std::make_shared<ControlProblem>(p);
    std::vector<int> per_axis(static_cast<size_t>(p.dim_state), res);
    auto grid = build_grid(*p.domain, per_axis);
    auto scheme = discretize(problem, grid);
    SolveResult sol = solve_policy_iteration(*scheme, tol, 200);
    return {grid, scheme, std::move(sol)};
}

int cmd_solve(const CommonOpts& c, bool gnuplot) {
    ControlProblem p = load_problem(c);
    SolveArtifacts art = run_solve(p, c.res, c.tol);

    write_field_csv(out_path(c, "value.csv"), art.result.value);
    write_policy_csv(out_path(c, "policy.csv"), *art.result.policy);

    AssumptionReport bounds = validate_assumptions(p, 512, c.seed);
    double v_min = 0, v_max = 0;
    bool first = true;
    for (int n = 0; n < art.grid->size(); ++n) {
        if (art.grid->node_class(n) == PointClass::exterior) continue;
        double v = art.result.value.value(n);
        if (first || v < v_min) v_min = v;
        if (first || v > v_max) v_max = v;
        first = false;
    }
    json j = report_envelope("solve_residual", p, c.seed, common_params(c));
    j["stats"] = to_json(art.result.stats);
    j["value_min"] = v_min;
    j["value_max"] = v_max;
    j["assumptions"] = to_json(bounds);
    j["constant_bounds"] = {{"lo", std::fmin(bounds.f_lo / p.discount, bounds.g_lo)},
                            {"hi", std::fmax(bounds.f_hi / p.discount, bounds.g_hi)}};
    write_json_file(out_path(c, "residual.json"), j);
    if (gnuplot) write_text_file(out_path(c, "plot.gnuplot"), gnuplot_script(p.dim_state));

    return art.result.stats.converged ? kOk : kNoConvergence;
}

int cmd_simulate(const CommonOpts& c, const std::string& x0_text, const std::string& action_text) {
    ControlProblem p = load_problem(c);
    Point x0 = x0_text.empty() ? p.domain->center() : parse_point(x0_text);
    std::vector<double> action;
    if (action_text.empty()) {
        auto a = p.control_set->action(0);
        action.assign(a.begin(), a.end());
    } else {
        action = parse_point(action_text);
    }
    double tmax = default_tmax(p, c.tmax);
    TrajectoryBatch batch = simulate(p, RandomizedStart::fixed(x0),
                                     ControlSpec::constant(action), c.dt, c.paths, tmax, c.seed,
                                     false);
    write_batch_csv(out_path(c, "batch.csv"), p, batch);
    ValueEstimate est = estimate_from_batch(p, batch, tmax);
    json j = report_envelope("estimate", p, c.seed, common_params(c));
    j["params"]["x0"] = x0;
    j["params"]["action"] = action;
    j["estimate"] = to_json(est);
    write_json_file(out_path(c, "estimate.json"), j);
    return kOk;
}

int cmd_oracle(const CommonOpts& c) {
    ControlProblem p = load_problem(c);
    if (c.problem.empty() || !oracle_available(c.problem)) {
        std::cerr << "error: no closed-form oracle registered for this problem\n";
        return kUsage;
    }
    std::vector<int> per_axis(static_cast<size_t>(p.dim_state), c.res);
    auto grid = build_grid(*p.domain, per_axis);
    std::ostringstream os;
    for (int i = 0; i < p.dim_state; ++i) os << "x" << i + 1 << ",";
    os << "value\n";
    Point x(static_cast<size_t>(p.dim_state));
    char buf[40];
    for (int n = 0; n < grid->size(); ++n) {
        if (grid->node_class(n) == PointClass::exterior) continue;
        grid->node_point(n, x);
        for (int i = 0; i < p.dim_state; ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", x[static_cast<size_t>(i)]);
            os << buf << ",";
        }
        std::snprintf(buf, sizeof(buf), "%.17g", oracle_value(c.problem, x));
        os << buf << "\n";
    }
    write_text_file(out_path(c, "oracle.csv"), os.str());
    return kOk;
}

int cmd_refine(const CommonOpts& c, const std::string& res_list) {
    ControlProblem p = load_problem(c);
    std::vector<int> resolutions;
    for (double v : parse_point(res_list.empty() ? "17,33,65,129" : res_list))
        resolutions.push_back(static_cast<int>(v));
    auto problem = std::make_shared<ControlProblem>(p);
    RefineTable table = refine_study(problem, resolutions, c.tol, 200);
    write_refine_csv(out_path(c, "refine.csv"), table);
    json j = report_envelope("refine", p, c.seed, common_params(c));
    j["params"]["resolutions"] = resolutions;
    j["monotone"] = table.monotone;
    json entries = json::array();
    for (const auto& e : table.entries)
        entries.push_back({{"resolution", e.resolution}, {"h", e.h}, {"diff_sup", e.diff_sup}});
    j["entries"] = entries;
    write_json_file(out_path(c, "refine.json"), j);
    return kOk;
}

int cmd_verify(const CommonOpts& c, const std::string& direction, const std::string& field_file,
               const std::string& field_lo_file, const std::string& field_hi_file, double eps,
               double tol_visc) {
    ControlProblem p = load_problem(c);
    SolveArtifacts art = run_solve(p, c.res, c.tol);
    AssumptionReport bounds = validate_assumptions(p, 512, c.seed);
    double tmax = default_tmax(p, c.tmax);

    auto load_field = [&](const std::string& path) {
        return read_field_csv(path, art.grid, p);
    };

    std::vector<std::pair<double, Point>> starts;
    for (const auto& x : axis_points(p, {0.25, 0.5, 0.75})) starts.emplace_back(0.0, x);
    if (starts.empty()) starts.emplace_back(0.0, p.domain->center());
    std::vector<StoppingRule> rules = default_stopping_rules(p);

    MartingaleOptions mopt;
    mopt.t_max = tmax;

    if (direction == "sub") {
        ValueField u = field_file.empty() ? constant_subsolution(p, art.grid, bounds)
                                          : load_field(field_file);
        ControlBuilder builder = [&](double, const Point&) {
            return ControlSpec::markov(art.result.policy);
        };
        MartingaleReport rep =
            test_submartingale(p, u, builder, starts, c.dt, c.paths, rules, c.seed, mopt);
        json j = report_envelope("verify_sub", p, c.seed, common_params(c));
        j["report"] = to_json(rep);
        write_json_file(out_path(c, "sub.json"), j);
        return rep.pass ? kOk : kVerifyFail;
    }
    if (direction == "super") {
        ValueField w = field_file.empty() ? constant_supersolution(p, art.grid, bounds)
                                          : load_field(field_file);
        std::vector<ControlSpec> ctrls;
        const ControlSet& A = *p.control_set;
        auto push_const = [&](int idx) {
            auto a = A.action(idx);
            ctrls.push_back(ControlSpec::constant({a.begin(), a.end()}));
        };
        push_const(0);
        if (A.grid_size() > 1) push_const(A.grid_size() - 1);
        if (A.grid_size() > 2) push_const(A.grid_size() / 2);
        ctrls.push_back(ControlSpec::markov(art.result.policy));
        MartingaleReport rep =
            test_supermartingale(p, w, ctrls, starts, c.dt, c.paths, rules, c.seed, mopt);
        json j = report_envelope("verify_super", p, c.seed, common_params(c));
        j["report"] = to_json(rep);
        write_json_file(out_path(c, "super.json"), j);
        return rep.pass ? kOk : kVerifyFail;
    }
    if (direction == "sandwich") {
        ValueField u = field_lo_file.empty() ? constant_subsolution(p, art.grid, bounds)
                                             : load_field(field_lo_file);
        ValueField w = field_hi_file.empty() ? constant_supersolution(p, art.grid, bounds)
                                             : load_field(field_hi_file);
        SandwichReport rep = check_sandwich(u, art.result.value, w, eps);
        json j = report_envelope("verify_sandwich", p, c.seed, common_params(c));
        j["params"]["eps"] = eps;
        j["report"] = to_json(rep);
        write_json_file(out_path(c, "sandwich.json"), j);
        return rep.pass ? kOk : kVerifyFail;
    }
    if (direction == "dpp") {
        std::vector<Point> pts = axis_points(p, {0.1, 0.3, 0.5, 0.7, 0.9});
        std::vector<double> lo, hi;
        p.domain->bounding_box(lo, hi);
        Point b0 = p.domain->center();
        b0[0] = lo[0];
        pts.push_back(p.domain->project_to_boundary(b0));
        std::vector<ControlSpec> policies;
        policies.push_back(ControlSpec::markov(art.result.policy));
        auto a0 = p.control_set->action(0);
        policies.push_back(ControlSpec::constant({a0.begin(), a0.end()}));
        DppOptions dopt;
        dopt.t_max = tmax;
        DPPReport rep =
            dpp_residual(p, art.result.value, pts, policies, rules, c.dt, c.paths, c.seed, dopt);
        json j = report_envelope("verify_dpp", p, c.seed, common_params(c));
        j["report"] = to_json(rep);
        write_json_file(out_path(c, "dpp.json"), j);
        return rep.pass ? kOk : kVerifyFail;
    }
    if (direction == "viscosity") {
        ValueField field = field_file.empty() ? art.result.value : load_field(field_file);
        std::vector<Point> pts;
        for (int n : art.grid->interior_nodes()) pts.push_back(art.grid->node_point(n));
        for (int n : art.grid->boundary_nodes()) pts.push_back(art.grid->node_point(n));
        ViscosityOptions vopt;
        vopt.tol = tol_visc;
        ViscosityReport rep = viscosity_probe(field, p, pts, vopt);
        json j = report_envelope("verify_viscosity", p, c.seed, common_params(c));
        j["params"]["tol_visc"] = tol_visc;
        j["report"] = to_json(rep);
        write_json_file(out_path(c, "viscosity.json"), j);
        return rep.sub_pass && rep.super_pass ? kOk : kVerifyFail;
    }
    std::cerr << "error: unknown verify direction '" << direction << "'\n";
    return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stochastic exit-time control: HJB solve, SDE simulation, and "
                 "stochastic-Perron verification"};
    app.require_subcommand(1);

    CommonOpts c;
    bool gnuplot = false;
    std::string x0_text, action_text, res_list;
    std::string direction, field_file, field_lo_file, field_hi_file;
    double eps = 1e-2, tol_visc = 1e-3;

    auto add_common = [&](CLI::App* cmd, bool needs_seed) {
        cmd->add_option("--problem", c.problem, "catalog problem name");
        cmd->add_option("--file", c.file, "problem file path");
        cmd->add_option("--res", c.res, "grid resolution per axis");
        cmd->add_option("--dt", c.dt, "simulation time step");
        cmd->add_option("--paths", c.paths, "Monte Carlo path count");
        cmd->add_option("--tmax", c.tmax, "censoring horizon");
        cmd->add_option("--tol", c.tol, "solver tolerance");
        cmd->add_option("--out", c.out, "output directory");
        auto* seed = cmd->add_option("--seed", c.seed, "RNG seed (no wall-clock default)");
        if (needs_seed) seed->required();
    };

    CLI::App* solve = app.add_subcommand("solve", "solve the HJB Dirichlet problem on a grid");
    add_common(solve, true);
    solve->add_flag("--gnuplot", gnuplot, "also write a gnuplot script");

    CLI::App* simulate = app.add_subcommand("simulate", "simulate controlled paths and estimate J");
    add_common(simulate, true);
    simulate->add_option("--x0", x0_text, "start point (comma-separated)");
    simulate->add_option("--action", action_text, "constant action (comma-separated)");

    CLI::App* verify = app.add_subcommand("verify", "run a stochastic-Perron verification");
    verify->add_option("direction", direction, "sub|super|sandwich|dpp|viscosity")->required();
    add_common(verify, true);
    verify->add_option("--field", field_file, "candidate field CSV");
    verify->add_option("--field-lo", field_lo_file, "lower field CSV (sandwich)");
    verify->add_option("--field-hi", field_hi_file, "upper field CSV (sandwich)");
    verify->add_option("--eps", eps, "sandwich tolerance");
    verify->add_option("--tol-visc", tol_visc, "viscosity probe tolerance");

    CLI::App* oracle = app.add_subcommand("oracle", "write the closed-form solution when known");
    add_common(oracle, false);

    CLI::App* refine = app.add_subcommand("refine", "grid refinement study");
    add_common(refine, true);
    refine->add_option("--res-list", res_list, "comma-separated nested resolutions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;  // config errors are exit 1
    }

    try {
        if (solve->parsed()) return cmd_solve(c, gnuplot);
        if (simulate->parsed()) return cmd_simulate(c, x0_text, action_text);
        if (verify->parsed())
            return cmd_verify(c, direction, field_file, field_lo_file, field_hi_file, eps,
                              tol_visc);
        if (oracle->parsed()) return cmd_oracle(c);
        if (refine->parsed()) return cmd_refine(c, res_list);
    } catch (const BoundaryViolation& e) {
        std::cerr << "verification failure: " << e.what() << "\n";
        return kVerifyFail;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
