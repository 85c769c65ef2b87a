#include "exitperron/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace exitperron {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string hash_hex(uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

const char* class_name(PointClass c) {
    switch (c) {
        case PointClass::interior: return "interior";
        case PointClass::boundary: return "boundary";
        case PointClass::exterior: return "exterior";
    }
    return "";
}

}  // namespace

nlohmann::json report_envelope(const std::string& kind, const ControlProblem& p, uint64_t seed,
                               nlohmann::json params) {
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["kind"] = kind;
    j["problem_hash"] = hash_hex(p.hash());
    j["seed"] = seed;
    j["params"] = std::move(params);
    return j;
}

nlohmann::json to_json(const ValueEstimate& est) {
    return {{"mean", est.mean},
            {"se", est.se},
            {"n", est.n},
            {"censored_frac", est.censored_fraction},
            {"dt", est.dt},
            {"ci99_lo", est.ci99_lo},
            {"ci99_hi", est.ci99_hi},
            {"truncation_bound", est.truncation_bound}};
}

nlohmann::json to_json(const MartingaleReport& rep) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : rep.records) {
        records.push_back({{"rule", r.rule},
                           {"start_index", r.start_index},
                           {"control", r.control},
                           {"mean", r.mean},
                           {"se", r.se},
                           {"eps_stat", r.eps_stat},
                           {"n", r.n},
                           {"n_censored", r.n_censored},
                           {"pass", r.pass}});
    }
    return {{"direction", rep.direction},
            {"dt", rep.dt},
            {"n_paths", rep.n_paths},
            {"c_bias", rep.c_bias},
            {"rules_tested", rep.rules_tested},
            {"control_description", rep.control_description},
            {"records", records},
            {"pass", rep.pass}};
}

nlohmann::json to_json(const SandwichReport& rep) {
    return {{"min_v_minus_u", rep.min_v_minus_u},
            {"min_w_minus_v", rep.min_w_minus_v},
            {"argmin_v_minus_u", rep.argmin_v_minus_u},
            {"argmin_w_minus_v", rep.argmin_w_minus_v},
            {"max_gap", rep.max_gap},
            {"min_v_minus_u_boundary", rep.min_v_minus_u_boundary},
            {"min_w_minus_v_boundary", rep.min_w_minus_v_boundary},
            {"eps", rep.eps},
            {"pass", rep.pass}};
}

nlohmann::json to_json(const DPPReport& rep) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& pt : rep.points) {
        nlohmann::json rules = nlohmann::json::array();
        for (const auto& r : pt.rules) {
            rules.push_back({{"rule", r.rule},
                             {"bracket", r.bracket},
                             {"se", r.se},
                             {"max_bracket", r.max_bracket},
                             {"argmax_policy", r.argmax_policy},
                             {"residual", r.residual},
                             {"eps", r.eps},
                             {"within", r.within},
                             {"n_censored", r.n_censored}});
        }
        points.push_back(
            {{"x", pt.x}, {"boundary", pt.boundary}, {"v_hat", pt.v_hat}, {"rules", rules}});
    }
    return {{"points", points},
            {"pass", rep.pass},
            {"dt", rep.dt},
            {"n_paths", rep.n_paths}};
}

nlohmann::json to_json(const ViscosityReport& rep) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : rep.records) {
        records.push_back({{"x", r.x},
                           {"node_class", class_name(r.node_class)},
                           {"skipped", r.skipped},
                           {"branch", r.branch},
                           {"sub_residual", r.sub_residual},
                           {"super_residual", r.super_residual},
                           {"sub_pass", r.sub_pass},
                           {"super_pass", r.super_pass}});
    }
    return {{"records", records},
            {"n_skipped", rep.n_skipped},
            {"sub_pass", rep.sub_pass},
            {"super_pass", rep.super_pass},
            {"tol", rep.tol}};
}

nlohmann::json to_json(const SolveStats& stats) {
    return {{"converged", stats.converged},
            {"outer_iterations", stats.outer_iterations},
            {"evaluation_sweeps", stats.evaluation_sweeps},
            {"final_change", stats.final_change},
            {"bellman_residual_sup", stats.bellman_residual_sup},
            {"bellman_residual_mean", stats.bellman_residual_mean}};
}

nlohmann::json to_json(const AssumptionReport& rep) {
    return {{"n_samples", rep.n_samples},
            {"seed", rep.seed},
            {"lipschitz_b", rep.lipschitz_b},
            {"lipschitz_sigma", rep.lipschitz_sigma},
            {"growth", rep.growth},
            {"f_lo", rep.f_lo},
            {"f_hi", rep.f_hi},
            {"g_lo", rep.g_lo},
            {"g_hi", rep.g_hi},
            {"user_K", rep.user_K},
            {"violates_K", rep.violates_K},
            {"all_finite", rep.all_finite},
            {"certified", rep.certified},
            {"note", "ratios are maxima over the drawn sample; global Lipschitz bounds are not certified"}};
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

std::string field_csv(const ValueField& field) {
    const Grid& g = field.grid();
    int d = g.dim();
    std::ostringstream os;
    for (int i = 0; i < d; ++i) os << "x" << i + 1 << ",";
    os << "value,node_class\n";
    Point x(static_cast<size_t>(d));
    for (int n = 0; n < g.size(); ++n) {
        g.node_point(n, x);
        for (int i = 0; i < d; ++i) os << fmt(x[static_cast<size_t>(i)]) << ",";
        os << fmt(field.value(n)) << "," << class_name(g.node_class(n)) << "\n";
    }
    return os.str();
}

void write_field_csv(const std::string& path, const ValueField& field) {
    write_text_file(path, field_csv(field));
}

ValueField read_field_csv(const std::string& path, std::shared_ptr<const Grid> grid,
                          const ControlProblem& p) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read field file " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty field file");
    int d = grid->dim();
    std::vector<double> values(static_cast<size_t>(grid->size()), 0.0);
    int row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (row >= grid->size()) throw std::runtime_error(path + ": more rows than grid nodes");
        std::istringstream ls(line);
        std::string cell;
        for (int i = 0; i < d; ++i) std::getline(ls, cell, ',');  // coordinates (positional)
        if (!std::getline(ls, cell, ','))
            throw std::runtime_error(path + ": missing value column in row " + std::to_string(row));
        values[static_cast<size_t>(row)] = std::stod(cell);
        ++row;
    }
    if (row != grid->size())
        throw std::runtime_error(path + ": expected " + std::to_string(grid->size()) +
                                 " rows, found " + std::to_string(row));
    // re-derive the boundary-consistent flag from g
    bool consistent = true;
    for (int n : grid->boundary_nodes()) {
        double gv = p.eval_g(grid->boundary_point(n));
        if (std::fabs(values[static_cast<size_t>(n)] - gv) > 1e-9) {
            consistent = false;
            break;
        }
    }
    return ValueField(std::move(grid), std::move(values), consistent);
}

std::string policy_csv(const PolicyField& policy) {
    const Grid& g = policy.grid();
    int d = g.dim();
    int k = policy.actions().dim();
    std::ostringstream os;
    for (int i = 0; i < d; ++i) os << "x" << i + 1 << ",";
    for (int i = 0; i < k; ++i) os << "a" << i + 1 << (i + 1 < k ? "," : "");
    os << "\n";
    Point x(static_cast<size_t>(d));
    for (int n = 0; n < g.size(); ++n) {
        g.node_point(n, x);
        for (int i = 0; i < d; ++i) os << fmt(x[static_cast<size_t>(i)]) << ",";
        auto a = policy.actions().action(policy.action_index(n));
        for (int i = 0; i < k; ++i) os << fmt(a[static_cast<size_t>(i)]) << (i + 1 < k ? "," : "");
        os << "\n";
    }
    return os.str();
}

void write_policy_csv(const std::string& path, const PolicyField& policy) {
    write_text_file(path, policy_csv(policy));
}

std::string refine_csv(const RefineTable& table) {
    std::ostringstream os;
    os << "h,diff_sup\n";
    for (const auto& e : table.entries) os << fmt(e.h) << "," << fmt(e.diff_sup) << "\n";
    return os.str();
}

void write_refine_csv(const std::string& path, const RefineTable& table) {
    write_text_file(path, refine_csv(table));
}

std::string batch_csv(const ControlProblem& p, const TrajectoryBatch& batch) {
    std::ostringstream os;
    os << "path_id,t0,exit_time,censored,discounted_running,terminal_payoff\n";
    for (int i = 0; i < batch.n_paths(); ++i) {
        const PathData& pd = batch.path(i);
        double terminal = 0;
        if (!pd.censored) {
            Point bp = p.domain->project_to_boundary(pd.final_state);
            terminal = std::exp(-p.discount * pd.exit_time) * p.eval_g(bp);
        }
        os << i << "," << fmt(pd.t0) << "," << fmt(pd.exit_time) << "," << (pd.censored ? 1 : 0)
           << "," << fmt(pd.discounted_running) << "," << fmt(terminal) << "\n";
    }
    return os.str();
}

void write_batch_csv(const std::string& path, const ControlProblem& p,
                     const TrajectoryBatch& batch) {
    write_text_file(path, batch_csv(p, batch));
}

std::string gnuplot_script(int dim) {
    if (dim == 1) {
        return "set datafile separator ','\n"
               "set key autotitle columnhead\n"
               "plot 'value.csv' using 1:2 with lines title 'value', \\\n"
               "     'oracle.csv' using 1:2 with points pt 6 title 'oracle'\n";
    }
    return "set datafile separator ','\n"
           "set key autotitle columnhead\n"
           "set dgrid3d\n"
           "splot 'value.csv' using 1:2:3 with lines title 'value'\n";
}

}  // namespace exitperron
