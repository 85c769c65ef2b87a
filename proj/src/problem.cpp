#include "exitperron/problem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "exitperron/rng.hpp"

namespace exitperron {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

ControlSet::ControlSet(std::vector<double> lo, std::vector<double> hi, std::vector<int> points)
    : lo_(std::move(lo)), hi_(std::move(hi)), points_(std::move(points)) {
    if (lo_.empty() || lo_.size() != hi_.size() || lo_.size() != points_.size())
        throw std::invalid_argument("control set: lo/hi/points must be nonempty and of equal length");
    size_t k = lo_.size();
    size_t total = 1;
    for (size_t i = 0; i < k; ++i) {
        if (!(lo_[i] <= hi_[i]))
            throw std::invalid_argument("control set: lo must be <= hi per axis");
        if (points_[i] < 1)
            throw std::invalid_argument("control set: points must be >= 1 per axis");
        total *= static_cast<size_t>(points_[i]);
    }
    // enumerate A_h, first axis slowest
    actions_.resize(total * k);
    std::vector<int> idx(k, 0);
    for (size_t n = 0; n < total; ++n) {
        for (size_t i = 0; i < k; ++i) {
            int np = points_[i];
            double v = np == 1 ? 0.5 * (lo_[i] + hi_[i])
                               : lo_[i] + (hi_[i] - lo_[i]) * idx[i] / (np - 1);
            actions_[n * k + i] = v;
        }
        for (size_t i = k; i-- > 0;) {
            if (++idx[i] < points_[i]) break;
            idx[i] = 0;
        }
    }
}

bool ControlSet::contains(std::span<const double> a) const {
    if (a.size() != lo_.size()) return false;
    for (size_t i = 0; i < lo_.size(); ++i)
        if (a[i] < lo_[i] - 1e-12 || a[i] > hi_[i] + 1e-12) return false;
    return true;
}

void ControlProblem::check_structure() const {
    if (dim_state < 1) throw std::invalid_argument("dim_state must be >= 1");
    if (dim_noise < 1) throw std::invalid_argument("dim_noise must be >= 1");
    if (!(discount > 0)) throw std::invalid_argument("discount must be positive");
    if (drift.size() != static_cast<size_t>(dim_state))
        throw std::invalid_argument("drift must have dim_state components");
    if (diffusion.size() != static_cast<size_t>(dim_state) * static_cast<size_t>(dim_noise))
        throw std::invalid_argument("diffusion must be dim_state x dim_noise");
    if (!control_set) throw std::invalid_argument("missing control set");
    if (!domain) throw std::invalid_argument("missing domain");
    if (domain->dim() != dim_state)
        throw std::invalid_argument("domain dimension must equal dim_state");
    if (control_set->grid_size() < 1)
        throw std::invalid_argument("control discretization A_h must be nonempty");
}

void ControlProblem::eval_drift(std::span<const double> x, std::span<const double> a,
                                std::span<double> out) const {
    for (int i = 0; i < dim_state; ++i) out[i] = drift[static_cast<size_t>(i)].eval(x, a);
}

void ControlProblem::eval_diffusion(std::span<const double> x, std::span<const double> a,
                                    std::span<double> out) const {
    size_t n = diffusion.size();
    for (size_t i = 0; i < n; ++i) out[i] = diffusion[i].eval(x, a);
}

void ControlProblem::eval_diffusion_sq(std::span<const double> x, std::span<const double> a,
                                       std::span<double> out) const {
    int d = dim_state, m = dim_noise;
    std::vector<double> sig(static_cast<size_t>(d) * m);
    eval_diffusion(x, a, sig);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            double s = 0;
            for (int l = 0; l < m; ++l) s += sig[i * m + l] * sig[j * m + l];
            out[i * d + j] = s;
        }
}

std::string ControlProblem::canonical_text() const {
    std::ostringstream os;
    os << "[problem]\n";
    os << "dim_state = " << dim_state << "\n";
    os << "dim_noise = " << dim_noise << "\n";
    os << "discount = " << fmt(discount) << "\n";
    os << "\n[dynamics]\n";
    os << "drift = \"";
    for (int i = 0; i < dim_state; ++i) {
        if (i) os << "; ";
        os << drift[static_cast<size_t>(i)].print();
    }
    os << "\"\n";
    os << "diffusion = \"";
    for (int i = 0; i < dim_state; ++i) {
        if (i) os << "; ";
        for (int j = 0; j < dim_noise; ++j) {
            if (j) os << ", ";
            os << diffusion[static_cast<size_t>(i * dim_noise + j)].print();
        }
    }
    os << "\"\n";
    os << "\n[reward]\n";
    os << "running = \"" << running_reward.print() << "\"\n";
    os << "boundary = \"" << boundary_payoff.print() << "\"\n";
    os << "\n[control]\n";
    os << "dim = " << control_set->dim() << "\n";
    auto join = [&](const auto& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            if constexpr (std::is_same_v<std::decay_t<decltype(v[0])>, double>)
                s += fmt(v[i]);
            else
                s += std::to_string(v[i]);
        }
        return s;
    };
    os << "lo = \"" << join(control_set->lo()) << "\"\n";
    os << "hi = \"" << join(control_set->hi()) << "\"\n";
    os << "points = \"" << join(control_set->points()) << "\"\n";
    os << "\n[domain]\n";
    if (domain->kind() == DomainGeometry::Kind::box) {
        os << "kind = box\n";
        os << "lo = \"" << join(domain->box_lo()) << "\"\n";
        os << "hi = \"" << join(domain->box_hi()) << "\"\n";
    } else {
        os << "kind = ball\n";
        os << "center = \"" << join(domain->ball_center()) << "\"\n";
        os << "radius = " << fmt(domain->ball_radius()) << "\n";
    }
    return os.str();
}

uint64_t ControlProblem::hash() const {
    // FNV-1a over the canonical text
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : canonical_text()) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// problem-file parsing

namespace {

struct FileEntry {
    std::string value;
    int line = 0;
};

using SectionMap = std::map<std::string, std::map<std::string, FileEntry>>;

[[noreturn]] void fail_line(int line, const std::string& msg) {
    throw ParseError("problem file: line " + std::to_string(line) + ": " + msg);
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

SectionMap read_sections(const std::string& text) {
    SectionMap sections;
    std::istringstream is(text);
    std::string line;
    std::string current;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[') {
            if (t.back() != ']') fail_line(lineno, "malformed section header");
            current = trim(t.substr(1, t.size() - 2));
            if (current.empty()) fail_line(lineno, "empty section name");
            sections[current];
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos) fail_line(lineno, "expected 'key = value'");
        if (current.empty()) fail_line(lineno, "key outside of any [section]");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key.empty()) fail_line(lineno, "empty key");
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            val = val.substr(1, val.size() - 2);
        sections[current][key] = {val, lineno};
    }
    return sections;
}

const FileEntry& require(const SectionMap& s, const std::string& sec, const std::string& key) {
    auto si = s.find(sec);
    if (si == s.end()) throw ParseError("problem file: missing section [" + sec + "]");
    auto ki = si->second.find(key);
    if (ki == si->second.end())
        throw ParseError("problem file: missing field '" + key + "' in [" + sec + "]");
    return ki->second;
}

double parse_num(const FileEntry& e, const std::string& what) {
    try {
        size_t used = 0;
        double v = std::stod(e.value, &used);
        if (used != e.value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        fail_line(e.line, "malformed number for " + what + ": '" + e.value + "'");
    }
}

int parse_int(const FileEntry& e, const std::string& what) {
    double v = parse_num(e, what);
    int i = static_cast<int>(v);
    if (static_cast<double>(i) != v) fail_line(e.line, what + " must be an integer");
    return i;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::vector<double> parse_num_list(const FileEntry& e, const std::string& what) {
    std::vector<double> out;
    for (const auto& tok : split(e.value, ',')) {
        if (tok.empty()) fail_line(e.line, "empty entry in " + what);
        try {
            size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            fail_line(e.line, "malformed number '" + tok + "' in " + what);
        }
    }
    return out;
}

Expression parse_expr_entry(const std::string& text, int d, int k, int line,
                            const std::string& what) {
    try {
        return Expression::parse(text, d, k);
    } catch (const ParseError& err) {
        fail_line(line, what + ": " + err.what());
    }
}

}  // namespace

ControlProblem parse_problem(const std::string& text) {
    SectionMap s = read_sections(text);

    ControlProblem p;
    p.dim_state = parse_int(require(s, "problem", "dim_state"), "dim_state");
    p.dim_noise = parse_int(require(s, "problem", "dim_noise"), "dim_noise");
    p.discount = parse_num(require(s, "problem", "discount"), "discount");
    if (p.dim_state < 1) throw std::invalid_argument("dim_state must be >= 1");
    if (p.dim_noise < 1) throw std::invalid_argument("dim_noise must be >= 1");
    if (!(p.discount > 0)) throw std::invalid_argument("discount must be positive");

    int d = p.dim_state, m = p.dim_noise;

    const FileEntry& ctrl_dim_e = require(s, "control", "dim");
    int k = parse_int(ctrl_dim_e, "control dim");
    if (k < 1) fail_line(ctrl_dim_e.line, "control dim must be >= 1");

    const FileEntry& drift_e = require(s, "dynamics", "drift");
    auto drift_parts = split(drift_e.value, ';');
    if (drift_parts.size() != static_cast<size_t>(d))
        fail_line(drift_e.line, "drift must have dim_state = " + std::to_string(d) + " components");
    for (const auto& part : drift_parts)
        p.drift.push_back(parse_expr_entry(part, d, k, drift_e.line, "drift"));

    const FileEntry& diff_e = require(s, "dynamics", "diffusion");
    auto rows = split(diff_e.value, ';');
    if (rows.size() != static_cast<size_t>(d))
        fail_line(diff_e.line, "diffusion must have dim_state = " + std::to_string(d) + " rows");
    for (const auto& row : rows) {
        auto cells = split(row, ',');
        if (cells.size() != static_cast<size_t>(m))
            fail_line(diff_e.line,
                      "diffusion rows must have dim_noise = " + std::to_string(m) + " entries");
        for (const auto& cell : cells)
            p.diffusion.push_back(parse_expr_entry(cell, d, k, diff_e.line, "diffusion"));
    }

    const FileEntry& run_e = require(s, "reward", "running");
    p.running_reward = parse_expr_entry(run_e.value, d, k, run_e.line, "running reward");
    const FileEntry& bnd_e = require(s, "reward", "boundary");
    p.boundary_payoff = parse_expr_entry(bnd_e.value, d, 0, bnd_e.line, "boundary payoff");

    std::vector<double> clo = parse_num_list(require(s, "control", "lo"), "control lo");
    std::vector<double> chi = parse_num_list(require(s, "control", "hi"), "control hi");
    const FileEntry& pts_e = require(s, "control", "points");
    std::vector<double> cpts_d = parse_num_list(pts_e, "control points");
    if (clo.size() != static_cast<size_t>(k) || chi.size() != static_cast<size_t>(k) ||
        cpts_d.size() != static_cast<size_t>(k))
        throw std::invalid_argument("control lo/hi/points must each have 'dim' entries");
    std::vector<int> cpts;
    for (double v : cpts_d) {
        if (v != std::floor(v) || v < 1) fail_line(pts_e.line, "control points must be integers >= 1");
        cpts.push_back(static_cast<int>(v));
    }
    for (int i = 0; i < k; ++i)
        if (!(clo[static_cast<size_t>(i)] <= chi[static_cast<size_t>(i)]))
            throw std::invalid_argument("control set must be a compact box (lo <= hi)");
    p.control_set = std::make_shared<ControlSet>(clo, chi, cpts);

    const FileEntry& kind_e = require(s, "domain", "kind");
    if (kind_e.value == "box") {
        std::vector<double> dlo = parse_num_list(require(s, "domain", "lo"), "domain lo");
        std::vector<double> dhi = parse_num_list(require(s, "domain", "hi"), "domain hi");
        if (dlo.size() != static_cast<size_t>(d) || dhi.size() != static_cast<size_t>(d))
            throw std::invalid_argument("domain lo/hi must have dim_state entries");
        p.domain = std::make_shared<DomainGeometry>(DomainGeometry::make_box(dlo, dhi));
    } else if (kind_e.value == "ball") {
        std::vector<double> c = parse_num_list(require(s, "domain", "center"), "domain center");
        double r = parse_num(require(s, "domain", "radius"), "domain radius");
        if (c.size() != static_cast<size_t>(d))
            throw std::invalid_argument("domain center must have dim_state entries");
        p.domain = std::make_shared<DomainGeometry>(DomainGeometry::make_ball(c, r));
    } else {
        fail_line(kind_e.line, "domain kind must be 'box' or 'ball'");
    }

    p.check_structure();

    // finite-values spot check on a fixed sample of Ḡ×A_h and ∂G
    AssumptionReport rep = validate_assumptions(p, 64, 0xC0FFEEULL);
    if (!rep.all_finite)
        throw std::invalid_argument("coefficients must evaluate to finite values on the domain");
    return p;
}

// ---------------------------------------------------------------------------

double QuadProbe::eval(std::span<const double> x) const {
    size_t d = x0.size();
    double v = value;
    for (size_t i = 0; i < d; ++i) {
        double dx_i = x[i] - x0[i];
        v += grad[i] * dx_i;
        for (size_t j = 0; j < d; ++j) v += 0.5 * hess[i * d + j] * dx_i * (x[j] - x0[j]);
    }
    return v;
}

std::vector<double> QuadProbe::gradient_at(std::span<const double> x) const {
    size_t d = x0.size();
    std::vector<double> gv(d);
    for (size_t i = 0; i < d; ++i) {
        gv[i] = grad[i];
        for (size_t j = 0; j < d; ++j) gv[i] += hess[i * d + j] * (x[j] - x0[j]);
    }
    return gv;
}

HamiltonianResult hamiltonian(const ControlProblem& p, std::span<const double> x,
                              std::span<const double> grad, std::span<const double> hess) {
    if (p.domain->classify(x) == PointClass::exterior)
        throw std::invalid_argument("hamiltonian: x must lie in the closed domain");
    const ControlSet& A = *p.control_set;
    int d = p.dim_state;
    std::vector<double> b(static_cast<size_t>(d));
    std::vector<double> a2(static_cast<size_t>(d) * static_cast<size_t>(d));
    HamiltonianResult best;
    bool first = true;
    for (int i = 0; i < A.grid_size(); ++i) {
        auto a = A.action(i);
        double v;
        try {
            v = p.eval_f(x, a);
            p.eval_drift(x, a, b);
            for (int j = 0; j < d; ++j) v += b[static_cast<size_t>(j)] * grad[static_cast<size_t>(j)];
            p.eval_diffusion_sq(x, a, a2);
            double tr = 0;
            for (int r = 0; r < d; ++r)
                for (int c = 0; c < d; ++c)
                    tr += a2[static_cast<size_t>(r * d + c)] * hess[static_cast<size_t>(c * d + r)];
            v += 0.5 * tr;
        } catch (const EvalError& err) {
            std::string action_str = "(";
            for (size_t j = 0; j < a.size(); ++j) {
                if (j) action_str += ", ";
                action_str += fmt(a[j]);
            }
            throw EvalError(std::string(err.what()) + " at action " + action_str + ")");
        }
        if (first || v > best.value) {
            best.value = v;
            best.argmax_index = i;
            first = false;
        }
    }
    auto a = A.action(best.argmax_index);
    best.argmax.assign(a.begin(), a.end());
    return best;
}

double generator_apply(const ControlProblem& p, const QuadProbe& phi,
                       std::span<const double> x, std::span<const double> a) {
    if (!p.control_set->contains(a))
        throw std::invalid_argument("generator_apply: action outside the control box");
    int d = p.dim_state;
    std::vector<double> b(static_cast<size_t>(d));
    p.eval_drift(x, a, b);
    std::vector<double> gx = phi.gradient_at(x);
    double v = 0;
    for (int i = 0; i < d; ++i) v += b[static_cast<size_t>(i)] * gx[static_cast<size_t>(i)];
    std::vector<double> a2(static_cast<size_t>(d) * static_cast<size_t>(d));
    p.eval_diffusion_sq(x, a, a2);
    double tr = 0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            tr += a2[static_cast<size_t>(i * d + j)] * phi.hess[static_cast<size_t>(j * d + i)];
    return v + 0.5 * tr;
}

// ---------------------------------------------------------------------------

namespace {

/// Deterministic sample of Ḡ: rejection from the bounding box, keeping
/// interior and boundary-band hits; always includes the domain center.
std::vector<Point> sample_closure(const DomainGeometry& dom, int n, SplitStream& rng) {
    std::vector<double> lo, hi;
    dom.bounding_box(lo, hi);
    int d = dom.dim();
    std::vector<Point> pts;
    pts.push_back(dom.center());
    int attempts = 0;
    while (static_cast<int>(pts.size()) < n && attempts < 200 * n) {
        ++attempts;
        Point x(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i)
            x[static_cast<size_t>(i)] =
                lo[static_cast<size_t>(i)] +
                (hi[static_cast<size_t>(i)] - lo[static_cast<size_t>(i)]) * rng.next_uniform_pos();
        if (dom.classify(x) != PointClass::exterior) pts.push_back(std::move(x));
    }
    return pts;
}

/// Deterministic sample of ∂G via projection of closure samples plus,
/// for boxes, the corners.
std::vector<Point> sample_boundary(const DomainGeometry& dom, int n, SplitStream& rng) {
    std::vector<Point> pts;
    int d = dom.dim();
    if (dom.kind() == DomainGeometry::Kind::box && d <= 16) {
        const auto& lo = dom.box_lo();
        const auto& hi = dom.box_hi();
        size_t corners = size_t{1} << d;
        for (size_t mask = 0; mask < corners && pts.size() < static_cast<size_t>(n); ++mask) {
            Point x(static_cast<size_t>(d));
            for (int i = 0; i < d; ++i)
                x[static_cast<size_t>(i)] = (mask >> i) & 1 ? hi[static_cast<size_t>(i)] : lo[static_cast<size_t>(i)];
            pts.push_back(std::move(x));
        }
    }
    auto interior = sample_closure(dom, n, rng);
    for (const auto& x : interior) {
        if (static_cast<int>(pts.size()) >= n) break;
        pts.push_back(dom.project_to_boundary(x));
    }
    return pts;
}

}  // namespace

AssumptionReport validate_assumptions(const ControlProblem& p, int n_samples, uint64_t seed,
                                      double user_K) {
    if (n_samples < 2) throw std::invalid_argument("validate_assumptions: n_samples must be >= 2");
    AssumptionReport rep;
    rep.n_samples = n_samples;
    rep.seed = seed;
    rep.user_K = user_K;

    SplitStream rng(seed, 0);
    const DomainGeometry& dom = *p.domain;
    const ControlSet& A = *p.control_set;
    int d = p.dim_state, m = p.dim_noise;

    std::vector<Point> xs = sample_closure(dom, n_samples, rng);
    std::vector<Point> bs = sample_boundary(dom, n_samples, rng);

    std::vector<double> b1(static_cast<size_t>(d)), b2(static_cast<size_t>(d));
    std::vector<double> s1(static_cast<size_t>(d) * m), s2(static_cast<size_t>(d) * m);

    auto norm = [](std::span<const double> v) {
        double s = 0;
        for (double t : v) s += t * t;
        return std::sqrt(s);
    };

    bool first_f = true;
    try {
        for (const auto& x : xs) {
            for (int ai = 0; ai < A.grid_size(); ++ai) {
                auto a = A.action(ai);
                double fv = p.eval_f(x, a);
                if (!std::isfinite(fv)) rep.all_finite = false;
                if (first_f || fv < rep.f_lo) rep.f_lo = fv;
                if (first_f || fv > rep.f_hi) rep.f_hi = fv;
                first_f = false;
                p.eval_drift(x, a, b1);
                p.eval_diffusion(x, a, s1);
                double bn = norm(b1), sn = norm(s1);
                if (!std::isfinite(bn) || !std::isfinite(sn)) rep.all_finite = false;
                double gr = (bn + sn) / (1.0 + norm(x));
                if (gr > rep.growth) rep.growth = gr;
            }
        }
        // pairwise Lipschitz ratios in x, per action (all pairs for small
        // samples, strided otherwise)
        size_t np = xs.size();
        size_t stride = np > 128 ? np / 64 : 1;
        for (size_t i = 0; i < np; ++i) {
            for (size_t j = i + 1; j < np; j += stride) {
                std::vector<double> diff(static_cast<size_t>(d));
                for (int t = 0; t < d; ++t)
                    diff[static_cast<size_t>(t)] = xs[i][static_cast<size_t>(t)] - xs[j][static_cast<size_t>(t)];
                double dx = norm(diff);
                if (dx < 1e-14) continue;
                for (int ai = 0; ai < A.grid_size(); ++ai) {
                    auto a = A.action(ai);
                    p.eval_drift(xs[i], a, b1);
                    p.eval_drift(xs[j], a, b2);
                    p.eval_diffusion(xs[i], a, s1);
                    p.eval_diffusion(xs[j], a, s2);
                    double db = 0, ds = 0;
                    for (int t = 0; t < d; ++t) {
                        double u = b1[static_cast<size_t>(t)] - b2[static_cast<size_t>(t)];
                        db += u * u;
                    }
                    for (size_t t = 0; t < s1.size(); ++t) {
                        double u = s1[t] - s2[t];
                        ds += u * u;
                    }
                    double rb = std::sqrt(db) / dx;
                    double rs = std::sqrt(ds) / dx;
                    if (rb > rep.lipschitz_b) rep.lipschitz_b = rb;
                    if (rs > rep.lipschitz_sigma) rep.lipschitz_sigma = rs;
                }
            }
        }
        bool first_g = true;
        for (const auto& x : bs) {
            double gv = p.eval_g(x);
            if (!std::isfinite(gv)) rep.all_finite = false;
            if (first_g || gv < rep.g_lo) rep.g_lo = gv;
            if (first_g || gv > rep.g_hi) rep.g_hi = gv;
            first_g = false;
        }
    } catch (const EvalError&) {
        rep.all_finite = false;
    }

    if (user_K > 0)
        rep.violates_K = rep.lipschitz_b + rep.lipschitz_sigma > user_K || rep.growth > user_K;
    return rep;
}

}  // namespace exitperron
