// monopf: power-flow solving and monotonicity-domain experiments.
//
// Exit codes: 0 solution (or command completed), 1 case/argument parse error,
// 2 domain selection failure, 3 no-solution certificate, 4 not converged.

#include "monopf/io.hpp"
#include "monopf/monopf.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <cctype>
#include <string>

using namespace monopf;

namespace {

enum Exit : int { kOk = 0, kParse = 1, kDomain = 2, kCertificate = 3, kNotConverged = 4 };

struct ExitError : std::runtime_error {
    ExitError(int c, const std::string& what) : std::runtime_error(what), code(c) {}
    int code;
};

struct Common {
    std::string case_path;
    std::uint64_t seed = 1;
    std::string out;
    bool json = false;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--case", c.case_path, "MATPOWER case file")->required();
    app->add_option("--seed", c.seed, "random seed");
    app->add_option("--out", c.out, "output file (default stdout)");
    app->add_flag("--json", c.json, "machine-readable JSON output");
}

void emit(const Common& c, const std::string& text) {
    if (c.out.empty()) {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
        return;
    }
    std::ofstream f(c.out);
    if (!f) throw ExitError(kParse, "cannot write " + c.out);
    f << text;
    if (!text.empty() && text.back() != '\n') f << '\n';
}

BusSystem load_case(const std::string& path) {
    try {
        return load_bus_system(path);
    } catch (const std::exception& e) {
        throw ExitError(kParse, e.what());
    }
}

/// "a", "a+bj", "a-bj", "bj".
Complex parse_complex(const std::string& text) {
    std::string s;
    for (char ch : text) {
        if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
    }
    auto number = [&](const std::string& part) {
        std::size_t used = 0;
        Real value = 0;
        try {
            value = std::stod(part, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (part.empty() || used != part.size()) throw ExitError(kParse, "cannot parse complex value '" + text + "'");
        return value;
    };
    if (s.empty()) throw ExitError(kParse, "empty complex value");
    if (s.back() != 'j' && s.back() != 'i') return {number(s), 0.0};
    s.pop_back();
    // Split at the last sign that is not an exponent sign.
    std::size_t split = std::string::npos;
    for (std::size_t k = s.size(); k-- > 1;) {
        if ((s[k] == '+' || s[k] == '-') && s[k - 1] != 'e' && s[k - 1] != 'E') {
            split = k;
            break;
        }
    }
    std::string re_part = split == std::string::npos ? "" : s.substr(0, split);
    std::string im_part = split == std::string::npos ? s : s.substr(split);
    if (im_part.empty() || im_part == "+" || im_part == "-") im_part += "1";
    return {re_part.empty() ? 0.0 : number(re_part), number(im_part)};
}

struct DomainArgs {
    std::string domain_file;
    std::string builtin;
    Real delta = 1.0;
    Real m = 1e-3;
    Real b = 0.0;
    int budget = 1500;
};

void add_domain_args(CLI::App* app, DomainArgs& d, bool with_source) {
    if (with_source) {
        app->add_option("--domain", d.domain_file, "domain JSON written by the domain command");
        app->add_option("--builtin-w", d.builtin, "built-in weighting matrix: twobus-w1 or twobus-w2");
    }
    app->add_option("--delta", d.delta, "uniform per-bus bound delta");
    app->add_option("--m", d.m, "monotonicity modulus");
    app->add_option("--b", d.b, "ball radius on the state (default 3 sqrt(n))");
    app->add_option("--budget", d.budget, "margin iterations per bisection probe");
}

struct ResolvedDomain {
    DomainSpec spec;
    std::optional<SelectionResult> selection;
    std::string source;
};

ResolvedDomain resolve_domain(const BusSystem& system, const JacobianBasis& basis, const DomainArgs& d) {
    const Real b = d.b > 0 ? d.b : DomainSpec::default_radius(system.n());
    try {
        if (!d.domain_file.empty()) {
            std::ifstream in(d.domain_file);
            if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open domain file " + d.domain_file);
            Json j;
            in >> j;
            return {domain_spec_from_json(j), std::nullopt, d.domain_file};
        }
        if (!d.builtin.empty()) {
            if (system.n() != 1) throw Error(ErrorCode::DimensionMismatch, "built-in matrices need a two-bus case");
            if (d.builtin == "twobus-w1") return {DomainSpec(twobus_w1(), d.m, b), std::nullopt, d.builtin};
            if (d.builtin == "twobus-w2") return {DomainSpec(twobus_w2(), d.m, b), std::nullopt, d.builtin};
            throw Error(ErrorCode::InvalidArgument, "unknown built-in matrix " + d.builtin);
        }
        SelectionOptions so;
        so.budget = d.budget;
        const auto nominal = CartesianVoltage::flat(system);
        SelectionResult r = select_domain(system, basis, nominal, Vector::Constant(system.n(), d.delta), d.m, so);
        DomainSpec spec(r.W, d.m, b);
        return {spec, std::move(r), "selected"};
    } catch (const ExitError&) {
        throw;
    } catch (const std::exception& e) {
        throw ExitError(kDomain, e.what());
    }
}

int cmd_solve(const Common& c, const DomainArgs& d, const std::string& method, const std::string& scale,
              Real tol_zero, Real tol_residual, int max_iter) {
    BusSystem system = load_case(c.case_path);
    if (!scale.empty()) system = system.with_scaled_injections(parse_complex(scale));
    const JacobianBasis basis = build_basis(system);
    const auto nominal = CartesianVoltage::flat(system);

    if (method == "newton") {
        const NewtonResult r = newton_solve(system, basis, nominal);
        Json j = newton_json(system, r);
        j["case"] = c.case_path;
        if (c.json) {
            emit(c, j.dump(2));
        } else {
            std::ostringstream os;
            os << "newton: " << to_string(r.status) << "  |F| = " << r.residual << "  iterations = " << r.iterations;
            emit(c, os.str());
        }
        return r.converged ? kOk : kNotConverged;
    }
    if (method != "vi") throw ExitError(kParse, "unknown method " + method);

    const ResolvedDomain dom = resolve_domain(system, basis, d);
    DomainMap map = [&] {
        try {
            return assemble_domain_map(basis, dom.spec, system);
        } catch (const std::exception& e) {
            throw ExitError(kDomain, e.what());
        }
    }();
    VIOptions vo;
    vo.tol_zero = tol_zero;
    vo.tol_residual = tol_residual;
    vo.max_iter = max_iter;
    if (membership(nominal, map, dom.spec).margin > 0) vo.anchor = nominal.stacked();
    VIOutcome out;
    try {
        out = solve_vi(system, basis, map, dom.spec, nominal, vo);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::InvalidArgument) throw ExitError(kParse, e.what());
        throw ExitError(kNotConverged, e.what());
    }
    Json j = vi_json(system, out);
    j["case"] = c.case_path;
    j["domain"] = {{"source", dom.source}, {"m", dom.spec.m}, {"b", dom.spec.b}};
    if (dom.selection) j["domain"]["rho"] = dom.selection->rho;
    if (c.json) {
        emit(c, j.dump(2));
    } else {
        std::ostringstream os;
        os << "vi: " << to_string(out.kind) << "  |F| = " << out.residual_F
           << "  natural residual = " << out.natural_residual << "  iterations = " << out.iterations;
        emit(c, os.str());
    }
    switch (out.kind) {
        case OutcomeKind::Solution: return kOk;
        case OutcomeKind::NoSolutionCertificate: return kCertificate;
        case OutcomeKind::NotConverged: return kNotConverged;
    }
    return kNotConverged;
}

int cmd_domain(const Common& c, const DomainArgs& d) {
    const BusSystem system = load_case(c.case_path);
    const JacobianBasis basis = build_basis(system);
    const ResolvedDomain dom = resolve_domain(system, basis, d);
    const Vector delta = Vector::Constant(system.n(), d.delta);
    Json j = selection_json(*dom.selection, dom.spec, delta);
    j["case"] = c.case_path;
    const DomainMap map = assemble_domain_map(basis, dom.spec, system);
    j["margins"]["nominal"] = membership(CartesianVoltage::flat(system), map, dom.spec).margin;
    if (c.json || !c.out.empty()) {
        emit(c, j.dump(2));
    } else {
        std::ostringstream os;
        os << "rho = " << dom.selection->rho << "  selection margin = " << dom.selection->margin
           << "  probes = " << dom.selection->probes.size();
        emit(c, os.str());
    }
    return kOk;
}

int cmd_scan(const Common& c, const DomainArgs& d, ScanConfig cfg, const std::vector<std::string>& alphas) {
    const BusSystem system = load_case(c.case_path);
    const JacobianBasis basis = build_basis(system);
    const ResolvedDomain dom = resolve_domain(system, basis, d);
    const DomainMap map = assemble_domain_map(basis, dom.spec, system);
    for (const auto& a : alphas) cfg.explicit_alphas.push_back(parse_complex(a));
    cfg.seed = c.seed;
    const auto rows = run_scan(system, basis, map, dom.spec, CartesianVoltage::flat(system), cfg);
    if (c.json) {
        Json j = scan_summary_json(rows);
        j["case"] = c.case_path;
        if (dom.selection) j["rho"] = dom.selection->rho;
        if (!c.out.empty()) {
            std::ofstream(c.out) << scan_csv(rows);
            j["csv"] = c.out;
            std::cout << j.dump(2) << '\n';
        } else {
            emit(c, j.dump(2));
        }
    } else {
        emit(c, scan_csv(rows));
    }
    return kOk;
}

int cmd_sample_grid(const Common& c, const DomainArgs& d, int bus_id, int pv_bus_id, std::vector<Real> thetas,
                    const GridSpec& grid) {
    const BusSystem system = load_case(c.case_path);
    const JacobianBasis basis = build_basis(system);
    const ResolvedDomain dom = resolve_domain(system, basis, d);
    const DomainMap map = assemble_domain_map(basis, dom.spec, system);

    Index bus = 0;
    try {
        if (bus_id > 0) {
            bus = system.ordering().internal(bus_id);
        } else {
            bus = system.pq().empty() ? 1 : system.pq().back();
        }
    } catch (const std::exception& e) {
        throw ExitError(kParse, e.what());
    }
    require(bus >= 1, ErrorCode::InvalidArgument, "the swept bus cannot be the slack");
    std::optional<Index> pv;
    if (pv_bus_id > 0) pv = system.ordering().internal(pv_bus_id);
    else if (!system.pv().empty()) pv = system.pv().front();
    if (thetas.empty()) thetas.push_back(0.0);

    Json summary = Json::array();
    std::string all;
    for (std::size_t t = 0; t < thetas.size(); ++t) {
        CartesianVoltage base = CartesianVoltage::flat(system);
        if (pv) {
            const Complex vp = std::polar(system.v_set()[*pv], thetas[t]) * system.slack_voltage() /
                               std::abs(system.slack_voltage());
            base.stacked()[*pv - 1] = vp.real();
            base.stacked()[system.n() + *pv - 1] = vp.imag();
        }
        const auto points = sample_grid(system, map, dom.spec, base, bus, grid);
        std::string csv = grid_csv(points, thetas[t]);
        summary.push_back({{"theta", thetas[t]}, {"inside", count_inside(points)}, {"points", points.size()}});
        if (!c.out.empty() && thetas.size() > 1) {
            const std::filesystem::path p(c.out);
            const auto name = p.stem().string() + "_theta" + std::to_string(t) + p.extension().string();
            std::ofstream(p.parent_path() / name) << csv;
        } else if (!c.out.empty()) {
            std::ofstream(c.out) << csv;
        } else if (!c.json) {
            if (!all.empty()) csv = csv.substr(csv.find('\n') + 1);
            all += csv;
        }
    }
    if (c.json) {
        std::cout << Json{{"schema_version", kSchemaVersion}, {"case", c.case_path}, {"thetas", summary}}.dump(2)
                  << '\n';
    } else if (c.out.empty()) {
        std::cout << all;
    }
    return kOk;
}

int cmd_validate(const Common& c) {
    const BusSystem system = load_case(c.case_path);
    const JacobianBasis basis = build_basis(system);
    const auto flat = CartesianVoltage::flat(system);

    // Basis sum against a central finite difference of F at the flat profile.
    const Matrix j = jacobian(system, basis, flat);
    Matrix fd(j.rows(), j.cols());
    const Real h = 1e-5;
    for (Index k = 0; k < j.cols(); ++k) {
        Vector a = flat.stacked(), b = flat.stacked();
        a[k] += h;
        b[k] -= h;
        fd.col(k) = (evaluate(system, CartesianVoltage(a)) - evaluate(system, CartesianVoltage(b))) / (2 * h);
    }
    const Real jac_err = (j - fd).cwiseAbs().maxCoeff() / std::max<Real>(1.0, fd.cwiseAbs().maxCoeff());
    Eigen::JacobiSVD<Matrix> svd(j);
    const Vector s = svd.singularValues();
    Json out{{"schema_version", kSchemaVersion},
             {"case", c.case_path},
             {"buses", system.n() + 1},
             {"pv", system.pv().size()},
             {"pq", system.pq().size()},
             {"slack", {{"bus", system.ordering().external(0)},
                        {"vx", system.slack_voltage().real()},
                        {"vy", system.slack_voltage().imag()}}},
             {"flat_residual", evaluate(system, flat).norm()},
             {"jacobian_fd_relative_error", jac_err},
             {"nominal_jacobian_condition", s(0) / s(s.size() - 1)}};
    if (c.json) {
        emit(c, out.dump(2));
    } else {
        std::ostringstream os;
        os << "buses " << system.n() + 1 << " (pv " << system.pv().size() << ", pq " << system.pq().size()
           << ")  flat |F| = " << out["flat_residual"].get<Real>() << "  jacobian fd error = " << jac_err;
        emit(c, os.str());
    }
    return jac_err <= 1e-6 ? kOk : kNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Power-flow solving over monotonicity domains"};
    app.require_subcommand(1);

    Common solve_c, domain_c, scan_c, grid_c, validate_c;
    DomainArgs solve_d, domain_d, scan_d, grid_d;

    auto* solve = app.add_subcommand("solve", "solve the power-flow equations");
    add_common(solve, solve_c);
    add_domain_args(solve, solve_d, true);
    std::string method = "vi", scale;
    Real tol_zero = 1e-6, tol_residual = 1e-8;
    int max_iter = 20000;
    solve->add_option("--method", method, "vi or newton")->check(CLI::IsMember({"vi", "newton"}));
    solve->add_option("--scale", scale, "complex injection scale, e.g. 10 or 1.2+0.5j");
    solve->add_option("--tol-zero", tol_zero, "|F| threshold for a solution");
    solve->add_option("--tol-residual", tol_residual, "natural-residual stopping tolerance");
    solve->add_option("--max-iter", max_iter, "extra-gradient iteration budget");

    auto* domain = app.add_subcommand("domain", "select a monotonicity domain (W, rho)");
    add_common(domain, domain_c);
    add_domain_args(domain, domain_d, false);

    auto* scan = app.add_subcommand("scan", "complex load-scaling scan");
    add_common(scan, scan_c);
    add_domain_args(scan, scan_d, true);
    ScanConfig cfg;
    std::vector<std::string> alphas;
    bool no_reference = false, no_proxy = false;
    scan->add_option("--grid", cfg.grid, "number of (magnitude, phase) points");
    scan->add_option("--alpha-max", cfg.alpha_max, "largest scaling magnitude");
    scan->add_option("--phase-min", cfg.phase_min, "smallest scaling phase (rad)");
    scan->add_option("--phase-max", cfg.phase_max, "largest scaling phase (rad)");
    scan->add_option("--alpha", alphas, "explicit scaling factors (replaces the grid)");
    scan->add_option("--proxy-seeds", cfg.proxy_seeds, "Newton starts per certificate row");
    scan->add_flag("--no-reference", no_reference, "omit the alpha = 1 row");
    scan->add_flag("--no-newton-proxy", no_proxy, "report certificates without the Newton proxy");

    auto* grid = app.add_subcommand("sample-grid", "membership margin over a grid of one bus's deviation");
    add_common(grid, grid_c);
    add_domain_args(grid, grid_d, true);
    int bus_id = 0, pv_bus_id = 0;
    std::vector<Real> thetas;
    GridSpec gspec;
    grid->add_option("--bus", bus_id, "external id of the swept bus (default: last PQ bus)");
    grid->add_option("--pv-bus", pv_bus_id, "external id of the PV bus whose angle is swept");
    grid->add_option("--theta", thetas, "PV bus angles (rad); one CSV per angle");
    grid->add_option("--lo", gspec.lo, "grid lower bound");
    grid->add_option("--hi", gspec.hi, "grid upper bound");
    grid->add_option("--points", gspec.points, "grid points per axis");

    auto* validate = app.add_subcommand("validate", "parse a case and check the operator");
    add_common(validate, validate_c);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kParse;
    }

    try {
        if (*solve) return cmd_solve(solve_c, solve_d, method, scale, tol_zero, tol_residual, max_iter);
        if (*domain) return cmd_domain(domain_c, domain_d);
        if (*scan) {
            cfg.include_reference = !no_reference;
            cfg.newton_proxy = !no_proxy;
            return cmd_scan(scan_c, scan_d, cfg, alphas);
        }
        if (*grid) return cmd_sample_grid(grid_c, grid_d, bus_id, pv_bus_id, thetas, gspec);
        if (*validate) return cmd_validate(validate_c);
    } catch (const ExitError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNotConverged;
    }
    return kParse;
}
