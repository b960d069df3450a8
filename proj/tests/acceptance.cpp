// Acceptance checks, one PASS/FAIL line per criterion. Domain selections for
// case9 and case14 are computed once and shared by the later criteria.

#include "monopf/monopf.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>

using namespace monopf;

namespace {

const std::string kData = MONOPF_DATA_DIR;
constexpr Real kModulus = 1e-3;

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;
std::vector<int> only;

void run(int id, const char* title, double budget_s, const std::function<Verdict()>& body) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > budget_s) {
        v.pass = false;
        v.detail += "; over the time budget";
    }
    if (!v.pass) ++failures;
    std::printf("criterion %2d %s: %s (%.1f s of %.0f s) %s\n", id, v.pass ? "PASS" : "FAIL", title, secs, budget_s,
                v.detail.c_str());
    std::fflush(stdout);
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Case {
    std::string name;
    BusSystem sys;
    JacobianBasis basis;
    CartesianVoltage flat;
    std::optional<SelectionResult> selection;
    std::optional<DomainSpec> spec;
    std::optional<DomainMap> map;

    explicit Case(const std::string& file)
        : name(file),
          sys(to_internal(load_matpower_case(kData + "/" + file))),
          basis(build_basis(sys)),
          flat(CartesianVoltage::flat(sys)) {}

    void select() {
        selection = select_domain(sys, basis, flat, Vector::Ones(sys.n()), kModulus);
        spec = DomainSpec(selection->W, kModulus, DomainSpec::default_radius(sys.n()));
        map = assemble_domain_map(basis, *spec, sys);
    }
    // Selects on first use when criterion 3 was skipped.
    void ensure_domain() {
        if (!map) select();
    }
};

// Uniform sample of the per-bus discs |V_i - v_i| <= radius.
Vector sample_discs(const Vector& center, Real radius, std::mt19937_64& rng) {
    std::uniform_real_distribution<Real> u(0.0, 1.0);
    const Index n = center.size() / 2;
    Vector v = center;
    for (Index i = 0; i < n; ++i) {
        const Real r = radius * std::sqrt(u(rng));
        const Real phi = 2 * std::numbers::pi * u(rng);
        v[i] += r * std::cos(phi);
        v[n + i] += r * std::sin(phi);
    }
    return v;
}

Verdict jacobian_identity(const std::vector<Case*>& cases) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<Real> u(-0.3, 0.3);
    Real worst_abs = 0, worst_rel = 0;
    for (Case* c : cases) {
        for (int t = 0; t < 100; ++t) {
            Vector v = c->flat.stacked();
            for (Index k = 0; k < v.size(); ++k) v[k] += u(rng);
            const CartesianVoltage x(v);
            const Matrix j = jacobian(c->sys, c->basis, x);
            worst_abs = std::max(worst_abs, (j - oracle::complex_jacobian(c->sys, x)).cwiseAbs().maxCoeff());
            worst_rel = std::max(worst_rel, (j - oracle::finite_difference_jacobian(c->sys, x, 1e-5)).norm() / j.norm());
        }
    }
    return {worst_abs <= 1e-12 && worst_rel <= 1e-6,
            fmt("max |J - analytic| = %.2e, max relative FD error = %.2e", worst_abs, worst_rel)};
}

Verdict two_bus() {
    const Case c("twobus.m");
    const Real b = DomainSpec::default_radius(1);
    const DomainSpec s1(twobus_w1(), kModulus, b), s2(twobus_w2(), kModulus, b);
    const DomainMap m1 = assemble_domain_map(c.basis, s1, c.sys), m2 = assemble_domain_map(c.basis, s2, c.sys);
    const Membership flat_in_1 = membership(c.flat, m1, s1);
    const Membership zero_in_2 = membership(CartesianVoltage(Vector::Zero(2)), m2, s2);

    // Margins along the real axis at Re(V1 - V0) = -1/2 -+ 0.05.
    auto margin_at = [&](const DomainMap& m, const DomainSpec& s, Real dx) {
        Vector v(2);
        v << c.sys.slack_voltage().real() + dx, c.sys.slack_voltage().imag();
        return membership(CartesianVoltage(v), m, s).margin;
    };
    auto crossing = [&](const DomainMap& m, const DomainSpec& s) {
        Real lo = -0.55, hi = -0.45;
        const Real flo = margin_at(m, s, lo), fhi = margin_at(m, s, hi);
        if (flo * fhi >= 0) return std::numeric_limits<Real>::quiet_NaN();
        for (int k = 0; k < 60; ++k) {
            const Real mid = 0.5 * (lo + hi);
            ((margin_at(m, s, mid) > 0) == (fhi > 0) ? hi : lo) = mid;
        }
        return 0.5 * (lo + hi);
    };
    const Real x1 = crossing(m1, s1), x2 = crossing(m2, s2);

    GridSpec grid;
    const auto g1 = sample_grid(c.sys, m1, s1, c.flat, 1, grid), g2 = sample_grid(c.sys, m2, s2, c.flat, 1, grid);
    std::size_t covered = 0;
    for (std::size_t k = 0; k < g1.size(); ++k) covered += (g1[k].inside || g2[k].inside) ? 1 : 0;

    const bool pass = flat_in_1.inside && flat_in_1.margin > 0 && zero_in_2.inside && zero_in_2.margin > 0 &&
                      std::isfinite(x1) && std::isfinite(x2);
    return {pass, fmt("m = %.0e; flat margin in C(W1) %.4f, V1 = 0 margin in C(W2) %.4f; real-axis sign change at "
                      "Re(V1 - V0) = %.4f (W1), %.4f (W2); grid coverage %.1f%%",
                      kModulus, flat_in_1.margin, zero_in_2.margin, x1, x2, 100.0 * covered / g1.size())};
}

Verdict table_bounds(Case& c, Real stretch) {
    c.select();
    const Real rho = c.selection->rho;
    const bool stretch_met = std::abs(rho - stretch) <= 0.05;
    return {rho >= 0.1, fmt("%s rho = %.4f (gate 0.1; stretch %.2f +- 0.05 %s); re-checked block margin %.2e",
                            c.name.c_str(), rho, stretch, stretch_met ? "met" : "not met", c.selection->margin)};
}

Verdict containment(const std::vector<Case*>& cases) {
    std::string detail;
    bool pass = true;
    for (Case* c : cases) {
        c->ensure_domain();
        std::mt19937_64 rng(99);
        const Real radius = c->selection->rho;  // delta = 1
        int violations = 0;
        Real worst = std::numeric_limits<Real>::infinity();
        for (int t = 0; t < 10000; ++t) {
            const Membership mb = membership(CartesianVoltage(sample_discs(c->flat.stacked(), radius, rng)), *c->map, *c->spec);
            worst = std::min(worst, mb.margin);
            violations += mb.inside ? 0 : 1;
        }
        pass = pass && violations == 0;
        detail += fmt("%s: %d violations of 10000, smallest margin %.3e; ", c->name.c_str(), violations, worst);
    }
    return {pass, detail};
}

Verdict monotonicity(Case& c) {
    c.ensure_domain();
    const MonotonicityProbe p =
        strong_monotonicity_probe(c.sys, *c.map, *c.spec, 500, c.flat.stacked(), 0.25, 17, true);
    return {p.pairs == 500 && p.violations == 0,
            fmt("%s: %d pairs, %d violations, smallest slack %.3e", c.name.c_str(), p.pairs, p.violations, p.worst_slack)};
}

Verdict cross_validation(const std::vector<Case*>& cases) {
    std::string detail;
    bool pass = true;
    for (Case* c : cases) {
        c->ensure_domain();
        const NewtonResult nr = newton_solve(c->sys, c->basis, c->flat);
        VIOptions vo;
        vo.anchor = c->flat.stacked();
        const VIOutcome vi = solve_vi(c->sys, c->basis, *c->map, *c->spec, c->flat, vo);
        const Real gap = (vi.V_star.stacked() - nr.V.stacked()).lpNorm<Eigen::Infinity>();
        MultistartOptions mo;
        mo.half_width = 0.25;
        const MultistartReport rep = multistart_uniqueness(c->sys, c->basis, *c->map, *c->spec, c->flat.stacked(), mo);
        const bool ok = nr.converged && vi.kind == OutcomeKind::Solution && gap <= 1e-6 && rep.runs == 20 &&
                        rep.inside_solutions.size() == 1;
        pass = pass && ok;
        detail += fmt("%s: VI %s in %d iterations, max |V_vi - V_newton| = %.2e; multistart %d seeds, %d converged "
                      "inside, %zu distinct; ",
                      c->name.c_str(), to_string(vi.kind), vi.iterations, gap, rep.runs, rep.converged_inside,
                      rep.inside_solutions.size());
    }
    return {pass, detail};
}

Verdict certificate(Case& c) {
    c.ensure_domain();
    const BusSystem scaled = c.sys.with_scaled_injections(10.0);
    VIOptions vo;
    vo.anchor = c.flat.stacked();
    const VIOutcome vi = solve_vi(scaled, c.basis, *c.map, *c.spec, c.flat, vo);
    MultistartOptions mo;
    mo.half_width = 0.25;
    const MultistartReport rep = multistart_uniqueness(scaled, c.basis, *c.map, *c.spec, c.flat.stacked(), mo);
    const bool pass = vi.kind == OutcomeKind::NoSolutionCertificate && vi.natural_residual <= 1e-8 &&
                      vi.residual_F > 1e-3 && rep.converged_inside == 0;
    return {pass, fmt("%s alpha = 10: %s, natural residual %.2e, |F| = %.3f; multistart %d seeds, %d converged inside, "
                      "%d outside",
                      c.name.c_str(), to_string(vi.kind), vi.natural_residual, vi.residual_F, rep.runs,
                      rep.converged_inside, rep.converged_outside)};
}

Verdict octagon_check() {
    const Real expected = std::sqrt(4 - 2 * std::sqrt(2.0));
    Real norm_err = 0, min_support = std::numeric_limits<Real>::infinity();
    const auto vs = octagon_vertices();
    for (const auto& p : vs) norm_err = std::max(norm_err, std::abs(std::hypot(p[0], p[1]) - expected));
    for (int k = 0; k < 360; ++k) {
        const Real phi = 2 * std::numbers::pi * k / 360;
        Real s = -std::numeric_limits<Real>::infinity();
        for (const auto& p : vs) s = std::max(s, p[0] * std::cos(phi) + p[1] * std::sin(phi));
        min_support = std::min(min_support, s);
    }
    return {vs.size() == 8 && norm_err <= 1e-12 && min_support >= 1 - 1e-12,
            fmt("min support %.6f over 360 directions, max vertex norm error %.1e", min_support, norm_err)};
}

Verdict three_bus() {
    Case c("threebus.m");
    c.select();
    const Index pv = c.sys.pv().front(), pq = c.sys.pq().front();
    const Real pi = std::numbers::pi;
    std::map<Real, std::size_t> counts;
    bool origin_inside = false;
    for (Real theta : {0.0, 0.23 * pi, -0.23 * pi, 0.45 * pi, -0.45 * pi}) {
        Vector base = c.flat.stacked();
        base[pv - 1] = std::cos(theta);
        base[c.sys.n() + pv - 1] = std::sin(theta);
        GridSpec grid;
        const auto pts = sample_grid(c.sys, *c.map, *c.spec, CartesianVoltage(base), pq, grid);
        counts[theta] = count_inside(pts);
        if (theta == 0.0) {
            for (const auto& p : pts) {
                if (p.vx == 0 && p.vy == 0) origin_inside = p.inside;
            }
        }
    }
    auto at = [&](Real t) { return counts.at(t); };
    const bool shrink = std::max(at(0.23 * pi), at(-0.23 * pi)) <= at(0.0) &&
                        std::max(at(0.45 * pi), at(-0.45 * pi)) <= std::min(at(0.23 * pi), at(-0.23 * pi));
    return {shrink && origin_inside,
            fmt("rho = %.3f; inside counts of 3721: theta 0 -> %zu, +-0.23pi -> %zu/%zu, +-0.45pi -> %zu/%zu; origin %s",
                c.selection->rho, at(0.0), at(0.23 * pi), at(-0.23 * pi), at(0.45 * pi), at(-0.45 * pi),
                origin_inside ? "inside" : "outside")};
}

Verdict scan(const std::vector<Case*>& cases) {
    std::string detail;
    bool pass = true;
    for (Case* c : cases) {
        c->ensure_domain();
        ScanConfig cfg;
        const auto rows = run_scan(c->sys, c->basis, *c->map, *c->spec, c->flat, cfg);
        std::map<ScanClass, int> counts;
        for (const auto& r : rows) counts[r.classification]++;
        int total = 0;
        for (const auto& [k, v] : counts) total += v;
        const Real top = std::abs(rows.back().alpha);
        int top_certificates = 0;
        for (const auto& r : rows) {
            if (std::abs(std::abs(r.alpha) - top) > 1e-12) continue;
            const bool cert = r.classification == ScanClass::NoSolutionInDomain_NRFoundOutside ||
                              r.classification == ScanClass::NoSolutionInDomain_NoEvidence ||
                              r.classification == ScanClass::CertifiedCertificateOnly;
            top_certificates += cert ? 1 : 0;
        }
        const bool ok = total == static_cast<int>(rows.size()) && rows.size() == scan_alphas(cfg).size() &&
                        rows.front().alpha == Complex(1, 0) &&
                        rows.front().classification == ScanClass::SolutionInDomain && top_certificates > 0;
        pass = pass && ok;
        detail += c->name + ": " + std::to_string(rows.size()) + " rows (alpha = 1 reference + " +
                  std::to_string(cfg.grid) + " grid), alpha = 1 " + to_string(rows.front().classification) + ",";
        for (ScanClass k : all_scan_classes) detail += fmt(" %s %d", to_string(k), counts[k]);
        detail += fmt(", certificates at |alpha| = %.2f: %d; ", top, top_certificates);
    }
    return {pass, detail};
}

}  // namespace

// Optional arguments restrict the run to the listed criterion numbers.
int main(int argc, char** argv) {
    for (int k = 1; k < argc; ++k) only.push_back(std::atoi(argv[k]));
    Case case9("case9.m"), case14("case14.m");
    const std::vector<Case*> both{&case9, &case14};

    run(1, "Jacobian identity", 10, [&] { return jacobian_identity(both); });
    run(2, "two-bus domains", 5, two_bus);
    run(3, "domain selection case9", 600, [&] { return table_bounds(case9, 0.2); });
    run(3, "domain selection case14", 600, [&] { return table_bounds(case14, 0.25); });
    run(4, "containment of the perturbation set", 60, [&] { return containment(both); });
    run(5, "strong monotonicity", 60, [&] { return monotonicity(case9); });
    run(6, "VI vs Newton and uniqueness", 120, [&] { return cross_validation(both); });
    run(7, "certificate at alpha = 10", 120, [&] { return certificate(case9); });
    run(8, "octagon", 1, octagon_check);
    run(9, "three-bus shrink", 60, three_bus);
    run(10, "load-scaling scan", 900, [&] { return scan(both); });

    std::printf("%d criterion checks failed\n", failures);
    return failures == 0 ? 0 : 1;
}
