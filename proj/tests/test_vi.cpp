#include "catch_amalgamated.hpp"

#include "monopf/experiments.hpp"
#include "monopf/newton.hpp"
#include "monopf/vi_solver.hpp"

#include <string>

using namespace monopf;

namespace {

const std::string kData = MONOPF_DATA_DIR;

BusSystem load(const char* name) { return to_internal(load_matpower_case(kData + name)); }

struct TwoBus {
    BusSystem sys = load("/twobus.m");
    JacobianBasis basis = build_basis(sys);
    DomainSpec spec(const Matrix& w) const { return DomainSpec(w, 1e-3, DomainSpec::default_radius(1)); }
};

}  // namespace

TEST_CASE("two-bus VI recovers each solution in its own domain") {
    const TwoBus tb;
    SECTION("flat solution in C(W1)") {
        const DomainSpec spec = tb.spec(twobus_w1());
        const DomainMap map = assemble_domain_map(tb.basis, spec, tb.sys);
        Vector x0(2);
        x0 << 0.8, 0.1;
        const VIOutcome o = solve_vi(tb.sys, tb.basis, map, spec, CartesianVoltage(x0));
        CHECK(o.kind == OutcomeKind::Solution);
        CHECK(std::abs(o.V_star.vx(0) - 1.0) < 1e-6);
        CHECK(std::abs(o.V_star.vy(0)) < 1e-6);
        CHECK(o.monotonicity_violations == 0);
    }
    SECTION("V1 = 0 in C(W2)") {
        const DomainSpec spec = tb.spec(twobus_w2());
        const DomainMap map = assemble_domain_map(tb.basis, spec, tb.sys);
        Vector x0(2);
        x0 << 0.2, -0.1;
        VIOptions opts;
        opts.record_trajectory = true;
        const VIOutcome o = solve_vi(tb.sys, tb.basis, map, spec, CartesianVoltage(x0), opts);
        CHECK(o.kind == OutcomeKind::Solution);
        CHECK(o.V_star.stacked().norm() < 1e-6);
        for (const Vector& x : o.trajectory) CHECK(membership(CartesianVoltage(x), map, spec).margin >= -1e-6);
    }
}

TEST_CASE("VI matches Newton on case9") {
    const BusSystem sys = load("/case9.m");
    const JacobianBasis basis = build_basis(sys);
    const CartesianVoltage flat = CartesianVoltage::flat(sys);
    const DomainSpec spec(jacobian(sys, basis, flat).inverse(), 1e-3, DomainSpec::default_radius(sys.n()));
    const DomainMap map = assemble_domain_map(basis, spec, sys);
    const NewtonResult nr = newton_solve(sys, basis, flat);
    REQUIRE(nr.converged);
    REQUIRE(membership(nr.V, map, spec).inside);
    VIOptions opts;
    opts.anchor = flat.stacked();
    const VIOutcome o = solve_vi(sys, basis, map, spec, flat, opts);
    REQUIRE(o.kind == OutcomeKind::Solution);
    CHECK((o.V_star.stacked() - nr.V.stacked()).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("VI option validation") {
    const TwoBus tb;
    const DomainSpec spec = tb.spec(twobus_w1());
    const DomainMap map = assemble_domain_map(tb.basis, spec, tb.sys);
    VIOptions bad;
    bad.tol_zero = 1e-9;
    bad.tol_residual = 1e-8;
    CHECK_THROWS_AS(solve_vi(tb.sys, tb.basis, map, spec, CartesianVoltage::flat(tb.sys), bad), Error);
}

TEST_CASE("strong monotonicity holds inside the domain and fails outside") {
    const TwoBus tb;
    const DomainSpec spec = tb.spec(twobus_w1());
    const DomainMap map = assemble_domain_map(tb.basis, spec, tb.sys);
    const Vector center = CartesianVoltage::flat(tb.sys).stacked();
    const MonotonicityProbe inside = strong_monotonicity_probe(tb.sys, map, spec, 500, center, 1.5, 3, true);
    CHECK(inside.pairs == 500);
    CHECK(inside.violations == 0);
    // Negative control: pairs drawn from the whole box include points around
    // V1 = 0, where W1 F is not monotone.
    const MonotonicityProbe box = strong_monotonicity_probe(tb.sys, map, spec, 500, center, 1.5, 3, false);
    CHECK(box.violations > 0);
}

TEST_CASE("rejection sampling reports exhaustion") {
    std::mt19937_64 rng(1);
    auto never = [](const Vector&) { return false; };
    CHECK_THROWS_AS(rejection_sample(Vector::Zero(2), 1.0, 3, rng, never, 100), Error);
}
