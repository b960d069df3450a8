#include "catch_amalgamated.hpp"

#include "monopf/experiments.hpp"
#include "monopf/newton.hpp"

#include <atomic>
#include <string>

using namespace monopf;

namespace {

const std::string kData = MONOPF_DATA_DIR;

BusSystem load(const char* name) { return to_internal(load_matpower_case(kData + name)); }

}  // namespace

TEST_CASE("zero injection converges immediately from flat") {
    const BusSystem sys = load("/twobus.m");
    const NewtonResult r = newton_solve(sys, build_basis(sys), CartesianVoltage::flat(sys));
    CHECK(r.converged);
    CHECK(r.iterations == 0);
    CHECK(r.status == NewtonStatus::Converged);
}

TEST_CASE("two-bus Newton near the origin finds V1 = 0") {
    const BusSystem sys = load("/twobus.m");
    Vector x0(2);
    x0 << 0.05, 0.02;
    const NewtonResult r = newton_solve(sys, build_basis(sys), CartesianVoltage(x0));
    REQUIRE(r.converged);
    CHECK(r.V.stacked().norm() < 1e-9);
}

TEST_CASE("two-bus Jacobian is singular on Re(V1) = 1/2") {
    // For an unloaded bus, S1 is proportional to |V1|^2 - V1 conj(V0); with
    // V0 = 1 the Jacobian determinant is proportional to 1 - 2 Re(V1).
    const BusSystem sys = load("/twobus.m");
    const JacobianBasis basis = build_basis(sys);
    Vector x0(2);
    x0 << 0.5, 0.3;
    CHECK(std::abs(jacobian(sys, basis, CartesianVoltage(x0)).determinant()) < 1e-12);
    const NewtonResult r = newton_solve(sys, basis, CartesianVoltage(x0));
    CHECK_FALSE(r.converged);
    CHECK(r.status == NewtonStatus::SingularJacobian);
}

TEST_CASE("case9 Newton solution satisfies the complex power balance") {
    const BusSystem sys = load("/case9.m");
    const NewtonResult r = newton_solve(sys, build_basis(sys), CartesianVoltage::flat(sys));
    REQUIRE(r.converged);
    CHECK(r.iterations <= 10);
    const ComplexVector full = r.V.full(sys.slack_voltage());
    const ComplexVector s = complex_power_oracle(sys, full);
    for (Index i = 1; i <= sys.n(); ++i) {
        CHECK(s[i].real() == Catch::Approx(sys.p()[i]).margin(1e-9));
        if (sys.is_pq(i)) CHECK(s[i].imag() == Catch::Approx(sys.q()[i]).margin(1e-9));
        if (sys.is_pv(i)) CHECK(std::abs(full[i]) == Catch::Approx(sys.v_set()[i]).margin(1e-9));
    }
}

TEST_CASE("multistart finds one solution per two-bus domain") {
    const BusSystem sys = load("/twobus.m");
    const JacobianBasis basis = build_basis(sys);
    const Vector flat = CartesianVoltage::flat(sys).stacked();
    for (int which = 0; which < 2; ++which) {
        const DomainSpec spec(which == 0 ? twobus_w1() : twobus_w2(), 1e-3, DomainSpec::default_radius(1));
        const DomainMap map = assemble_domain_map(basis, spec, sys);
        MultistartOptions opts;
        opts.half_width = 1.5;
        const MultistartReport rep = multistart_uniqueness(sys, basis, map, spec, flat, opts);
        CHECK(rep.runs == 20);
        REQUIRE(rep.inside_solutions.size() == 1);
        const Vector expected = which == 0 ? flat : Vector::Zero(2);
        CHECK((rep.inside_solutions.front().stacked() - expected).norm() < 1e-8);
    }
}

TEST_CASE("parallel_for visits every index and forwards exceptions") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, [&](Index i) { hits[std::size_t(i)]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, [](Index i) {
                        if (i == 7) throw Error(ErrorCode::InvalidArgument, "boom");
                    }),
                    Error);
}
