#include "catch_amalgamated.hpp"

#include "monopf/network.hpp"
#include "monopf/operator.hpp"
#include "oracles.hpp"

#include <random>
#include <string>

using namespace monopf;

namespace {

const std::string kData = MONOPF_DATA_DIR;

BusSystem load(const char* name) { return to_internal(load_matpower_case(kData + name)); }

CartesianVoltage random_voltage(const BusSystem& sys, std::mt19937_64& rng, Real spread) {
    std::uniform_real_distribution<Real> u(-spread, spread);
    Vector v = CartesianVoltage::flat(sys).stacked();
    for (Index k = 0; k < v.size(); ++k) v[k] += u(rng);
    return CartesianVoltage(v);
}

}  // namespace

TEST_CASE("basis expansion equals the analytic Jacobian") {
    std::mt19937_64 rng(7);
    for (const char* name : {"/case9.m", "/case14.m", "/threebus.m", "/twobus.m"}) {
        const BusSystem sys = load(name);
        const JacobianBasis basis = build_basis(sys);
        REQUIRE(basis.n() == sys.n());
        for (int trial = 0; trial < 20; ++trial) {
            const CartesianVoltage v = random_voltage(sys, rng, 0.3);
            const Matrix j = jacobian(sys, basis, v);
            CHECK((j - oracle::complex_jacobian(sys, v)).cwiseAbs().maxCoeff() < 1e-12);
            const Matrix fd = oracle::finite_difference_jacobian(sys, v, 1e-5);
            CHECK((j - fd).norm() <= 1e-6 * j.norm());
        }
    }
}

TEST_CASE("residual agrees with complex power") {
    std::mt19937_64 rng(11);
    for (const char* name : {"/case9.m", "/case14.m"}) {
        const BusSystem sys = load(name);
        const Index n = sys.n();
        for (int trial = 0; trial < 10; ++trial) {
            const CartesianVoltage v = random_voltage(sys, rng, 0.2);
            const ComplexVector full = v.full(sys.slack_voltage());
            const ComplexVector s = complex_power_oracle(sys, full);
            const Vector f = evaluate(sys, v);
            for (Index i = 1; i <= n; ++i) {
                CHECK(f[i - 1] == Catch::Approx(s[i].real() - sys.p()[i]).margin(1e-12));
                const Real second = sys.is_pq(i) ? s[i].imag() - sys.q()[i]
                                                 : std::norm(full[i]) - sys.v_set()[i] * sys.v_set()[i];
                CHECK(f[n + i - 1] == Catch::Approx(second).margin(1e-12));
            }
        }
    }
}

TEST_CASE("zero injection is solved by the flat profile") {
    const BusSystem sys = load("/twobus.m");
    CHECK(evaluate(sys, CartesianVoltage::flat(sys)).norm() < 1e-14);
}

TEST_CASE("voltage length is checked") {
    const BusSystem sys = load("/case9.m");
    CHECK_THROWS_AS(evaluate(sys, CartesianVoltage(Vector::Zero(4))), Error);
    CHECK_THROWS_AS(CartesianVoltage(Vector::Zero(3)), Error);
}

TEST_CASE("Lipschitz bound dominates sampled Jacobian norms") {
    const BusSystem sys = load("/case9.m");
    const JacobianBasis basis = build_basis(sys);
    const Real radius = 3.0 * std::sqrt(Real(sys.n()));
    const Real bound = lipschitz_bound(sys, basis, radius);
    std::mt19937_64 rng(3);
    std::normal_distribution<Real> g;
    for (int trial = 0; trial < 50; ++trial) {
        Vector v(2 * sys.n());
        for (Index k = 0; k < v.size(); ++k) v[k] = g(rng);
        v *= radius / v.norm();
        CHECK(spectral_norm(jacobian(sys, basis, CartesianVoltage(v))) <= bound);
    }
}
