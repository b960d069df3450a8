#pragma once

// The Cartesian power-flow operator F, its constant Jacobian basis
// {M_k, N_k} and Jacobian assembly.
//
// Coordinates: a voltage state holds the real and imaginary parts of the n
// non-slack buses stacked as (Vx; Vy). Row a of F (0-based, bus a+1) is the
// active-power mismatch; row n+a is the reactive-power mismatch for a PQ bus
// or |V|^2 - v^2 for a PV bus. Powers use S_i = V_i * conj((YV)_i).

#include "monopf/core.hpp"
#include "monopf/network.hpp"

#include <Eigen/SparseCore>

#include <cmath>
#include <vector>

namespace monopf {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Stacked real/imaginary voltages of the non-slack buses.
class CartesianVoltage {
public:
    CartesianVoltage() = default;
    explicit CartesianVoltage(Vector stacked) : v_(std::move(stacked)) {
        require(v_.size() % 2 == 0, ErrorCode::DimensionMismatch, "stacked voltage length is odd");
        require(v_.allFinite(), ErrorCode::InvalidArgument, "non-finite voltage component");
    }
    CartesianVoltage(const Vector& vx, const Vector& vy) : v_(vx.size() + vy.size()) {
        require(vx.size() == vy.size(), ErrorCode::DimensionMismatch, "vx and vy lengths differ");
        v_ << vx, vy;
        require(v_.allFinite(), ErrorCode::InvalidArgument, "non-finite voltage component");
    }

    /// Every non-slack bus at the slack phasor.
    static CartesianVoltage flat(const BusSystem& system) {
        const Index n = system.n();
        return CartesianVoltage(Vector::Constant(n, system.slack_voltage().real()),
                                Vector::Constant(n, system.slack_voltage().imag()));
    }

    /// From complex phasors of the non-slack buses.
    static CartesianVoltage from_phasors(const ComplexVector& phasors) {
        return CartesianVoltage(phasors.real(), phasors.imag());
    }

    Index n() const { return v_.size() / 2; }
    Real vx(Index a) const { return v_[a]; }
    Real vy(Index a) const { return v_[n() + a]; }
    Complex phasor(Index a) const { return {vx(a), vy(a)}; }
    const Vector& stacked() const { return v_; }
    Vector& stacked() { return v_; }

    /// Phasors of all buses 0..n with the slack prepended.
    ComplexVector full(Complex slack) const {
        ComplexVector out(n() + 1);
        out[0] = slack;
        for (Index a = 0; a < n(); ++a) out[a + 1] = phasor(a);
        return out;
    }

private:
    Vector v_;
};

namespace detail {

inline void require_matching(const BusSystem& system, Index length) {
    require(length == 2 * system.n(), ErrorCode::DimensionMismatch,
            "voltage has " + std::to_string(length) + " entries, system needs " +
                std::to_string(2 * system.n()));
}

}  // namespace detail

/// Power-flow residual F(V). Neighbour sums include the slack bus.
inline Vector evaluate(const BusSystem& system, const CartesianVoltage& voltage) {
    detail::require_matching(system, voltage.stacked().size());
    const Index n = system.n();
    const ComplexMatrix& y = system.admittance();
    const Complex v0 = system.slack_voltage();
    auto x = [&](Index bus) { return bus == 0 ? v0.real() : voltage.vx(bus - 1); };
    auto yy = [&](Index bus) { return bus == 0 ? v0.imag() : voltage.vy(bus - 1); };

    Vector r(2 * n);
    for (Index i = 1; i <= n; ++i) {
        const Real xi = x(i), yi = yy(i);
        const Real mag2 = xi * xi + yi * yi;
        Real p = y(i, i).real() * mag2;
        Real q = -y(i, i).imag() * mag2;
        for (Index j = 0; j <= n; ++j) {
            if (j == i || y(i, j) == Complex(0, 0)) continue;
            const Real g = y(i, j).real(), b = y(i, j).imag();
            const Real in_phase = xi * x(j) + yi * yy(j);
            const Real cross = yi * x(j) - xi * yy(j);
            p += g * in_phase + b * cross;
            q += g * cross - b * in_phase;
        }
        r[i - 1] = p - system.p()[i];
        if (system.is_pq(i)) {
            r[n + i - 1] = q - system.q()[i];
        } else {
            r[n + i - 1] = mag2 - system.v_set()[i] * system.v_set()[i];
        }
    }
    return r;
}

/// S = V .* conj(Y V) by direct complex arithmetic, for any admittance.
inline ComplexVector complex_power_oracle(const ComplexMatrix& admittance, const ComplexVector& v) {
    require(admittance.rows() == v.size() && admittance.cols() == v.size(),
            ErrorCode::DimensionMismatch, "admittance and voltage sizes differ");
    return v.cwiseProduct((admittance * v).conjugate());
}

inline ComplexVector complex_power_oracle(const BusSystem& system, const ComplexVector& v) {
    return complex_power_oracle(system.admittance(), v);
}

/// Constant matrices whose voltage-weighted sum is the Jacobian of F.
///
/// J(V) = sum_{k=0..n} M[k] * Vx_k + N[k] * Vy_k, where index 0 is the slack
/// (its components are fixed) and k >= 1 are the non-slack buses.
struct JacobianBasis {
    std::vector<SparseMatrix> M;
    std::vector<SparseMatrix> N;

    Index n() const { return static_cast<Index>(M.size()) - 1; }
};

/// Builds {M_k, N_k} for k = 0..n.
///
/// Diagonal terms carry row k of G and B over the non-slack columns, with the
/// reactive rows of PV buses masked out. For k >= 1 the k-th active row and,
/// for PQ buses, the k-th reactive row receive the full row of G and B; a PV
/// bus instead gets the 2*e_k*e_k' magnitude term.
inline JacobianBasis build_basis(const BusSystem& system) {
    const Index n = system.n();
    const Index d = 2 * n;
    const Matrix g = system.conductance();
    const Matrix b = system.susceptance();

    JacobianBasis basis;
    basis.M.reserve(static_cast<std::size_t>(n + 1));
    basis.N.reserve(static_cast<std::size_t>(n + 1));
    using Triplet = Eigen::Triplet<double>;

    for (Index k = 0; k <= n; ++k) {
        std::vector<Triplet> m, nn;
        auto put = [](std::vector<Triplet>& list, Index r, Index c, Real v) {
            if (v != 0.0) list.emplace_back(r, c, v);
        };
        for (Index a = 0; a < n; ++a) {
            const Real gk = g(k, a + 1), bk = b(k, a + 1);
            const bool pq = system.is_pq(a + 1);
            put(m, a, a, gk);
            put(m, a, n + a, bk);
            put(nn, a, a, -bk);
            put(nn, a, n + a, gk);
            if (pq) {
                put(m, n + a, a, -bk);
                put(m, n + a, n + a, gk);
                put(nn, n + a, a, -gk);
                put(nn, n + a, n + a, -bk);
            }
        }
        if (k >= 1) {
            const Index row = k - 1;
            for (Index c = 0; c < n; ++c) {
                const Real gk = g(k, c + 1), bk = b(k, c + 1);
                put(m, row, c, gk);
                put(m, row, n + c, -bk);
                put(nn, row, c, bk);
                put(nn, row, n + c, gk);
                if (system.is_pq(k)) {
                    put(m, n + row, c, -bk);
                    put(m, n + row, n + c, -gk);
                    put(nn, n + row, c, gk);
                    put(nn, n + row, n + c, -bk);
                }
            }
            if (system.is_pv(k)) {
                put(m, n + row, row, 2.0);
                put(nn, n + row, n + row, 2.0);
            }
        }
        SparseMatrix mk(d, d), nk(d, d);
        mk.setFromTriplets(m.begin(), m.end());
        nk.setFromTriplets(nn.begin(), nn.end());
        mk.prune(0.0);
        nk.prune(0.0);
        basis.M.push_back(std::move(mk));
        basis.N.push_back(std::move(nk));
    }
    return basis;
}

/// The slack contribution M_0 Vx_0 + N_0 Vy_0, constant in the state.
inline Matrix jacobian_constant(const BusSystem& system, const JacobianBasis& basis) {
    const Complex v0 = system.slack_voltage();
    return Matrix(basis.M[0] * v0.real() + basis.N[0] * v0.imag());
}

inline Matrix jacobian(const BusSystem& system, const JacobianBasis& basis,
                       const CartesianVoltage& voltage) {
    detail::require_matching(system, voltage.stacked().size());
    require(basis.n() == system.n(), ErrorCode::DimensionMismatch, "basis built for another system");
    Matrix j = jacobian_constant(system, basis);
    for (Index a = 0; a < system.n(); ++a) {
        j += basis.M[a + 1] * voltage.vx(a);
        j += basis.N[a + 1] * voltage.vy(a);
    }
    return j;
}

inline Real spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

/// Upper bound on ||W * J(V)||_2 over ||V|| <= radius.
///
/// ||W J(V)|| <= ||W|| (||J_0|| + sum_k |Vx_k| ||M_k|| + |Vy_k| ||N_k||), and by
/// Cauchy-Schwarz the sum is at most radius * sqrt(sum ||M_k||^2 + ||N_k||^2).
inline Real lipschitz_bound(const BusSystem& system, const JacobianBasis& basis, Real radius,
                            const Matrix& w) {
    require(radius > 0, ErrorCode::InvalidArgument, "radius must be positive");
    const Real base = spectral_norm(jacobian_constant(system, basis));
    Real sum_sq = 0.0;
    for (Index k = 1; k <= basis.n(); ++k) {
        const Real nm = spectral_norm(Matrix(basis.M[k]));
        const Real nn = spectral_norm(Matrix(basis.N[k]));
        sum_sq += nm * nm + nn * nn;
    }
    return spectral_norm(w) * (base + radius * std::sqrt(sum_sq));
}

inline Real lipschitz_bound(const BusSystem& system, const JacobianBasis& basis, Real radius) {
    return lipschitz_bound(system, basis, radius, Matrix::Identity(2 * system.n(), 2 * system.n()));
}

}  // namespace monopf
