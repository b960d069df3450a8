#pragma once

// Reference computations shared by the unit and acceptance tests. They are
// written from the complex power formula, not from the Jacobian basis.

#include "monopf/network.hpp"
#include "monopf/operator.hpp"

namespace oracle {

using namespace monopf;

// Jacobian from the complex derivatives of S = V .* conj(Y V):
//   dS/dVx_k = conj(I_k) e_k + V .* conj(Y e_k)
//   dS/dVy_k = j conj(I_k) e_k - j V .* conj(Y e_k)
// restricted to the non-slack rows and columns. PV rows differentiate |V|^2.
inline Matrix complex_jacobian(const BusSystem& sys, const CartesianVoltage& v) {
    const Index n = sys.n();
    const ComplexVector full = v.full(sys.slack_voltage());
    const ComplexMatrix& y = sys.admittance();
    const ComplexVector current = y * full;
    Matrix j = Matrix::Zero(2 * n, 2 * n);
    for (Index k = 1; k <= n; ++k) {
        ComplexVector dx = full.cwiseProduct(y.col(k).conjugate());
        ComplexVector dy = -Complex(0, 1) * dx;
        dx[k] += std::conj(current[k]);
        dy[k] += Complex(0, 1) * std::conj(current[k]);
        for (Index i = 1; i <= n; ++i) {
            j(i - 1, k - 1) = dx[i].real();
            j(i - 1, n + k - 1) = dy[i].real();
            if (sys.is_pq(i)) {
                j(n + i - 1, k - 1) = dx[i].imag();
                j(n + i - 1, n + k - 1) = dy[i].imag();
            }
        }
    }
    for (Index i : sys.pv()) {
        j(n + i - 1, i - 1) = 2 * full[i].real();
        j(n + i - 1, n + i - 1) = 2 * full[i].imag();
    }
    return j;
}

inline Matrix finite_difference_jacobian(const BusSystem& sys, const CartesianVoltage& v, Real h) {
    const Index d = v.stacked().size();
    Matrix j(d, d);
    for (Index k = 0; k < d; ++k) {
        Vector up = v.stacked(), dn = v.stacked();
        up[k] += h;
        dn[k] -= h;
        j.col(k) = (evaluate(sys, CartesianVoltage(up)) - evaluate(sys, CartesianVoltage(dn))) / (2 * h);
    }
    return j;
}

}  // namespace oracle
