#pragma once

// Monotonicity domains C(W) = {V : Sym(W J(V)) >= mI, ||V|| <= b}: membership,
// projection, and selection of (W, rho) through a block LMI with bisection.

#include "monopf/core.hpp"
#include "monopf/network.hpp"
#include "monopf/operator.hpp"
#include "monopf/sdp.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace monopf {

/// Weighting matrix, monotonicity modulus and compactness radius.
struct DomainSpec {
    Matrix W;
    Real m = 1e-3;
    Real b = 1.0;

    DomainSpec() = default;
    DomainSpec(Matrix w, Real modulus, Real radius) : W(std::move(w)), m(modulus), b(radius) {
        require(W.rows() == W.cols(), ErrorCode::NonSquare, "W must be square");
        require(m > 0, ErrorCode::InvalidArgument, "m must be positive");
        require(b > 0, ErrorCode::InvalidArgument, "b must be positive");
        require(W.allFinite(), ErrorCode::SingularW, "W has non-finite entries");
        Eigen::JacobiSVD<Matrix> svd(W);
        const Vector s = svd.singularValues();
        require(s.size() > 0 && s(s.size() - 1) > 1e-12 * s(0), ErrorCode::SingularW,
                "W is singular or badly conditioned");
    }

    /// Default radius 3*sqrt(n) for n non-slack buses.
    static Real default_radius(Index n) { return 3.0 * std::sqrt(static_cast<Real>(n)); }
};

/// Affine matrix map A(V) = C0 + sum_k V_k A_k with A(V) = Sym(W J(V)).
/// Also holds the factorization used by the projection.
class DomainMap {
public:
    DomainMap(Matrix constant, std::vector<Matrix> coefficients)
        : c0_(sym_part(constant).matrix()) {
        const Index d = c0_.rows();
        for (auto& a : coefficients) {
            require(a.rows() == d && a.cols() == d, ErrorCode::DimensionMismatch,
                    "coefficient shape differs from constant");
            a_.push_back(sym_part(a).matrix());
        }
        const Index p = variable_count();
        gram_.resize(p, p);
        for (Index k = 0; k < p; ++k) {
            for (Index l = k; l < p; ++l) {
                gram_(k, l) = gram_(l, k) = a_[std::size_t(k)].cwiseProduct(a_[std::size_t(l)]).sum();
            }
        }
        const Real top = p > 0 ? Eigen::SelfAdjointEigenSolver<Matrix>(gram_, Eigen::EigenvaluesOnly)
                                     .eigenvalues()
                                     .maxCoeff()
                               : 0.0;
        omega_ = top > 0 ? 1.0 / top : 1.0;
        metric_ = Matrix::Identity(p, p) + omega_ * gram_;
        factor_.compute(metric_);
    }

    Index dim() const { return c0_.rows(); }
    Index variable_count() const { return static_cast<Index>(a_.size()); }
    const Matrix& constant() const { return c0_; }
    const std::vector<Matrix>& coefficients() const { return a_; }

    Matrix evaluate(const Vector& v) const {
        require(v.size() == variable_count(), ErrorCode::DimensionMismatch, "voltage length");
        Matrix out = c0_;
        for (Index k = 0; k < v.size(); ++k) out += v[k] * a_[std::size_t(k)];
        return out;
    }

    /// (A^T Z)_k = <A_k, Z>.
    Vector adjoint(const Matrix& z) const {
        Vector out(variable_count());
        for (Index k = 0; k < out.size(); ++k) out[k] = a_[std::size_t(k)].cwiseProduct(z).sum();
        return out;
    }

    /// Weight on the matrix part in the lifted inner product.
    Real omega() const { return omega_; }
    /// H = I + omega * Gram; the projection is orthogonal in this metric.
    const Matrix& metric() const { return metric_; }
    Vector solve_metric(const Vector& rhs) const { return factor_.solve(rhs); }

private:
    Matrix c0_;
    std::vector<Matrix> a_;
    Matrix gram_;
    Matrix metric_;
    Real omega_ = 1.0;
    Eigen::LLT<Matrix> factor_;
};

/// C0 = Sym(W J0) from the slack terms; A_k = Sym(W M_k), A_{n+k} = Sym(W N_k).
inline DomainMap assemble_domain_map(const JacobianBasis& basis, const DomainSpec& spec,
                                     const BusSystem& system) {
    const Index n = system.n();
    require(basis.n() == n, ErrorCode::DimensionMismatch, "basis built for another system");
    require(spec.W.rows() == 2 * n, ErrorCode::DimensionMismatch, "W must be 2n x 2n");
    std::vector<Matrix> coefficients(static_cast<std::size_t>(2 * n));
    for (Index k = 1; k <= n; ++k) {
        coefficients[std::size_t(k - 1)] = spec.W * basis.M[std::size_t(k)];
        coefficients[std::size_t(n + k - 1)] = spec.W * basis.N[std::size_t(k)];
    }
    return DomainMap(spec.W * jacobian_constant(system, basis), std::move(coefficients));
}

struct Membership {
    bool inside = false;
    Real margin = 0.0;
};

/// margin = lambda_min(A(V)) - m; inside iff margin >= 0 and ||V|| <= b.
inline Membership membership(const CartesianVoltage& voltage, const DomainMap& map,
                             const DomainSpec& spec) {
    const Real margin = min_eig(SymMatrix(map.evaluate(voltage.stacked()))).value - spec.m;
    return {margin >= 0.0 && voltage.stacked().norm() <= spec.b, margin};
}

struct ProjectionOptions {
    /// Allowed margin deficit and Dykstra step tolerance.
    Real tolerance = 1e-9;
    int max_iterations = 20000;
};

namespace detail {

/// Newton's method on the optimality conditions of the projection when one
/// simple eigenvalue is active:
///
///     H (V - V0) = mu * grad lambda_min(A(V)),   lambda_min(A(V)) = m,   mu >= 0.
///
/// The Hessian of lambda_min comes from second-order eigenvalue
/// perturbation. Returns nothing unless the result verifies as the projection.
inline std::optional<Vector> project_simple_face(const Vector& v0, const DomainMap& map, const DomainSpec& spec,
                                                 Real tol, Vector v, int max_iterations = 40) {
    const Index d = map.dim();
    const Index p = map.variable_count();
    const Matrix& h = map.metric();
    const auto& coeffs = map.coefficients();
    Real mu = -1.0;
    bool settled = false;
    Matrix kkt(p + 1, p + 1);
    Vector rhs(p + 1);
    for (int it = 0; it < max_iterations; ++it) {
        const Eigen::SelfAdjointEigenSolver<Matrix> es(map.evaluate(v));
        const Vector& lam = es.eigenvalues();
        const Matrix& u = es.eigenvectors();
        const Vector u0 = u.col(0);
        Vector g(p);
        Matrix b(p, d - 1);
        for (Index k = 0; k < p; ++k) {
            const Vector au = coeffs[std::size_t(k)] * u0;
            g[k] = u0.dot(au);
            b.row(k) = (u.rightCols(d - 1).transpose() * au).transpose();
        }
        if (mu < 0) {
            // Least-squares multiplier for the first iterate.
            mu = std::max<Real>(0.0, g.dot(h * (v - v0)) / std::max(g.squaredNorm(), 1e-300));
        }
        const Vector gaps = (lam.tail(d - 1).array() - lam(0)).matrix();
        if (gaps.minCoeff() <= 1e-10) return std::nullopt;
        const Matrix hess = -2.0 * b * gaps.cwiseInverse().asDiagonal() * b.transpose();

        const Vector r1 = h * (v - v0) - mu * g;
        const Real r2 = lam(0) - spec.m;
        if (settled && std::abs(r2) <= 0.5 * tol) {
            if (mu < -tol || v.norm() > spec.b || lam(1) < spec.m - tol) return std::nullopt;
            return v;
        }
        kkt.topLeftCorner(p, p) = h - mu * hess;
        kkt.topRightCorner(p, 1) = -g;
        kkt.bottomLeftCorner(1, p) = g.transpose();
        kkt(p, p) = 0.0;
        rhs.head(p) = -r1;
        rhs(p) = -r2;
        const Vector step = kkt.partialPivLu().solve(rhs);
        if (!step.allFinite()) return std::nullopt;
        v += step.head(p);
        mu += step(p);
        settled = step.head(p).norm() <= std::max(1e-3 * tol, 1e-15 * (1.0 + v.norm())) || r1.norm() <= 1e-3 * tol;
    }
    return std::nullopt;
}

}  // namespace detail

/// Projection onto C(W) in the metric H = I + omega * Gram (see DomainMap).
///
/// The optimality conditions are first solved by Newton's method assuming a
/// single active eigenvalue. If that does not verify, Dykstra alternates between
/// the graph {(V, Z) : Z = A(V)} and the product {Z >= mI} x {||V|| <= b}. Once the iterates agree, any remaining margin
/// deficit is removed by moving toward `anchor`, a point known to be inside.
inline CartesianVoltage project_domain(const CartesianVoltage& voltage, const DomainMap& map,
                                       const DomainSpec& spec, const ProjectionOptions& opts = {},
                                       const std::optional<Vector>& anchor = std::nullopt) {
    const Vector& v0 = voltage.stacked();
    require(v0.size() == map.variable_count(), ErrorCode::DimensionMismatch, "voltage length");
    if (membership(voltage, map, spec).inside) return voltage;
    if (auto face = detail::project_simple_face(v0, map, spec, opts.tolerance, v0, 12)) {
        return CartesianVoltage(*face);
    }

    const Real omega = map.omega();
    auto to_ball = [&](Vector v) {
        const Real norm = v.norm();
        if (norm > spec.b) v *= spec.b / norm;
        return v;
    };
    auto margin_of = [&](const Vector& v) {
        return min_eig(SymMatrix(map.evaluate(v))).value - spec.m;
    };

    Vector xv = v0, pv = Vector::Zero(v0.size()), qv = Vector::Zero(v0.size());
    Matrix xz = map.evaluate(v0);
    Matrix pz = Matrix::Zero(xz.rows(), xz.cols()), qz = pz;
    Vector yv = v0, previous = v0;
    Real residual = std::numeric_limits<Real>::infinity();
    Real next_newton = 1e-2;

    for (int it = 1; it <= opts.max_iterations; ++it) {
        // Graph of A.
        const Vector sv = xv + pv;
        const Matrix sz = xz + pz;
        yv = map.solve_metric(sv + omega * map.adjoint(sz - map.constant()));
        const Matrix yz = map.evaluate(yv);
        pv = sv - yv;
        pz = sz - yz;
        // Cone and ball.
        const Vector tv = yv + qv;
        const Matrix tz = yz + qz;
        xv = to_ball(tv);
        xz = clip_spectrum(SymMatrix(tz), spec.m).matrix();
        qv = tv - xv;
        qz = tz - xz;

        const Real gap = std::sqrt((yv - xv).squaredNorm() + omega * (yz - xz).squaredNorm());
        const Real step = (yv - previous).norm();
        previous = yv;
        residual = std::max(gap, step);
        if (gap <= opts.tolerance && step <= opts.tolerance) break;
        if (gap <= next_newton) {
            // Hand over to Newton once Dykstra is near the active face.
            next_newton = gap * 0.1;
            if (auto face = detail::project_simple_face(v0, map, spec, opts.tolerance, yv)) {
                return CartesianVoltage(*face);
            }
        }
        if (it % 50 == 0 && step <= opts.tolerance && margin_of(to_ball(yv)) >= -opts.tolerance) break;
    }

    Vector out = to_ball(yv);
    Real margin = margin_of(out);
    if (margin < -opts.tolerance && anchor && margin_of(*anchor) > 0.0 && anchor->norm() <= spec.b) {
        // Margin is concave along the segment: bisect for the first point
        // that meets the tolerance.
        Real lo = 0.0, hi = 1.0;
        for (int k = 0; k < 80; ++k) {
            const Real mid = 0.5 * (lo + hi);
            if (margin_of(out + mid * (*anchor - out)) >= -0.5 * opts.tolerance) hi = mid;
            else lo = mid;
        }
        out += hi * (*anchor - out);
        margin = margin_of(out);
    }
    if (margin < -opts.tolerance) throw ProjectionError(out, std::max(residual, -margin));
    return CartesianVoltage(out);
}

// ---------------------------------------------------------------------------
// Domain selection
// ---------------------------------------------------------------------------

/// Octagon coefficients K (2 x 4). The eight points (+-K1l, K2l) enclose the
/// unit disc.
inline std::array<std::array<Real, 4>, 2> octagon() {
    const Real r = std::sqrt(2.0);
    return {{{1 - r, -1, -1, 1 - r}, {1, r - 1, 1 - r, -1}}};
}

/// The eight octagon vertices as (x, y) pairs.
inline std::vector<std::array<Real, 2>> octagon_vertices() {
    const auto k = octagon();
    std::vector<std::array<Real, 2>> out;
    for (int l = 0; l < 4; ++l) {
        out.push_back({-k[0][l], k[1][l]});
        out.push_back({k[0][l], k[1][l]});
    }
    return out;
}

/// Per-bus perturbation directions C_{i,l,s} = -s K1l M_i - K2l N_i, s = +-1,
/// in the order used by the selection blocks (bus-major, then l, then s).
inline std::vector<Matrix> perturbation_directions(const JacobianBasis& basis) {
    const auto k = octagon();
    std::vector<Matrix> out;
    for (Index i = 1; i <= basis.n(); ++i) {
        const Matrix mi(basis.M[std::size_t(i)]), ni(basis.N[std::size_t(i)]);
        for (int l = 0; l < 4; ++l) {
            out.push_back(-k[0][l] * mi - k[1][l] * ni);
            out.push_back(k[0][l] * mi - k[1][l] * ni);
        }
    }
    return out;
}

/// Block system of the selection program in the variables (G, X_1..X_n):
///
///   (a)     Sym(G J) - mI - sum_i X_i                       >= 0
///   (b, c)  X_i - rho delta_i Sym(G C_{i,l,s})               >= 0
///
/// with W = G. When built with `preconditioned = true` the variable is
/// G = W J and every J, C is replaced by J^{-1} J = I and J^{-1} C, which is
/// the same program after an invertible change of variables.
class SelectionBlockSystem {
public:
    SelectionBlockSystem(Matrix nominal_jacobian, std::vector<Matrix> directions, Vector delta,
                         Real rho, Real m, bool preconditioned)
        : j_(std::move(nominal_jacobian)),
          c_(std::move(directions)),
          delta_(std::move(delta)),
          rho_(rho),
          m_(m),
          pre_(preconditioned) {
        d_ = j_.rows();
        n_ = delta_.size();
        require(static_cast<Index>(c_.size()) == 8 * n_, ErrorCode::DimensionMismatch,
                "need 8 directions per bus");
        if (pre_) {
            Eigen::PartialPivLU<Matrix> lu(j_);
            for (auto& c : c_) c = lu.solve(c);
        }
        ct_.reserve(c_.size());
        for (const auto& c : c_) ct_.push_back(c.transpose());
    }

    Index dim() const { return d_; }
    Index buses() const { return n_; }
    Real rho() const { return rho_; }
    bool preconditioned() const { return pre_; }
    Index variable_count() const { return (n_ + 1) * d_ * d_; }
    Index block_count() const { return 1 + 8 * n_; }

    Vector pack(const Matrix& g, const std::vector<Matrix>& x) const {
        Vector z(variable_count());
        Eigen::Map<Matrix>(z.data(), d_, d_) = g;
        for (Index i = 0; i < n_; ++i) Eigen::Map<Matrix>(z.data() + (i + 1) * d_ * d_, d_, d_) = x[std::size_t(i)];
        return z;
    }
    Matrix g_of(const Vector& z) const { return Eigen::Map<const Matrix>(z.data(), d_, d_); }
    Matrix x_of(const Vector& z, Index i) const {
        const Matrix x = Eigen::Map<const Matrix>(z.data() + (i + 1) * d_ * d_, d_, d_);
        return 0.5 * (x + x.transpose());
    }

    void evaluate(const Vector& z, std::vector<Matrix>& blocks) const {
        blocks.resize(std::size_t(block_count()));
        const Matrix g = g_of(z);
        Matrix a = pre_ ? Matrix(g) : Matrix(g * j_);
        a = Matrix(0.5 * (a + a.transpose()));
        a.diagonal().array() -= m_;
        for (Index i = 0; i < n_; ++i) {
            const Matrix x = x_of(z, i);
            a -= x;
            const Real scale = rho_ * delta_[i];
            for (Index r = 0; r < 8; ++r) {
                const std::size_t idx = std::size_t(8 * i + r);
                Matrix gc = g * c_[idx];
                blocks[idx + 1] = x - scale * 0.5 * (gc + gc.transpose());
            }
        }
        blocks[0] = std::move(a);
    }

    void add_adjoint(const std::vector<Matrix>& weights, Vector& grad) const {
        Eigen::Map<Matrix> gg(grad.data(), d_, d_);
        const Matrix& e0 = weights[0];
        const bool has0 = e0.size() > 0;
        if (has0) gg += pre_ ? e0 : Matrix(e0 * j_.transpose());
        for (Index i = 0; i < n_; ++i) {
            Eigen::Map<Matrix> gx(grad.data() + (i + 1) * d_ * d_, d_, d_);
            if (has0) gx -= e0;
            const Real scale = rho_ * delta_[i];
            for (Index r = 0; r < 8; ++r) {
                const std::size_t idx = std::size_t(8 * i + r);
                const Matrix& e = weights[idx + 1];
                if (e.size() == 0) continue;
                gx += e;
                gg.noalias() -= scale * (e * ct_[idx]);
            }
        }
    }

private:
    Matrix j_;
    std::vector<Matrix> c_;
    std::vector<Matrix> ct_;
    Vector delta_;
    Real rho_;
    Real m_;
    bool pre_;
    Index d_ = 0;
    Index n_ = 0;
};

static_assert(LmiBlockSystem<SelectionBlockSystem>);
static_assert(LmiBlockSystem<DenseLmiSystem>);

/// The unpreconditioned block system at (v, delta, rho, m).
inline SelectionBlockSystem build_selection_blocks(const BusSystem& system, const JacobianBasis& basis,
                                                   const CartesianVoltage& nominal, const Vector& delta,
                                                   Real rho, Real m) {
    require(delta.size() == system.n(), ErrorCode::DimensionMismatch, "delta needs one entry per bus");
    require((delta.array() > 0).all(), ErrorCode::InvalidArgument, "delta must be positive");
    require(rho >= 0, ErrorCode::InvalidArgument, "rho must be non-negative");
    return SelectionBlockSystem(jacobian(system, basis, nominal), perturbation_directions(basis), delta,
                                rho, m, false);
}

struct SelectionOptions {
    Real rho_max = 2.0;
    Real bisect_tolerance = 1e-3;
    Real eps_feas = 1e-6;
    /// Margin iterations per bisection probe.
    int budget = 1500;
    int stall_window = 300;
    AscentRule rule = AscentRule::SmoothedAccelerated;
};

struct SelectionProbe {
    Real rho = 0;
    bool feasible = false;
    Real margin = 0;
    int iterations = 0;
};

struct SelectionResult {
    Matrix W;
    Real rho = 0;
    std::vector<Matrix> X;
    /// Smallest eigenvalue over all unpreconditioned blocks at (W, X, rho).
    Real margin = 0;
    std::vector<SelectionProbe> probes;
};

/// Bracketing and bisection on rho for the largest value whose block system
/// is found feasible. Feasible probes return early; infeasible ones spend the budget.
inline SelectionResult select_domain(const BusSystem& system, const JacobianBasis& basis,
                                     const CartesianVoltage& nominal, const Vector& delta, Real m,
                                     const SelectionOptions& opts = {}) {
    require(delta.size() == system.n(), ErrorCode::DimensionMismatch, "delta needs one entry per bus");
    require((delta.array() > 0).all(), ErrorCode::InvalidArgument, "delta must be positive");
    require(m > 0, ErrorCode::InvalidArgument, "m must be positive");

    const Matrix j = jacobian(system, basis, nominal);
    Eigen::JacobiSVD<Matrix> svd(j);
    const Vector sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 1e-10 * std::max<Real>(1.0, sv(0)))) {
        throw Error(ErrorCode::SingularNominalJacobian, "Jacobian at the nominal profile is singular");
    }
    const Eigen::PartialPivLU<Matrix> lu(j);
    const Matrix j_inv = lu.inverse();
    const auto directions = perturbation_directions(basis);
    const Index n = system.n(), d = 2 * n;

    // Warm start G = I, X_i = rho delta_i (|Sym(J^-1 M_i)| + |Sym(J^-1 N_i)|),
    // where |S| has the eigenvalues of S replaced by their magnitudes. It
    // satisfies every (b, c) block, and block (a) holds for rho <= rho0.
    auto abs_sym = [](const Matrix& a) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (a + a.transpose()));
        const Matrix& u = es.eigenvectors();
        return Matrix(u * es.eigenvalues().cwiseAbs().asDiagonal() * u.transpose());
    };
    std::vector<Matrix> x_unit(static_cast<std::size_t>(n));
    Matrix x_sum = Matrix::Zero(d, d);
    for (Index i = 1; i <= n; ++i) {
        x_unit[std::size_t(i - 1)] = delta[i - 1] * (abs_sym(j_inv * Matrix(basis.M[std::size_t(i)])) +
                                                    abs_sym(j_inv * Matrix(basis.N[std::size_t(i)])));
        x_sum += x_unit[std::size_t(i - 1)];
    }
    const Real top = Eigen::SelfAdjointEigenSolver<Matrix>(x_sum, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
    const Real rho0 = top > 0 ? std::min(opts.rho_max, (1.0 - m - 2.0 * opts.eps_feas) / top) : opts.rho_max;

    auto scaled_start = [&](Real rho) {
        std::vector<Matrix> x;
        for (const auto& u : x_unit) x.push_back(rho * u);
        return x;
    };

    SelectionBlockSystem lo_sys(j, directions, delta, std::max(rho0, 0.0), m, true);
    Vector best_z = lo_sys.pack(Matrix::Identity(d, d), scaled_start(std::max(rho0, 0.0)));
    Real lo = std::max(rho0, 0.0);
    Real hi = opts.rho_max;
    SelectionResult result;
    result.probes.push_back({lo, true, 0.0, 0});

    auto probe = [&](Real rho) -> std::optional<Vector> {
        SelectionBlockSystem sys(j, directions, delta, rho, m, true);
        // Start from the last witness with X rescaled to the new rho.
        Vector z0 = best_z;
        const Real factor = lo > 0 ? rho / lo : 1.0;
        z0.tail(n * d * d) *= factor;
        if (lo <= 0) z0 = sys.pack(Matrix::Identity(d, d), scaled_start(rho));
        MarginOptions mo;
        mo.max_iterations = opts.budget;
        mo.rule = opts.rule;
        mo.stall_window = opts.stall_window;
        mo.stop_at = opts.eps_feas;
        const MarginResult r = lmi_margin(sys, z0, 4.0 * std::max(z0.norm(), 1.0), mo);
        const bool ok = r.t_star >= opts.eps_feas;
        result.probes.push_back({rho, ok, r.t_star, r.iterations});
        if (ok) return r.z_star;
        return std::nullopt;
    };

    // Grow geometrically until a probe fails, then bisect the bracket.
    while (lo > 0 && 2.0 * lo < hi) {
        if (auto z = probe(2.0 * lo)) {
            lo *= 2.0;
            best_z = *z;
        } else {
            hi = 2.0 * lo;
            break;
        }
    }
    while (hi - lo > opts.bisect_tolerance) {
        const Real mid = 0.5 * (lo + hi);
        if (auto z = probe(mid)) {
            lo = mid;
            best_z = *z;
        } else {
            hi = mid;
        }
    }

    SelectionBlockSystem plain(j, directions, delta, lo, m, true);
    result.rho = lo;
    result.W = plain.g_of(best_z) * j_inv;
    for (Index i = 0; i < n; ++i) result.X.push_back(plain.x_of(best_z, i));

    // Re-check in the original variables.
    const SelectionBlockSystem check(j, directions, delta, lo, m, false);
    std::vector<Matrix> blocks;
    check.evaluate(check.pack(result.W, result.X), blocks);
    result.margin = detail::min_eigenvalue(blocks);
    return result;
}

}  // namespace monopf
