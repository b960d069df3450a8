#pragma once

// Dense symmetric-matrix utilities and a first-order maximizer for the
// feasibility margin of a system of linear matrix inequalities
//
//     t(z) = min_j lambda_min(A_j(z)),   A_j(z) = C_j + sum_k z_k A_{j,k},
//
// over a Euclidean ball ||z|| <= R. t is concave; t(z) >= eps proves that
// every block is positive definite at z.

#include "monopf/core.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <vector>

namespace monopf {

/// Real symmetric matrix. Construction symmetrizes its argument.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(const Matrix& m) {
        require(m.rows() == m.cols(), ErrorCode::NonSquare, "matrix is not square");
        m_ = 0.5 * (m + m.transpose());
    }

    static SymMatrix identity(Index d) { return SymMatrix(Matrix::Identity(d, d)); }

    Index dim() const { return m_.rows(); }
    const Matrix& matrix() const { return m_; }

private:
    Matrix m_;
};

/// (M + M') / 2.
inline SymMatrix sym_part(const Matrix& m) { return SymMatrix(m); }

struct EigenPair {
    Real value = 0;
    Vector vector;
};

namespace detail {

inline Eigen::SelfAdjointEigenSolver<Matrix> eigensolve(const Matrix& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(s);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::ConvergenceFailure, "symmetric eigensolver failed");
    }
    return solver;
}

}  // namespace detail

/// Smallest eigenvalue and a unit eigenvector.
inline EigenPair min_eig(const SymMatrix& s) {
    require(s.dim() > 0, ErrorCode::InvalidArgument, "empty matrix");
    const auto solver = detail::eigensolve(s.matrix());
    return {solver.eigenvalues()(0), solver.eigenvectors().col(0)};
}

/// Frobenius-nearest matrix with all eigenvalues >= floor.
inline SymMatrix clip_spectrum(const SymMatrix& s, Real floor) {
    const auto solver = detail::eigensolve(s.matrix());
    const Vector clipped = solver.eigenvalues().cwiseMax(floor);
    const Matrix& u = solver.eigenvectors();
    return SymMatrix(u * clipped.asDiagonal() * u.transpose());
}

/// Frobenius-nearest positive semidefinite matrix.
inline SymMatrix psd_project(const SymMatrix& s) { return clip_spectrum(s, 0.0); }

// ---------------------------------------------------------------------------
// LMI block systems
// ---------------------------------------------------------------------------

/// A family of affine symmetric-matrix maps of a shared variable z.
///
/// `evaluate` fills one symmetric matrix per block. `add_adjoint` accumulates
/// g_k += sum_j <E_j, A_{j,k}>; an empty E_j contributes nothing.
template <class S>
concept LmiBlockSystem = requires(const S& sys, const Vector& z, std::vector<Matrix>& blocks,
                                  const std::vector<Matrix>& weights, Vector& grad) {
    { sys.variable_count() } -> std::convertible_to<Index>;
    { sys.block_count() } -> std::convertible_to<Index>;
    sys.evaluate(z, blocks);
    sys.add_adjoint(weights, grad);
};

/// LMI system stored as explicit dense coefficient matrices.
class DenseLmiSystem {
public:
    struct Block {
        Matrix constant;
        std::vector<Matrix> coefficients;  // one per variable, all symmetric
    };

    explicit DenseLmiSystem(Index variables) : variables_(variables) {}

    /// Adds C + sum_k z_k A_k. Missing trailing coefficients are zero.
    void add_block(const Matrix& constant, std::vector<Matrix> coefficients) {
        require(constant.rows() == constant.cols(), ErrorCode::NonSquare, "block constant");
        require(static_cast<Index>(coefficients.size()) <= variables_,
                ErrorCode::DimensionMismatch, "too many coefficient matrices");
        Block block{sym_part(constant).matrix(), {}};
        for (auto& c : coefficients) {
            require(c.rows() == constant.rows() && c.cols() == constant.cols(),
                    ErrorCode::DimensionMismatch, "coefficient shape differs from block");
            block.coefficients.push_back(sym_part(c).matrix());
        }
        while (static_cast<Index>(block.coefficients.size()) < variables_) {
            block.coefficients.push_back(Matrix::Zero(constant.rows(), constant.cols()));
        }
        blocks_.push_back(std::move(block));
    }

    Index variable_count() const { return variables_; }
    Index block_count() const { return static_cast<Index>(blocks_.size()); }
    const Block& block(Index j) const { return blocks_[static_cast<std::size_t>(j)]; }

    void evaluate(const Vector& z, std::vector<Matrix>& out) const {
        out.resize(blocks_.size());
        for (std::size_t j = 0; j < blocks_.size(); ++j) {
            out[j] = blocks_[j].constant;
            for (Index k = 0; k < variables_; ++k) {
                if (z[k] != 0.0) out[j] += z[k] * blocks_[j].coefficients[static_cast<std::size_t>(k)];
            }
        }
    }

    void add_adjoint(const std::vector<Matrix>& weights, Vector& grad) const {
        for (std::size_t j = 0; j < blocks_.size(); ++j) {
            if (weights[j].size() == 0) continue;
            for (Index k = 0; k < variables_; ++k) {
                grad[k] += (weights[j].cwiseProduct(blocks_[j].coefficients[static_cast<std::size_t>(k)])).sum();
            }
        }
    }

private:
    Index variables_;
    std::vector<Block> blocks_;
};

// ---------------------------------------------------------------------------
// Margin maximization
// ---------------------------------------------------------------------------

enum class AscentRule {
    /// Projected subgradient: step a/sqrt(k) along the normalized subgradient,
    /// or the Polyak step when a target margin is supplied.
    Subgradient,
    /// Accelerated projected gradient on the entropic smoothing
    /// -mu log sum exp(-lambda/mu) of all block eigenvalues, with mu driven
    /// toward zero. Every iterate is still scored by the exact margin.
    SmoothedAccelerated,
};

enum class MarginStatus { FeasibleWithMargin, BudgetExhausted };

struct MarginOptions {
    int max_iterations = 2000;
    AscentRule rule = AscentRule::Subgradient;
    /// Subgradient: a in a/sqrt(k), as a fraction of the radius.
    Real step_scale = 0.1;
    /// Subgradient: enables Polyak steps toward this margin value.
    std::optional<Real> target;
    /// Stop as soon as the best margin reaches this value.
    std::optional<Real> stop_at;
    /// Stop when the best margin improved by less than stall_tolerance over
    /// the last stall_window iterations (0 disables).
    int stall_window = 0;
    Real stall_tolerance = 1e-7;
    bool record_history = false;
};

struct MarginResult {
    Vector z_star;
    Real t_star = -std::numeric_limits<Real>::infinity();
    int iterations = 0;
    MarginStatus status = MarginStatus::BudgetExhausted;
    /// Best margin after each iteration (when requested).
    std::vector<Real> history;
};

namespace detail {

struct Spectrum {
    std::vector<Vector> values;
    std::vector<Matrix> vectors;
    Real min_value = std::numeric_limits<Real>::infinity();
    std::size_t min_block = 0;
};

inline Spectrum decompose(const std::vector<Matrix>& blocks) {
    Spectrum s;
    s.values.resize(blocks.size());
    s.vectors.resize(blocks.size());
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        auto solver = eigensolve(blocks[j]);
        s.values[j] = solver.eigenvalues();
        s.vectors[j] = solver.eigenvectors();
        if (s.values[j](0) < s.min_value) {
            s.min_value = s.values[j](0);
            s.min_block = j;
        }
    }
    return s;
}

inline Real min_eigenvalue(const std::vector<Matrix>& blocks) {
    Real lo = std::numeric_limits<Real>::infinity();
    for (const auto& b : blocks) {
        Eigen::SelfAdjointEigenSolver<Matrix> solver(b, Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success) {
            throw Error(ErrorCode::ConvergenceFailure, "symmetric eigensolver failed");
        }
        lo = std::min(lo, solver.eigenvalues()(0));
    }
    return lo;
}

inline void project_ball(Vector& z, Real radius) {
    const Real norm = z.norm();
    if (norm > radius) z *= radius / norm;
}

/// Tracks the best iterate and the stopping rules shared by both ascent rules.
class BestTracker {
public:
    BestTracker(const MarginOptions& opts, MarginResult& result) : opts_(opts), result_(result) {}

    void offer(const Vector& z, Real t) {
        if (t > result_.t_star) {
            result_.t_star = t;
            result_.z_star = z;
        }
    }

    /// Called once per completed iteration; true when the loop should stop.
    bool finish_iteration() {
        ++result_.iterations;
        if (opts_.record_history) result_.history.push_back(result_.t_star);
        if (opts_.stop_at && result_.t_star >= *opts_.stop_at) return true;
        if (opts_.stall_window > 0) {
            window_.push_back(result_.t_star);
            if (static_cast<int>(window_.size()) > opts_.stall_window) {
                const Real old = window_[window_.size() - 1 - static_cast<std::size_t>(opts_.stall_window)];
                if (result_.t_star - old < opts_.stall_tolerance * std::max(1.0, std::abs(old))) {
                    return true;
                }
            }
        }
        return false;
    }

private:
    const MarginOptions& opts_;
    MarginResult& result_;
    std::vector<Real> window_;
};

template <LmiBlockSystem System>
void subgradient_ascent(const System& sys, Vector z, Real radius, const MarginOptions& opts,
                        MarginResult& result) {
    BestTracker best(opts, result);
    std::vector<Matrix> blocks;
    std::vector<Matrix> weights(static_cast<std::size_t>(sys.block_count()));
    for (int k = 1; k <= opts.max_iterations; ++k) {
        sys.evaluate(z, blocks);
        const Spectrum spec = decompose(blocks);
        best.offer(z, spec.min_value);

        for (auto& w : weights) w.resize(0, 0);
        const Vector u = spec.vectors[spec.min_block].col(0);
        weights[spec.min_block] = u * u.transpose();
        Vector g = Vector::Zero(sys.variable_count());
        sys.add_adjoint(weights, g);
        const Real gnorm = g.norm();
        if (gnorm == 0.0) {
            // Constant minimizing block: no direction can raise the margin.
            best.finish_iteration();
            break;
        }
        Real step = opts.step_scale * radius / std::sqrt(static_cast<Real>(k)) / gnorm;
        if (opts.target && *opts.target > spec.min_value) {
            step = (*opts.target - spec.min_value) / (gnorm * gnorm);
        }
        z += step * g;
        project_ball(z, radius);
        if (best.finish_iteration()) break;
    }
    sys.evaluate(result.z_star, blocks);
}

/// Value and gradient of the soft-min -mu log sum_j tr exp(-A_j/mu).
template <LmiBlockSystem System>
Real smoothed_margin(const System& sys, const Vector& z, Real mu, std::vector<Matrix>& blocks,
                     Vector& grad, Real& exact) {
    sys.evaluate(z, blocks);
    const Spectrum spec = decompose(blocks);
    exact = spec.min_value;
    Real total = 0.0;
    for (const auto& v : spec.values) total += (-(v.array() - exact) / mu).exp().sum();
    std::vector<Matrix> weights(blocks.size());
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        const Vector w = (-(spec.values[j].array() - exact) / mu).exp() / total;
        if (w.maxCoeff() < 1e-300) continue;
        weights[j] = spec.vectors[j] * w.asDiagonal() * spec.vectors[j].transpose();
    }
    grad.setZero(sys.variable_count());
    sys.add_adjoint(weights, grad);
    return exact - mu * std::log(total);
}

template <LmiBlockSystem System>
void smoothed_ascent(const System& sys, Vector z, Real radius, const MarginOptions& opts,
                     MarginResult& result) {
    BestTracker best(opts, result);
    std::vector<Matrix> blocks;
    Vector grad, grad_trial;
    Real exact = 0.0;

    sys.evaluate(z, blocks);
    const Real t0 = min_eigenvalue(blocks);
    const Real scale = std::max({std::abs(t0), 1e-3 * radius, 1e-12});
    Real mu = 0.05 * scale;
    const Real mu_floor = 1e-7 * scale;
    Real lipschitz = 1.0 / radius;

    Vector y = z, z_prev = z;
    Real momentum = 1.0;
    Real f_z = smoothed_margin(sys, z, mu, blocks, grad, exact);
    best.offer(z, exact);

    for (int k = 1; k <= opts.max_iterations; ++k) {
        const Real f_y = smoothed_margin(sys, y, mu, blocks, grad, exact);
        best.offer(y, exact);
        Vector trial;
        Real f_trial = 0.0;
        for (int backtrack = 0; backtrack < 60; ++backtrack) {
            trial = y + grad / lipschitz;
            project_ball(trial, radius);
            f_trial = smoothed_margin(sys, trial, mu, blocks, grad_trial, exact);
            const Vector step = trial - y;
            if (f_trial >= f_y + grad.dot(step) - 0.5 * lipschitz * step.squaredNorm()) break;
            lipschitz *= 2.0;
        }
        best.offer(trial, exact);

        const Real next_momentum = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
        if (f_trial < f_z) {
            // Adaptive restart: drop the momentum when the objective decreases.
            y = trial;
            momentum = 1.0;
        } else {
            y = trial + ((momentum - 1.0) / next_momentum) * (trial - z_prev);
            momentum = next_momentum;
        }
        z_prev = trial;
        z = trial;
        f_z = f_trial;
        lipschitz *= 0.9;

        if (k % 100 == 0 && mu > mu_floor) {
            mu = std::max(0.7 * mu, mu_floor);
            f_z = smoothed_margin(sys, z, mu, blocks, grad, exact);
        }
        if (best.finish_iteration()) break;
    }
    sys.evaluate(result.z_star, blocks);
}

}  // namespace detail

/// Maximizes the minimum block eigenvalue over ||z|| <= radius starting at z0.
/// Returns the best iterate seen; `t_star` is recomputed from it.
template <LmiBlockSystem System>
MarginResult lmi_margin(const System& sys, Vector z0, Real radius, const MarginOptions& opts = {}) {
    require(radius > 0, ErrorCode::InvalidArgument, "radius must be positive");
    require(z0.size() == sys.variable_count(), ErrorCode::DimensionMismatch, "z0 length");
    require(opts.max_iterations >= 1, ErrorCode::InvalidArgument, "need at least one iteration");
    detail::project_ball(z0, radius);

    MarginResult result;
    result.z_star = z0;
    if (opts.rule == AscentRule::Subgradient) {
        detail::subgradient_ascent(sys, z0, radius, opts, result);
    } else {
        detail::smoothed_ascent(sys, z0, radius, opts, result);
    }

    std::vector<Matrix> blocks;
    sys.evaluate(result.z_star, blocks);
    result.t_star = detail::min_eigenvalue(blocks);
    const bool reached = opts.stop_at ? result.t_star >= *opts.stop_at : result.t_star > 0.0;
    result.status = reached ? MarginStatus::FeasibleWithMargin : MarginStatus::BudgetExhausted;
    return result;
}

/// Some z with margin >= eps_feas, or nothing. An empty result only says that
/// no such point was found within the budget; it does not prove infeasibility.
template <LmiBlockSystem System>
std::optional<Vector> lmi_feasible(const System& sys, Real eps_feas, Real radius, Vector z0,
                                   MarginOptions opts = {}) {
    require(eps_feas > 0, ErrorCode::InvalidArgument, "eps_feas must be positive");
    opts.stop_at = eps_feas;
    const MarginResult r = lmi_margin(sys, std::move(z0), radius, opts);
    if (r.t_star >= eps_feas) return r.z_star;
    return std::nullopt;
}

}  // namespace monopf
