#pragma once

// Extra-gradient solver for the variational inequality
//     find V in C(W):  <W F(V), U - V> >= 0  for all U in C(W),
// and classification of its answer.
//
// The projection onto C(W) is orthogonal in the metric H of the DomainMap,
// so the iteration runs on the operator H^{-1} W F and measures steps in the
// H-norm. Both formulations have the same solution set.

#include "monopf/core.hpp"
#include "monopf/domain.hpp"
#include "monopf/network.hpp"
#include "monopf/operator.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

namespace monopf {

enum class OutcomeKind { Solution, NoSolutionCertificate, NotConverged };

inline const char* to_string(OutcomeKind kind) {
    switch (kind) {
        case OutcomeKind::Solution: return "Solution";
        case OutcomeKind::NoSolutionCertificate: return "NoSolutionCertificate";
        case OutcomeKind::NotConverged: return "NotConverged";
    }
    return "Unknown";
}

struct VIOptions {
    /// Initial step; empty means 0.9 / lipschitz_bound.
    std::optional<Real> step;
    Real tol_residual = 1e-8;
    Real tol_zero = 1e-6;
    int max_iter = 20000;
    /// Projection tolerance at iteration k is
    /// clamp(min(cap, 0.1/k^2, 0.1 * r_{k-1} * tau), floor, cap).
    Real projection_cap = 1e-6;
    Real projection_floor = 1e-13;
    int projection_max_iterations = 20000;
    /// A point strictly inside the domain; lets projections repair a small
    /// margin deficit. Usually the nominal profile.
    std::optional<Vector> anchor;
    bool record_trajectory = false;
};

struct VIOutcome {
    OutcomeKind kind = OutcomeKind::NotConverged;
    CartesianVoltage V_star;
    Real residual_F = 0;
    Real natural_residual = 0;
    int iterations = 0;
    /// Extra-gradient pairs (x, y) with <F_W(y) - F_W(x), y - x> < (m/2)||y - x||^2 - 1e-9.
    int monotonicity_violations = 0;
    Real final_step = 0;
    std::vector<Vector> trajectory;
};

namespace detail {

inline Real h_norm(const Matrix& h, const Vector& u) { return std::sqrt(std::max(0.0, u.dot(h * u))); }

}  // namespace detail

inline VIOutcome solve_vi(const BusSystem& system, const JacobianBasis& basis, const DomainMap& map,
                          const DomainSpec& spec, const CartesianVoltage& x0, const VIOptions& opts = {}) {
    require(opts.tol_residual > 0 && opts.tol_zero > 0 && opts.max_iter > 0, ErrorCode::InvalidArgument,
            "VI tolerances and budget must be positive");
    require(opts.tol_zero > opts.tol_residual, ErrorCode::InvalidArgument, "tol_zero must exceed tol_residual");
    const Matrix& h = map.metric();
    auto op = [&](const Vector& v) -> Vector {
        return map.solve_metric(spec.W * evaluate(system, CartesianVoltage(v)));
    };
    auto project = [&](const Vector& v, Real tol) -> Vector {
        ProjectionOptions po;
        po.tolerance = tol;
        po.max_iterations = opts.projection_max_iterations;
        return project_domain(CartesianVoltage(v), map, spec, po, opts.anchor).stacked();
    };

    Real tau = opts.step ? *opts.step : 0.9 / std::max(lipschitz_bound(system, basis, spec.b, spec.W), 1e-12);
    require(tau > 0, ErrorCode::InvalidArgument, "step must be positive");

    VIOutcome out;
    Vector x = project(x0.stacked(), opts.projection_cap);
    Real last_residual = std::numeric_limits<Real>::infinity();
    bool converged = false;

    for (int k = 1; k <= opts.max_iter; ++k) {
        if (opts.record_trajectory) out.trajectory.push_back(x);
        const Real kk = static_cast<Real>(k);
        const Real eps = std::clamp(std::min({opts.projection_cap, 0.1 / (kk * kk), 0.1 * last_residual * tau}),
                                    opts.projection_floor, opts.projection_cap);
        const Vector gx = op(x);
        Vector y, gy;
        Real ratio = 0;
        for (;;) {
            y = project(x - tau * gx, eps);
            gy = op(y);
            const Real dy = detail::h_norm(h, y - x);
            const Real dg = detail::h_norm(h, gy - gx);
            ratio = dy > 0 ? tau * dg / dy : 0.0;
            if (tau * dg <= 0.9 * dy) break;
            tau *= 0.5;
            if (tau < 1e-12) throw Error(ErrorCode::StepUnderflow, "extra-gradient step fell below 1e-12");
        }
        out.iterations = k;
        last_residual = (x - y).norm() / tau;
        out.natural_residual = last_residual;
        if (last_residual <= opts.tol_residual) {
            converged = true;
            break;
        }

        const Vector d = y - x;
        const Vector fd = spec.W * (evaluate(system, CartesianVoltage(y)) - evaluate(system, CartesianVoltage(x)));
        if (fd.dot(d) < 0.5 * spec.m * d.squaredNorm() - 1e-9) ++out.monotonicity_violations;

        x = project(x - tau * gy, eps);
        if (ratio <= 0.5) tau *= 1.5;
    }

    out.final_step = tau;
    out.V_star = CartesianVoltage(x);
    out.residual_F = evaluate(system, out.V_star).norm();
    if (out.residual_F <= opts.tol_zero) {
        out.kind = OutcomeKind::Solution;
    } else if (converged) {
        out.kind = OutcomeKind::NoSolutionCertificate;
    } else {
        out.kind = OutcomeKind::NotConverged;
    }
    return out;
}

/// Draws points uniformly from a box and keeps those passing `accept`.
template <class Accept>
std::vector<Vector> rejection_sample(const Vector& center, Real half_width, Index count, std::mt19937_64& rng,
                                     Accept&& accept, Index max_attempts) {
    std::uniform_real_distribution<Real> unit(-1.0, 1.0);
    std::vector<Vector> out;
    for (Index attempt = 0; attempt < max_attempts && static_cast<Index>(out.size()) < count; ++attempt) {
        Vector v(center.size());
        for (Index k = 0; k < v.size(); ++k) v[k] = center[k] + half_width * unit(rng);
        if (accept(v)) out.push_back(std::move(v));
    }
    if (static_cast<Index>(out.size()) < count) {
        throw Error(ErrorCode::SamplingExhausted, "found " + std::to_string(out.size()) + " of " +
                                                      std::to_string(count) + " admissible points");
    }
    return out;
}

struct MonotonicityProbe {
    int pairs = 0;
    int violations = 0;
    /// Smallest <F_W(x)-F_W(y), x-y> - (m/2)||x-y||^2 seen.
    Real worst_slack = std::numeric_limits<Real>::infinity();
};

/// Samples pairs in a box around `center` and tests
/// <F_W(x) - F_W(y), x - y> >= (m/2)||x - y||^2 - 1e-9. With `inside_only`
/// the points must also lie in C(W); otherwise only the ball is enforced.
inline MonotonicityProbe strong_monotonicity_probe(const BusSystem& system, const DomainMap& map,
                                                   const DomainSpec& spec, int samples, const Vector& center,
                                                   Real half_width, std::uint64_t seed, bool inside_only = true) {
    require(samples >= 2, ErrorCode::InvalidArgument, "need at least two samples");
    std::mt19937_64 rng(seed);
    auto accept = [&](const Vector& v) {
        if (v.norm() > spec.b) return false;
        return !inside_only || membership(CartesianVoltage(v), map, spec).inside;
    };
    const auto pts = rejection_sample(center, half_width, 2 * samples, rng, accept, Index(2000) * samples);
    MonotonicityProbe probe;
    for (int s = 0; s < samples; ++s) {
        const Vector& x = pts[std::size_t(2 * s)];
        const Vector& y = pts[std::size_t(2 * s + 1)];
        const Vector fd = spec.W * (evaluate(system, CartesianVoltage(x)) - evaluate(system, CartesianVoltage(y)));
        const Real slack = fd.dot(x - y) - 0.5 * spec.m * (x - y).squaredNorm();
        probe.worst_slack = std::min(probe.worst_slack, slack);
        if (slack < -1e-9) ++probe.violations;
        ++probe.pairs;
    }
    return probe;
}

}  // namespace monopf
