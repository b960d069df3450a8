#pragma once

// Damped Cartesian Newton-Raphson on F and a multistart driver that counts
// the distinct zeros found inside a monotonicity domain.

#include "monopf/core.hpp"
#include "monopf/domain.hpp"
#include "monopf/network.hpp"
#include "monopf/operator.hpp"
#include "monopf/vi_solver.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <thread>
#include <vector>

namespace monopf {

enum class NewtonStatus { Converged, SingularJacobian, MaxIterations, LineSearchFailed };

inline const char* to_string(NewtonStatus s) {
    switch (s) {
        case NewtonStatus::Converged: return "Converged";
        case NewtonStatus::SingularJacobian: return "SingularJacobian";
        case NewtonStatus::MaxIterations: return "MaxIterations";
        case NewtonStatus::LineSearchFailed: return "LineSearchFailed";
    }
    return "Unknown";
}

struct NewtonOptions {
    Real tol = 1e-10;
    int max_iter = 50;
    /// Armijo sufficient-decrease constant on ||F||.
    Real armijo = 1e-4;
    /// Smallest step is 2^-max_halvings.
    int max_halvings = 20;
};

struct NewtonResult {
    bool converged = false;
    NewtonStatus status = NewtonStatus::MaxIterations;
    CartesianVoltage V;
    Real residual = 0;
    int iterations = 0;
};

inline NewtonResult newton_solve(const BusSystem& system, const JacobianBasis& basis, const CartesianVoltage& x0,
                                 const NewtonOptions& opts = {}) {
    require(opts.tol > 0, ErrorCode::InvalidArgument, "tol must be positive");
    NewtonResult out;
    Vector x = x0.stacked();
    Vector f = evaluate(system, CartesianVoltage(x));
    Real norm = f.norm();
    out.status = NewtonStatus::MaxIterations;
    for (int it = 0; it < opts.max_iter && norm > opts.tol; ++it) {
        const Matrix j = jacobian(system, basis, CartesianVoltage(x));
        const Eigen::FullPivLU<Matrix> lu(j);
        if (!lu.isInvertible() || std::abs(lu.rcond()) < 1e-14) {
            out.status = NewtonStatus::SingularJacobian;
            break;
        }
        const Vector dx = lu.solve(f);
        Real lambda = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opts.max_halvings; ++h, lambda *= 0.5) {
            const Vector trial = x - lambda * dx;
            const Vector ft = evaluate(system, CartesianVoltage(trial));
            if (ft.allFinite() && ft.norm() <= (1.0 - opts.armijo * lambda) * norm) {
                x = trial;
                f = ft;
                norm = ft.norm();
                accepted = true;
                break;
            }
        }
        out.iterations = it + 1;
        if (!accepted) {
            out.status = NewtonStatus::LineSearchFailed;
            break;
        }
    }
    out.V = CartesianVoltage(x);
    out.residual = norm;
    out.converged = norm <= opts.tol;
    if (out.converged) out.status = NewtonStatus::Converged;
    return out;
}

/// Runs body(i) for i in [0, count) on up to hardware_concurrency threads.
template <class Body>
void parallel_for(Index count, Body&& body) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const Index workers = std::min<Index>(count, hw);
    if (workers <= 1) {
        for (Index i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (Index w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (Index i = w; i < count; i += workers) body(i);
            } catch (...) {
                errors[std::size_t(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

struct MultistartOptions {
    int seeds = 20;
    std::uint64_t rng_seed = 1;
    /// Seeds are drawn uniformly from a box of this half-width around
    /// `center` and kept if they lie in the domain.
    Real half_width = 0.5;
    int attempts_per_seed = 5000;
    Real cluster_tolerance = 1e-4;
    NewtonOptions newton;
};

struct MultistartReport {
    int runs = 0;
    int converged_inside = 0;
    int converged_outside = 0;
    int failed = 0;
    std::vector<CartesianVoltage> inside_solutions;
    std::vector<CartesianVoltage> outside_solutions;
};

namespace detail {

/// Adds v to the cluster list unless an existing member is within tol in the
/// max norm and its residual vector is within 1e-3.
inline void add_cluster(std::vector<CartesianVoltage>& list, const CartesianVoltage& v, const BusSystem& system,
                        Real tol) {
    const Vector fv = evaluate(system, v);
    for (const auto& c : list) {
        if ((c.stacked() - v.stacked()).lpNorm<Eigen::Infinity>() <= tol &&
            (evaluate(system, c) - fv).norm() <= 1e-3) {
            return;
        }
    }
    list.push_back(v);
}

}  // namespace detail

/// Newton from random in-domain seeds. Seed i uses its own generator seeded
/// with (rng_seed, i), so results do not depend on thread scheduling.
inline MultistartReport multistart_uniqueness(const BusSystem& system, const JacobianBasis& basis,
                                              const DomainMap& map, const DomainSpec& spec, const Vector& center,
                                              const MultistartOptions& opts = {}) {
    require(opts.seeds >= 1, ErrorCode::InvalidArgument, "need at least one seed");
    auto accept = [&](const Vector& v) {
        return v.norm() <= spec.b && membership(CartesianVoltage(v), map, spec).inside;
    };
    std::vector<NewtonResult> results(static_cast<std::size_t>(opts.seeds));
    std::vector<char> sampled(results.size(), 0);
    parallel_for(opts.seeds, [&](Index i) {
        std::seed_seq seq{opts.rng_seed, static_cast<std::uint64_t>(i)};
        std::mt19937_64 rng(seq);
        std::vector<Vector> seed;
        try {
            seed = rejection_sample(center, opts.half_width, 1, rng, accept, opts.attempts_per_seed);
        } catch (const Error&) {
            return;
        }
        sampled[std::size_t(i)] = 1;
        results[std::size_t(i)] = newton_solve(system, basis, CartesianVoltage(seed.front()), opts.newton);
    });

    MultistartReport report;
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (!sampled[i]) continue;
        ++report.runs;
        const auto& r = results[i];
        if (!r.converged) {
            ++report.failed;
        } else if (membership(r.V, map, spec).inside) {
            ++report.converged_inside;
            detail::add_cluster(report.inside_solutions, r.V, system, opts.cluster_tolerance);
        } else {
            ++report.converged_outside;
            detail::add_cluster(report.outside_solutions, r.V, system, opts.cluster_tolerance);
        }
    }
    if (report.runs == 0) throw Error(ErrorCode::SamplingExhausted, "no in-domain Newton seeds found");
    return report;
}

}  // namespace monopf
