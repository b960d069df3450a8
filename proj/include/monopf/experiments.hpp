#pragma once

// Experiment drivers: two-bus weighting matrices, membership grids and the
// complex load-scaling scan.

#include "monopf/core.hpp"
#include "monopf/domain.hpp"
#include "monopf/network.hpp"
#include "monopf/newton.hpp"
#include "monopf/operator.hpp"
#include "monopf/vi_solver.hpp"

#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace monopf {

/// Two weighting matrices for the two-bus case (line 0.05 - j1.11 p.u.,
/// unloaded (P,Q) bus). The first domain holds the flat solution, the second
/// holds V1 = 0; their common boundary on the real axis is Re(V1 - V0) = -1/2.
inline Matrix twobus_w1() {
    Matrix w(2, 2);
    w << 0.0, 0.1, 6.75, -0.31;
    return w;
}

inline Matrix twobus_w2() {
    Matrix w(2, 2);
    w << 0.0, -0.1, 6.75, -0.31;
    return w;
}

struct GridSpec {
    Real lo = -1.5;
    Real hi = 1.5;
    int points = 61;

    Real at(int k) const { return points == 1 ? lo : lo + (hi - lo) * k / (points - 1); }
};

struct GridPoint {
    Real vx = 0;
    Real vy = 0;
    Real margin = 0;
    bool inside = false;
};

/// Membership over a grid of deviations (vx, vy) of one non-slack bus
/// (`bus` is 1-based internal) from the slack phasor. Every other component
/// is taken from `base`.
inline std::vector<GridPoint> sample_grid(const BusSystem& system, const DomainMap& map, const DomainSpec& spec,
                                          const CartesianVoltage& base, Index bus, const GridSpec& grid) {
    require(bus >= 1 && bus <= system.n(), ErrorCode::InvalidArgument, "bus must be a non-slack bus");
    require(grid.points >= 1, ErrorCode::InvalidArgument, "grid needs at least one point");
    const Complex v0 = system.slack_voltage();
    std::vector<GridPoint> out;
    out.reserve(std::size_t(grid.points) * std::size_t(grid.points));
    Vector v = base.stacked();
    for (int i = 0; i < grid.points; ++i) {
        for (int j = 0; j < grid.points; ++j) {
            const Real dx = grid.at(i), dy = grid.at(j);
            v[bus - 1] = v0.real() + dx;
            v[system.n() + bus - 1] = v0.imag() + dy;
            const Membership mb = membership(CartesianVoltage(v), map, spec);
            out.push_back({dx, dy, mb.margin, mb.inside});
        }
    }
    return out;
}

inline std::size_t count_inside(const std::vector<GridPoint>& grid) {
    std::size_t k = 0;
    for (const auto& p : grid) k += p.inside ? 1 : 0;
    return k;
}

// ---------------------------------------------------------------------------
// Load-scaling scan
// ---------------------------------------------------------------------------

enum class ScanClass {
    SolutionInDomain,
    NoSolutionInDomain_NRFoundOutside,
    NoSolutionInDomain_NoEvidence,
    /// Certificate with the Newton proxy switched off.
    CertifiedCertificateOnly,
    /// The VI did not converge or a solver raised an error.
    Unresolved,
};

inline const char* to_string(ScanClass c) {
    switch (c) {
        case ScanClass::SolutionInDomain: return "SolutionInDomain";
        case ScanClass::NoSolutionInDomain_NRFoundOutside: return "NoSolutionInDomain_NRFoundOutside";
        case ScanClass::NoSolutionInDomain_NoEvidence: return "NoSolutionInDomain_NoEvidence";
        case ScanClass::CertifiedCertificateOnly: return "CertifiedCertificateOnly";
        case ScanClass::Unresolved: return "Unresolved";
    }
    return "Unknown";
}

inline constexpr std::array<ScanClass, 5> all_scan_classes{
    ScanClass::SolutionInDomain, ScanClass::NoSolutionInDomain_NRFoundOutside,
    ScanClass::NoSolutionInDomain_NoEvidence, ScanClass::CertifiedCertificateOnly, ScanClass::Unresolved};

struct ScanConfig {
    Real alpha_max = 3.0;
    Real phase_min = std::numbers::pi / 6;
    Real phase_max = std::numbers::pi / 3;
    /// Number of (magnitude, phase) grid points.
    int grid = 100;
    /// Prepends the unscaled case alpha = 1 as row 0.
    bool include_reference = true;
    /// When set, scans exactly these factors instead of the grid.
    std::vector<Complex> explicit_alphas;
    std::uint64_t seed = 1;
    bool newton_proxy = true;
    /// Newton starts per certificate row, drawn around the nominal profile
    /// without the domain filter.
    int proxy_seeds = 10;
    Real proxy_half_width = 0.5;
    VIOptions vi;
};

/// The scaling factors in row order. The grid is magnitude-major with
/// ceil(sqrt(grid)) magnitudes in [1, alpha_max].
inline std::vector<Complex> scan_alphas(const ScanConfig& cfg) {
    if (!cfg.explicit_alphas.empty()) return cfg.explicit_alphas;
    require(cfg.grid >= 1, ErrorCode::InvalidArgument, "scan grid must have at least one point");
    require(cfg.alpha_max >= 1.0, ErrorCode::InvalidArgument, "alpha_max must be at least 1");
    require(cfg.phase_max >= cfg.phase_min, ErrorCode::InvalidArgument, "empty phase range");
    const int mags = static_cast<int>(std::ceil(std::sqrt(static_cast<Real>(cfg.grid))));
    const int phases = (cfg.grid + mags - 1) / mags;
    auto lin = [](Real a, Real b, int count, int k) { return count == 1 ? a : a + (b - a) * k / (count - 1); };
    std::vector<Complex> out;
    if (cfg.include_reference) out.emplace_back(1.0, 0.0);
    for (int i = 0; i < mags; ++i) {
        for (int j = 0; j < phases && static_cast<int>(out.size()) < cfg.grid + (cfg.include_reference ? 1 : 0); ++j) {
            out.push_back(std::polar(lin(1.0, cfg.alpha_max, mags, i), lin(cfg.phase_min, cfg.phase_max, phases, j)));
        }
    }
    return out;
}

struct ScanRow {
    int index = 0;
    Complex alpha;
    ScanClass classification = ScanClass::Unresolved;
    std::string vi_kind;
    Real residual_F = 0;
    Real natural_residual = 0;
    int vi_iterations = 0;
    int newton_runs = 0;
    int newton_converged_outside = 0;
    int newton_converged_inside = 0;
    std::string note;
};

/// One scan row: VI on the scaled case, then the Newton proxy on certificates.
inline ScanRow scan_point(const BusSystem& system, const JacobianBasis& basis, const DomainMap& map,
                          const DomainSpec& spec, const CartesianVoltage& nominal, const ScanConfig& cfg, int index,
                          Complex alpha) {
    ScanRow row;
    row.index = index;
    row.alpha = alpha;
    try {
        const BusSystem scaled = system.with_scaled_injections(alpha);
        VIOptions vo = cfg.vi;
        if (!vo.anchor) vo.anchor = nominal.stacked();
        const VIOutcome vi = solve_vi(scaled, basis, map, spec, nominal, vo);
        row.vi_kind = to_string(vi.kind);
        row.residual_F = vi.residual_F;
        row.natural_residual = vi.natural_residual;
        row.vi_iterations = vi.iterations;
        if (vi.kind == OutcomeKind::Solution) {
            row.classification = ScanClass::SolutionInDomain;
        } else if (vi.kind == OutcomeKind::NotConverged) {
            row.classification = ScanClass::Unresolved;
        } else if (!cfg.newton_proxy) {
            row.classification = ScanClass::CertifiedCertificateOnly;
        } else {
            // Diverse starts: the nominal profile plus random points in a box.
            int inside = 0, outside = 0, runs = 0;
            auto tally = [&](const NewtonResult& r) {
                ++runs;
                if (!r.converged) return;
                (membership(r.V, map, spec).inside ? inside : outside) += 1;
            };
            tally(newton_solve(scaled, basis, nominal));
            std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(index)};
            std::mt19937_64 rng(seq);
            std::uniform_real_distribution<Real> unit(-1.0, 1.0);
            for (int s = 0; s < cfg.proxy_seeds; ++s) {
                Vector v = nominal.stacked();
                for (Index k = 0; k < v.size(); ++k) v[k] += cfg.proxy_half_width * unit(rng);
                tally(newton_solve(scaled, basis, CartesianVoltage(v)));
            }
            row.newton_runs = runs;
            row.newton_converged_inside = inside;
            row.newton_converged_outside = outside;
            if (inside > 0) {
                row.classification = ScanClass::Unresolved;
                row.note = "Newton found an in-domain zero despite the certificate";
            } else if (outside > 0) {
                row.classification = ScanClass::NoSolutionInDomain_NRFoundOutside;
            } else {
                row.classification = ScanClass::NoSolutionInDomain_NoEvidence;
            }
        }
    } catch (const std::exception& e) {
        row.classification = ScanClass::Unresolved;
        row.note = e.what();
    }
    return row;
}

/// Rows are returned in grid order whatever order they finish in.
inline std::vector<ScanRow> run_scan(const BusSystem& system, const JacobianBasis& basis, const DomainMap& map,
                                     const DomainSpec& spec, const CartesianVoltage& nominal, const ScanConfig& cfg) {
    const auto alphas = scan_alphas(cfg);
    std::vector<ScanRow> rows(alphas.size());
    parallel_for(static_cast<Index>(alphas.size()), [&](Index i) {
        rows[std::size_t(i)] = scan_point(system, basis, map, spec, nominal, cfg, static_cast<int>(i), alphas[std::size_t(i)]);
    });
    return rows;
}

}  // namespace monopf
