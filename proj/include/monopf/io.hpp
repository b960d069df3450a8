#pragma once

// JSON and CSV encodings of solver results. JSON documents carry
// `schema_version`; CSV headers are fixed strings.

#include "monopf/domain.hpp"
#include "monopf/experiments.hpp"
#include "monopf/newton.hpp"
#include "monopf/vi_solver.hpp"

#include "json.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace monopf {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline constexpr const char* kScanCsvHeader =
    "index,alpha_re,alpha_im,alpha_abs,alpha_arg,classification,vi_kind,residual_F,natural_residual,"
    "vi_iterations,newton_runs,newton_inside,newton_outside,note";

inline constexpr const char* kGridCsvHeader = "theta,vx,vy,margin,inside";

inline Json matrix_json(const Matrix& m) {
    std::vector<Real> data;
    data.reserve(std::size_t(m.size()));
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    }
    return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from_json(const Json& j) {
    const Index rows = j.at("rows").get<Index>(), cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<Real>>();
    require(static_cast<Index>(data.size()) == rows * cols, ErrorCode::DimensionMismatch,
            "matrix data length does not match its shape");
    Matrix m(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) m(r, c) = data[std::size_t(r * cols + c)];
    }
    return m;
}

/// Voltages of all buses (slack included) keyed by external bus id.
inline Json voltage_json(const BusSystem& system, const CartesianVoltage& v) {
    const ComplexVector full = v.full(system.slack_voltage());
    Json buses = Json::array();
    for (Index i = 0; i <= system.n(); ++i) {
        buses.push_back({{"bus", system.ordering().external(i)},
                         {"vx", full[i].real()},
                         {"vy", full[i].imag()},
                         {"magnitude", std::abs(full[i])},
                         {"angle", std::arg(full[i])}});
    }
    return buses;
}

inline Json vi_json(const BusSystem& system, const VIOutcome& o) {
    return {{"schema_version", kSchemaVersion},
            {"method", "vi"},
            {"kind", to_string(o.kind)},
            {"V", voltage_json(system, o.V_star)},
            {"residual_F", o.residual_F},
            {"natural_residual", o.natural_residual},
            {"iterations", o.iterations},
            {"monotonicity_violations", o.monotonicity_violations}};
}

inline Json newton_json(const BusSystem& system, const NewtonResult& r) {
    return {{"schema_version", kSchemaVersion},
            {"method", "newton"},
            {"kind", r.converged ? "Solution" : "NotConverged"},
            {"status", to_string(r.status)},
            {"V", voltage_json(system, r.V)},
            {"residual_F", r.residual},
            {"iterations", r.iterations}};
}

inline Json selection_json(const SelectionResult& s, const DomainSpec& spec, const Vector& delta) {
    Json probes = Json::array();
    for (const auto& p : s.probes) {
        probes.push_back({{"rho", p.rho}, {"feasible", p.feasible}, {"margin", p.margin}, {"iterations", p.iterations}});
    }
    return {{"schema_version", kSchemaVersion},
            {"rho", s.rho},
            {"m", spec.m},
            {"b", spec.b},
            {"delta", std::vector<Real>(delta.data(), delta.data() + delta.size())},
            {"W", matrix_json(s.W)},
            {"margins", {{"selection", s.margin}}},
            {"probes", probes}};
}

/// Reads W, m and b from a document written by selection_json (or any
/// object with those fields).
inline DomainSpec domain_spec_from_json(const Json& j) {
    return DomainSpec(matrix_from_json(j.at("W")), j.at("m").get<Real>(), j.at("b").get<Real>());
}

inline Json domain_spec_json(const DomainSpec& spec) {
    return {{"schema_version", kSchemaVersion}, {"W", matrix_json(spec.W)}, {"m", spec.m}, {"b", spec.b}};
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace detail

inline std::string scan_csv(const std::vector<ScanRow>& rows) {
    std::ostringstream os;
    os << std::setprecision(12) << kScanCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.index << ',' << r.alpha.real() << ',' << r.alpha.imag() << ',' << std::abs(r.alpha) << ','
           << std::arg(r.alpha) << ',' << to_string(r.classification) << ',' << r.vi_kind << ',' << r.residual_F << ','
           << r.natural_residual << ',' << r.vi_iterations << ',' << r.newton_runs << ',' << r.newton_converged_inside
           << ',' << r.newton_converged_outside << ',' << detail::csv_escape(r.note) << '\n';
    }
    return os.str();
}

inline std::string grid_csv(const std::vector<GridPoint>& points, Real theta) {
    std::ostringstream os;
    os << std::setprecision(12) << kGridCsvHeader << '\n';
    for (const auto& p : points) {
        os << theta << ',' << p.vx << ',' << p.vy << ',' << p.margin << ',' << (p.inside ? 1 : 0) << '\n';
    }
    return os.str();
}

inline Json scan_summary_json(const std::vector<ScanRow>& rows) {
    Json counts = Json::object();
    for (ScanClass c : all_scan_classes) counts[to_string(c)] = 0;
    for (const auto& r : rows) counts[to_string(r.classification)] = counts[to_string(r.classification)].get<int>() + 1;
    return {{"schema_version", kSchemaVersion}, {"rows", rows.size()}, {"counts", counts}};
}

}  // namespace monopf
