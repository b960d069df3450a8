#pragma once

// MATPOWER case ingestion and the per-unit bus model the solvers consume.
//
// Only the `mpc.baseMVA`, `mpc.bus`, `mpc.gen` and `mpc.branch` assignments
// are read. Internally buses are renumbered so the slack bus is 0 and the
// remaining buses keep their file order as 1..n.

#include "monopf/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace monopf {

enum class BusKind { PQ = 1, PV = 2, Slack = 3 };

struct RawBus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    Real pd = 0, qd = 0;  // MW, MVAr
    Real gs = 0, bs = 0;  // MW, MVAr consumed at 1 p.u.
    Real vm = 1, va = 0;  // p.u., degrees
};

struct RawGen {
    int bus = 0;
    Real pg = 0, qg = 0;  // MW, MVAr
    Real vg = 1;          // p.u. setpoint
    bool in_service = true;
};

struct RawBranch {
    int from = 0, to = 0;
    Real r = 0, x = 0, b = 0;  // p.u.
    Real tap = 0;              // 0 means nominal (1.0)
    Real shift_deg = 0;
    bool in_service = true;
};

struct RawCase {
    Real base_mva = 100;
    std::vector<RawBus> buses;
    std::vector<RawGen> gens;
    std::vector<RawBranch> branches;
};

namespace detail {

inline constexpr std::size_t kBusColumns = 13;
inline constexpr std::size_t kGenColumns = 10;
inline constexpr std::size_t kBranchColumns = 11;

struct NumericRow {
    std::size_t line;
    std::vector<Real> values;
};

inline std::string strip_comment(std::string_view line) {
    const auto pos = line.find('%');
    return std::string(line.substr(0, pos));
}

inline std::size_t line_of(std::string_view text, std::size_t offset) {
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

/// Locates `mpc.<name> = ` outside comments and returns the offset just past '='.
inline std::optional<std::size_t> find_assignment(std::string_view text, std::string_view name) {
    const std::string key = "mpc." + std::string(name);
    std::size_t pos = 0;
    while ((pos = text.find(key, pos)) != std::string_view::npos) {
        const std::size_t line_start = text.rfind('\n', pos) == std::string_view::npos
                                           ? 0
                                           : text.rfind('\n', pos) + 1;
        const bool commented = text.substr(line_start, pos - line_start).find('%') !=
                               std::string_view::npos;
        std::size_t after = pos + key.size();
        const bool boundary = after >= text.size() ||
                              !(std::isalnum(static_cast<unsigned char>(text[after])) ||
                                text[after] == '_');
        while (after < text.size() && (text[after] == ' ' || text[after] == '\t')) ++after;
        if (!commented && boundary && after < text.size() && text[after] == '=') {
            return after + 1;
        }
        pos += key.size();
    }
    return std::nullopt;
}

inline Real parse_number(const std::string& token, std::size_t line) {
    try {
        std::size_t used = 0;
        const Real value = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        return value;
    } catch (const std::exception&) {
        throw ParseError(ErrorCode::MalformedRow, line, "not a number: '" + token + "'");
    }
}

inline std::vector<NumericRow> parse_matrix(std::string_view text, std::string_view name) {
    const auto start = find_assignment(text, name);
    if (!start) {
        throw Error(ErrorCode::MissingSection, "mpc." + std::string(name) + " not found");
    }
    const std::size_t open = text.find('[', *start);
    if (open == std::string_view::npos) {
        throw ParseError(ErrorCode::MalformedRow, line_of(text, *start),
                         "expected '[' after mpc." + std::string(name));
    }
    // Find the closing bracket while skipping comments.
    std::size_t close = std::string_view::npos;
    bool in_comment = false;
    for (std::size_t i = open + 1; i < text.size(); ++i) {
        if (text[i] == '\n') in_comment = false;
        else if (text[i] == '%') in_comment = true;
        else if (!in_comment && text[i] == ']') { close = i; break; }
    }
    if (close == std::string_view::npos) {
        throw ParseError(ErrorCode::MalformedRow, line_of(text, open),
                         "unterminated matrix mpc." + std::string(name));
    }

    std::vector<NumericRow> rows;
    std::size_t line = line_of(text, open);
    std::vector<Real> current;
    std::size_t current_line = line;
    std::istringstream body{std::string(text.substr(open + 1, close - open - 1))};
    std::string raw;
    bool first = true;
    while (std::getline(body, raw)) {
        if (!first) ++line;
        first = false;
        std::string content = strip_comment(raw);
        std::string token;
        auto flush_token = [&] {
            if (token.empty()) return;
            if (current.empty()) current_line = line;
            current.push_back(parse_number(token, line));
            token.clear();
        };
        for (char ch : content) {
            if (ch == ';') {
                flush_token();
                if (!current.empty()) rows.push_back({current_line, std::move(current)});
                current.clear();
            } else if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',') {
                flush_token();
            } else {
                token.push_back(ch);
            }
        }
        flush_token();
        // A newline also terminates a row in MATLAB matrix syntax.
        if (!current.empty()) {
            rows.push_back({current_line, std::move(current)});
            current.clear();
        }
    }
    return rows;
}

inline Real parse_scalar(std::string_view text, std::string_view name) {
    const auto start = find_assignment(text, name);
    if (!start) {
        throw Error(ErrorCode::MissingSection, "mpc." + std::string(name) + " not found");
    }
    const std::size_t end = text.find(';', *start);
    std::string token(text.substr(*start, end == std::string_view::npos ? std::string_view::npos
                                                                        : end - *start));
    token.erase(std::remove_if(token.begin(), token.end(),
                               [](char c) { return std::isspace(static_cast<unsigned char>(c)); }),
                token.end());
    return parse_number(token, line_of(text, *start));
}

inline void require_columns(const NumericRow& row, std::size_t minimum, std::string_view what) {
    if (row.values.size() < minimum) {
        throw ParseError(ErrorCode::MalformedRow, row.line,
                         std::string(what) + " row has " + std::to_string(row.values.size()) +
                             " columns, need at least " + std::to_string(minimum));
    }
}

inline int as_id(Real value, std::size_t line) {
    if (value != std::floor(value)) {
        throw ParseError(ErrorCode::MalformedRow, line, "bus id is not an integer");
    }
    return static_cast<int>(value);
}

}  // namespace detail

/// Reads a MATPOWER `.m` case restricted to the power-flow matrices.
inline RawCase parse_matpower_case(std::string_view text) {
    RawCase out;
    out.base_mva = detail::parse_scalar(text, "baseMVA");
    if (!(out.base_mva > 0)) {
        throw Error(ErrorCode::MalformedRow, "baseMVA must be positive");
    }

    std::map<int, std::size_t> line_of_bus;
    int slack_count = 0;
    for (const auto& row : detail::parse_matrix(text, "bus")) {
        detail::require_columns(row, detail::kBusColumns, "bus");
        const auto& v = row.values;
        RawBus bus;
        bus.id = detail::as_id(v[0], row.line);
        const int type = static_cast<int>(v[1]);
        if (type < 1 || type > 3 || v[1] != type) {
            throw ParseError(ErrorCode::MalformedRow, row.line,
                             "unsupported bus type " + std::to_string(v[1]));
        }
        bus.kind = static_cast<BusKind>(type);
        bus.pd = v[2];
        bus.qd = v[3];
        bus.gs = v[4];
        bus.bs = v[5];
        bus.vm = v[7];
        bus.va = v[8];
        if (!line_of_bus.emplace(bus.id, row.line).second) {
            throw ParseError(ErrorCode::MalformedRow, row.line,
                             "duplicate bus id " + std::to_string(bus.id));
        }
        if (bus.kind == BusKind::Slack && ++slack_count > 1) {
            throw ParseError(ErrorCode::MultipleSlack, row.line, "second type-3 bus");
        }
        out.buses.push_back(bus);
    }
    if (slack_count == 0) throw Error(ErrorCode::NoSlack, "no type-3 bus");

    auto check_bus = [&](int id, std::size_t line) {
        if (!line_of_bus.count(id)) {
            throw ParseError(ErrorCode::UnknownBus, line, "bus " + std::to_string(id) + " undefined");
        }
    };

    for (const auto& row : detail::parse_matrix(text, "gen")) {
        detail::require_columns(row, detail::kGenColumns, "gen");
        const auto& v = row.values;
        RawGen gen;
        gen.bus = detail::as_id(v[0], row.line);
        check_bus(gen.bus, row.line);
        gen.pg = v[1];
        gen.qg = v[2];
        gen.vg = v[5];
        gen.in_service = v[7] > 0;
        out.gens.push_back(gen);
    }

    for (const auto& row : detail::parse_matrix(text, "branch")) {
        detail::require_columns(row, detail::kBranchColumns, "branch");
        const auto& v = row.values;
        RawBranch br;
        br.from = detail::as_id(v[0], row.line);
        br.to = detail::as_id(v[1], row.line);
        check_bus(br.from, row.line);
        check_bus(br.to, row.line);
        br.r = v[2];
        br.x = v[3];
        br.b = v[4];
        br.tap = v[8];
        br.shift_deg = v[9];
        br.in_service = v[10] > 0;
        if (br.in_service && br.r * br.r + br.x * br.x == 0) {
            throw ParseError(ErrorCode::ZeroImpedance, row.line, "in-service branch with r = x = 0");
        }
        out.branches.push_back(br);
    }
    return out;
}

inline RawCase load_matpower_case(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open case file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_matpower_case(buffer.str());
}

/// External bus id <-> internal index (slack first, then file order).
class BusOrdering {
public:
    BusOrdering() = default;

    explicit BusOrdering(const RawCase& raw) {
        const auto slack = std::find_if(raw.buses.begin(), raw.buses.end(),
                                        [](const RawBus& b) { return b.kind == BusKind::Slack; });
        require(slack != raw.buses.end(), ErrorCode::NoSlack, "no type-3 bus");
        push(slack->id);
        for (const auto& bus : raw.buses) {
            if (bus.kind != BusKind::Slack) push(bus.id);
        }
    }

    Index internal(int external_id) const {
        const auto it = to_internal_.find(external_id);
        require(it != to_internal_.end(), ErrorCode::UnknownBus,
                "bus " + std::to_string(external_id) + " undefined");
        return it->second;
    }
    int external(Index internal_index) const { return to_external_.at(internal_index); }
    Index size() const { return static_cast<Index>(to_external_.size()); }
    const std::vector<int>& external_ids() const { return to_external_; }

private:
    void push(int id) {
        to_internal_[id] = static_cast<Index>(to_external_.size());
        to_external_.push_back(id);
    }

    std::map<int, Index> to_internal_;
    std::vector<int> to_external_;
};

/// Standard bus admittance matrix in internal ordering, p.u.
///
/// Series admittance 1/(r+jx), half the line charging on each end, real taps
/// scale the from-side diagonal by 1/t^2 and the off-diagonals by 1/t. Bus
/// shunts are divided by the MVA base. Phase shifters are rejected because
/// they make the matrix unsymmetric.
inline ComplexMatrix build_admittance(const RawCase& raw) {
    const BusOrdering order(raw);
    const Index size = order.size();
    ComplexMatrix y = ComplexMatrix::Zero(size, size);
    for (const auto& br : raw.branches) {
        if (!br.in_service) continue;
        if (br.shift_deg != 0) {
            throw Error(ErrorCode::AsymmetricAdmittance,
                        "branch " + std::to_string(br.from) + "-" + std::to_string(br.to) +
                            " has a phase shift");
        }
        require(br.r * br.r + br.x * br.x > 0, ErrorCode::ZeroImpedance,
                "branch " + std::to_string(br.from) + "-" + std::to_string(br.to));
        const Complex series = 1.0 / Complex(br.r, br.x);
        const Complex charging(0.0, br.b / 2.0);
        const Real tap = br.tap == 0 ? 1.0 : br.tap;
        const Index f = order.internal(br.from);
        const Index t = order.internal(br.to);
        y(f, f) += (series + charging) / (tap * tap);
        y(t, t) += series + charging;
        y(f, t) -= series / tap;
        y(t, f) -= series / tap;
    }
    for (const auto& bus : raw.buses) {
        const Index k = order.internal(bus.id);
        y(k, k) += Complex(bus.gs, bus.bs) / raw.base_mva;
    }
    return y;
}

/// Immutable per-unit network: admittance, bus taxonomy, specified
/// injections and setpoints. Bus 0 is the slack; buses 1..n are variables.
///
/// `p`, `q`, `v_set` and `kind` are indexed by internal bus 0..n (entry 0 is
/// meaningful only for `kind`). `q` holds the case-file value for every bus;
/// it is a specification only on PQ buses.
class BusSystem {
public:
    BusSystem(ComplexMatrix admittance, std::vector<BusKind> kind, Vector p, Vector q,
              Vector v_set, Complex slack_voltage, BusOrdering ordering = {})
        : y_(std::move(admittance)),
          kind_(std::move(kind)),
          p_(std::move(p)),
          q_(std::move(q)),
          v_set_(std::move(v_set)),
          v0_(slack_voltage),
          ordering_(std::move(ordering)) {
        const Index size = y_.rows();
        require(size >= 2 && y_.cols() == size, ErrorCode::DimensionMismatch,
                "admittance must be square with at least two buses");
        require(static_cast<Index>(kind_.size()) == size && p_.size() == size &&
                    q_.size() == size && v_set_.size() == size,
                ErrorCode::DimensionMismatch, "bus data length differs from admittance size");
        require(kind_[0] == BusKind::Slack, ErrorCode::NoSlack, "bus 0 must be the slack");
        for (Index i = 1; i < size; ++i) {
            require(kind_[i] != BusKind::Slack, ErrorCode::MultipleSlack,
                    "only bus 0 may be the slack");
            (kind_[i] == BusKind::PV ? pv_ : pq_).push_back(i);
        }
        if ((y_ - y_.transpose()).cwiseAbs().maxCoeff() != 0.0) {
            throw Error(ErrorCode::AsymmetricAdmittance, "Y != Y^T");
        }
    }

    /// Number of non-slack buses.
    Index n() const { return y_.rows() - 1; }
    const ComplexMatrix& admittance() const { return y_; }
    Matrix conductance() const { return y_.real(); }
    Matrix susceptance() const { return y_.imag(); }
    BusKind kind(Index bus) const { return kind_[static_cast<std::size_t>(bus)]; }
    bool is_pq(Index bus) const { return kind(bus) == BusKind::PQ; }
    bool is_pv(Index bus) const { return kind(bus) == BusKind::PV; }
    const std::vector<Index>& pv() const { return pv_; }
    const std::vector<Index>& pq() const { return pq_; }
    const Vector& p() const { return p_; }
    const Vector& q() const { return q_; }
    const Vector& v_set() const { return v_set_; }
    Complex slack_voltage() const { return v0_; }
    const BusOrdering& ordering() const { return ordering_; }

    /// Copy with every complex injection S = P + jQ replaced by alpha * S.
    BusSystem with_scaled_injections(Complex alpha) const {
        Vector p = p_, q = q_;
        for (Index i = 1; i <= n(); ++i) {
            const Complex s = alpha * Complex(p_[i], q_[i]);
            p[i] = s.real();
            q[i] = s.imag();
        }
        return BusSystem(y_, kind_, std::move(p), std::move(q), v_set_, v0_, ordering_);
    }

private:
    ComplexMatrix y_;
    std::vector<BusKind> kind_;
    Vector p_, q_, v_set_;
    Complex v0_;
    BusOrdering ordering_;
    std::vector<Index> pv_, pq_;
};

/// Converts a parsed case to the per-unit model. Generators at a bus are
/// summed; reactive limits and costs are ignored.
inline BusSystem to_internal(const RawCase& raw) {
    const BusOrdering order(raw);
    const Index size = order.size();
    std::vector<BusKind> kind(static_cast<std::size_t>(size), BusKind::PQ);
    Vector p = Vector::Zero(size), q = Vector::Zero(size), v_set = Vector::Ones(size);
    Complex v0(1.0, 0.0);
    std::vector<bool> has_gen(static_cast<std::size_t>(size), false);

    for (const auto& bus : raw.buses) {
        const Index k = order.internal(bus.id);
        kind[static_cast<std::size_t>(k)] = bus.kind;
        p[k] -= bus.pd / raw.base_mva;
        q[k] -= bus.qd / raw.base_mva;
        if (bus.kind == BusKind::Slack) v0 = std::polar(bus.vm, bus.va * M_PI / 180.0);
    }
    for (const auto& gen : raw.gens) {
        if (!gen.in_service) continue;
        const Index k = order.internal(gen.bus);
        p[k] += gen.pg / raw.base_mva;
        q[k] += gen.qg / raw.base_mva;
        if (!has_gen[static_cast<std::size_t>(k)]) v_set[k] = gen.vg;
        has_gen[static_cast<std::size_t>(k)] = true;
    }
    for (Index k = 1; k < size; ++k) {
        if (kind[static_cast<std::size_t>(k)] == BusKind::PV && !has_gen[static_cast<std::size_t>(k)]) {
            throw Error(ErrorCode::PVWithoutGen,
                        "bus " + std::to_string(order.external(k)) + " has no in-service generator");
        }
    }
    return BusSystem(build_admittance(raw), std::move(kind), std::move(p), std::move(q),
                     std::move(v_set), v0, order);
}

inline BusSystem load_bus_system(const std::string& path) {
    return to_internal(load_matpower_case(path));
}

}  // namespace monopf
