#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fuselab/domain.hpp"
#include "fuselab/errors.hpp"
#include "fuselab/util/format.hpp"

namespace fuselab {

struct CuboidRecord {
    long long id = 0;
    ProcessParams params;
    double porosity = 0.0;  // fraction in [0, 1]
    double hardness = 0.0;  // HV0.5, median of the indentation map

    friend bool operator==(const CuboidRecord&, const CuboidRecord&) = default;
};

struct TensileReplicate {
    double yield_strength = 0.0;
    double ultimate_strength = 0.0;
    double ductility = 0.0;

    friend bool operator==(const TensileReplicate&, const TensileReplicate&) = default;
};

struct TensileRecord {
    long long id = 0;
    ProcessParams params;
    double yield_strength = 0.0;                   // MPa, median of replicates
    std::optional<double> ultimate_strength;       // MPa
    double ductility = 0.0;                        // % strain to failure
    std::optional<std::array<TensileReplicate, 3>> replicates;

    friend bool operator==(const TensileRecord&, const TensileRecord&) = default;
};

inline void validate(const CuboidRecord& r) {
    require_positive(r.params);
    if (!(r.porosity >= 0.0 && r.porosity <= 1.0)) {
        throw DomainError("cuboid " + std::to_string(r.id) + ": porosity must lie in [0, 1]");
    }
    if (!(r.hardness > 0.0) || !std::isfinite(r.hardness)) {
        throw DomainError("cuboid " + std::to_string(r.id) + ": hardness must be positive");
    }
}

inline void validate(const TensileRecord& r) {
    require_positive(r.params);
    if (!std::isfinite(r.yield_strength)) {
        throw DomainError("tensile " + std::to_string(r.id) + ": yield strength must be finite");
    }
    if (r.ultimate_strength && *r.ultimate_strength < r.yield_strength) {
        throw DomainError("tensile " + std::to_string(r.id) + ": yield strength exceeds ultimate strength");
    }
    if (!(r.ductility >= 0.0) || !std::isfinite(r.ductility)) {
        throw DomainError("tensile " + std::to_string(r.id) + ": ductility must be non-negative");
    }
}

/// Raised during ingestion when a record carries a reported VED that does
/// not match the one computed from its parameters.
struct IngestionWarning {
    std::size_t line = 0;
    long long id = 0;
    std::string message;
};

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return cells;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    }
};

inline CsvTable read_csv_table(std::istream& in, std::string_view source) {
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
            line.erase(0, 3);
        }
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto cells = split_csv(t);
        if (table.header.empty()) {
            for (auto c : cells) table.header.emplace_back(c);
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw DataError(std::string(source) + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(table.header.size()) + " fields, got " +
                            std::to_string(cells.size()));
        }
        std::vector<std::string> row;
        row.reserve(cells.size());
        for (auto c : cells) row.emplace_back(c);
        table.rows.push_back(std::move(row));
        table.line_numbers.push_back(lineno);
    }
    if (table.header.empty()) throw DataError(std::string(source) + ": missing header");
    return table;
}

inline std::size_t require_column(const CsvTable& t, std::string_view name, std::string_view source) {
    auto c = t.column(name);
    if (!c) throw DataError(std::string(source) + ": missing column '" + std::string(name) + "'");
    return *c;
}

inline ProcessParams parse_params(const CsvTable& t, const std::vector<std::string>& row,
                                  std::string_view where) {
    auto num = [&](std::string_view col) {
        return parse_double(row[require_column(t, col, where)], std::string(where) + " " + std::string(col));
    };
    const auto rot = parse_integer(row[require_column(t, "scan_rot", where)], std::string(where) + " scan_rot");
    return ProcessParams::from_micrometres(num("power_w"), num("speed_mm_s"), num("layer_um"), num("hatch_um"),
                                           scan_rotation_from_degrees(rot));
}

inline void check_reported_ved(const CsvTable& t, const std::vector<std::string>& row, std::size_t line,
                               long long id, const ProcessParams& p, std::vector<IngestionWarning>* warnings) {
    const auto col = t.column("ved_j_mm3");
    if (!col || row[*col].empty() || warnings == nullptr) return;
    const double reported = parse_double(row[*col], "ved_j_mm3");
    const double computed = compute_ved(p);
    if (std::abs(reported - computed) > 0.005 * computed + 0.1) {
        warnings->push_back({line, id,
                             "reported VED " + format_double(reported) + " differs from computed " +
                                 format_double(computed)});
    }
}

}  // namespace detail

inline constexpr std::string_view kCuboidHeader =
    "id,power_w,speed_mm_s,layer_um,hatch_um,scan_rot,porosity,hardness_hv";
inline constexpr std::string_view kTensileHeader =
    "id,power_w,speed_mm_s,layer_um,hatch_um,scan_rot,ys_mpa,uts_mpa,ef_pct";

inline std::vector<CuboidRecord> read_cuboids(std::istream& in, std::string_view source = "cuboids.csv",
                                              std::vector<IngestionWarning>* warnings = nullptr) {
    const auto table = detail::read_csv_table(in, source);
    const auto c_id = detail::require_column(table, "id", source);
    const auto c_por = detail::require_column(table, "porosity", source);
    const auto c_hv = detail::require_column(table, "hardness_hv", source);
    std::vector<CuboidRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string where = std::string(source) + ":" + std::to_string(table.line_numbers[i]);
        CuboidRecord r;
        r.id = parse_integer(row[c_id], where + " id");
        r.params = detail::parse_params(table, row, where);
        r.porosity = parse_double(row[c_por], where + " porosity");
        r.hardness = parse_double(row[c_hv], where + " hardness_hv");
        try {
            validate(r);
        } catch (const DomainError& e) {
            throw DataError(where + ": " + e.what());
        }
        detail::check_reported_ved(table, row, table.line_numbers[i], r.id, r.params, warnings);
        out.push_back(r);
    }
    return out;
}

inline std::vector<TensileRecord> read_tensile(std::istream& in, std::string_view source = "tensile.csv",
                                               std::vector<IngestionWarning>* warnings = nullptr) {
    const auto table = detail::read_csv_table(in, source);
    const auto c_id = detail::require_column(table, "id", source);
    const auto c_ys = detail::require_column(table, "ys_mpa", source);
    const auto c_uts = detail::require_column(table, "uts_mpa", source);
    const auto c_ef = detail::require_column(table, "ef_pct", source);
    bool has_replicates = true;
    for (const char* prefix : {"ys_", "uts_", "ef_"}) {
        for (int k = 1; k <= 3; ++k) {
            if (!table.column(std::string(prefix) + std::to_string(k))) has_replicates = false;
        }
    }
    std::vector<TensileRecord> out;
    out.reserve(table.rows.size());
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string where = std::string(source) + ":" + std::to_string(table.line_numbers[i]);
        TensileRecord r;
        r.id = parse_integer(row[c_id], where + " id");
        r.params = detail::parse_params(table, row, where);
        r.yield_strength = parse_double(row[c_ys], where + " ys_mpa");
        if (!row[c_uts].empty()) r.ultimate_strength = parse_double(row[c_uts], where + " uts_mpa");
        r.ductility = parse_double(row[c_ef], where + " ef_pct");
        if (has_replicates && !row[*table.column("ys_1")].empty()) {
            std::array<TensileReplicate, 3> reps{};
            for (int k = 1; k <= 3; ++k) {
                const auto idx = std::to_string(k);
                auto& rep = reps[static_cast<std::size_t>(k - 1)];
                rep.yield_strength = parse_double(row[*table.column("ys_" + idx)], where + " ys_" + idx);
                rep.ultimate_strength = parse_double(row[*table.column("uts_" + idx)], where + " uts_" + idx);
                rep.ductility = parse_double(row[*table.column("ef_" + idx)], where + " ef_" + idx);
            }
            r.replicates = reps;
        }
        try {
            validate(r);
        } catch (const DomainError& e) {
            throw DataError(where + ": " + e.what());
        }
        detail::check_reported_ved(table, row, table.line_numbers[i], r.id, r.params, warnings);
        out.push_back(r);
    }
    return out;
}

namespace detail {

inline std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path);
    return in;
}

inline void write_params(std::ostream& out, const ProcessParams& p) {
    out << format_double(p.power_w) << ',' << format_double(p.speed_mm_s) << ','
        << format_double(p.layer_um()) << ',' << format_double(p.hatch_um()) << ','
        << degrees(p.scan_rotation);
}

}  // namespace detail

inline std::vector<CuboidRecord> read_cuboids_file(const std::string& path,
                                                   std::vector<IngestionWarning>* warnings = nullptr) {
    auto in = detail::open_for_read(path);
    return read_cuboids(in, path, warnings);
}

inline std::vector<TensileRecord> read_tensile_file(const std::string& path,
                                                    std::vector<IngestionWarning>* warnings = nullptr) {
    auto in = detail::open_for_read(path);
    return read_tensile(in, path, warnings);
}

inline void write_cuboids(std::ostream& out, const std::vector<CuboidRecord>& records) {
    out << kCuboidHeader << '\n';
    for (const auto& r : records) {
        out << r.id << ',';
        detail::write_params(out, r.params);
        out << ',' << format_double(r.porosity) << ',' << format_double(r.hardness) << '\n';
    }
}

inline void write_tensile(std::ostream& out, const std::vector<TensileRecord>& records) {
    const bool replicates =
        std::any_of(records.begin(), records.end(), [](const auto& r) { return r.replicates.has_value(); });
    out << kTensileHeader;
    if (replicates) out << ",ys_1,ys_2,ys_3,uts_1,uts_2,uts_3,ef_1,ef_2,ef_3";
    out << '\n';
    for (const auto& r : records) {
        out << r.id << ',';
        detail::write_params(out, r.params);
        out << ',' << format_double(r.yield_strength) << ','
            << (r.ultimate_strength ? format_double(*r.ultimate_strength) : std::string()) << ','
            << format_double(r.ductility);
        if (replicates) {
            if (r.replicates) {
                const auto& reps = *r.replicates;
                for (const auto& rep : reps) out << ',' << format_double(rep.yield_strength);
                for (const auto& rep : reps) out << ',' << format_double(rep.ultimate_strength);
                for (const auto& rep : reps) out << ',' << format_double(rep.ductility);
            } else {
                out << ",,,,,,,,,";
            }
        }
        out << '\n';
    }
}

}  // namespace fuselab
