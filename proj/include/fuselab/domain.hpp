#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fuselab/errors.hpp"
#include "fuselab/sobol_sequence.hpp"
#include "fuselab/util/format.hpp"

namespace fuselab {

enum class ScanRotation { deg67, deg90 };

inline int degrees(ScanRotation r) { return r == ScanRotation::deg67 ? 67 : 90; }

inline ScanRotation scan_rotation_from_degrees(long long deg) {
    if (deg == 67) return ScanRotation::deg67;
    if (deg == 90) return ScanRotation::deg90;
    throw DomainError("scan rotation must be 67 or 90 degrees, got " + std::to_string(deg));
}

// Level index used when scan rotation enters a model as a categorical input.
inline int level_index(ScanRotation r) { return r == ScanRotation::deg67 ? 0 : 1; }

/// One LPBF parameter combination in canonical units: W, mm/s, mm.
/// Layer thickness and hatch spacing are given in micrometres at every
/// external boundary (CSV, CLI) and converted once on construction.
struct ProcessParams {
    double power_w = 0.0;
    double speed_mm_s = 0.0;
    double layer_mm = 0.0;
    double hatch_mm = 0.0;
    ScanRotation scan_rotation = ScanRotation::deg90;

    static ProcessParams from_micrometres(double power_w, double speed_mm_s, double layer_um,
                                          double hatch_um, ScanRotation rotation) {
        return {power_w, speed_mm_s, layer_um / 1000.0, hatch_um / 1000.0, rotation};
    }

    double layer_um() const { return layer_mm * 1000.0; }
    double hatch_um() const { return hatch_mm * 1000.0; }

    friend bool operator==(const ProcessParams&, const ProcessParams&) = default;
};

// Throws DomainError naming the first non-positive (or non-finite) field.
inline void require_positive(const ProcessParams& p) {
    const std::array<std::pair<const char*, double>, 4> fields{{{"power", p.power_w},
                                                                 {"speed", p.speed_mm_s},
                                                                 {"layer_thickness", p.layer_mm},
                                                                 {"hatch_spacing", p.hatch_mm}}};
    for (const auto& [name, value] : fields) {
        if (!(value > 0.0) || !std::isfinite(value)) {
            throw DomainError(std::string("process parameter '") + name +
                              "' must be strictly positive, got " + format_double(value));
        }
    }
}

/// Volumetric energy density in J/mm^3.
inline double compute_ved(const ProcessParams& p) {
    require_positive(p);
    return p.power_w / (p.speed_mm_s * p.hatch_mm * p.layer_mm);
}

/// Vickers hardness from force (kgf) and mean indentation diagonal (mm).
inline double vickers_hv(double force_kgf, double mean_diagonal_mm) {
    if (!(force_kgf > 0.0)) throw DomainError("vickers_hv: force must be positive");
    if (!(mean_diagonal_mm > 0.0)) throw DomainError("vickers_hv: mean diagonal must be positive");
    return 1.8544 * force_kgf / (mean_diagonal_mm * mean_diagonal_mm);
}

/// Median of an indentation map (or any measurement list). Even-length
/// input averages the two central order statistics.
inline double reduce_map_to_median(std::span<const double> values) {
    if (values.empty()) throw DomainError("reduce_map_to_median: empty measurement list");
    std::vector<double> v(values.begin(), values.end());
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    const double upper = v[mid];
    if (v.size() % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// DOE bounds; layer and hatch in micrometres.
struct ParamRanges {
    Interval power_w{80.0, 400.0};
    Interval speed_mm_s{150.0, 1500.0};
    Interval layer_um{20.0, 75.0};
    Interval hatch_um{70.0, 120.0};

    void validate() const {
        const std::array<std::pair<const char*, Interval>, 4> all{
            {{"power", power_w}, {"speed", speed_mm_s}, {"layer_thickness", layer_um}, {"hatch_spacing", hatch_um}}};
        for (const auto& [name, iv] : all) {
            if (!(iv.lo < iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi)) {
                throw DomainError(std::string("degenerate bounds for '") + name + "': [" +
                                  format_double(iv.lo) + ", " + format_double(iv.hi) + "]");
            }
            if (!(iv.lo > 0.0)) {
                throw DomainError(std::string("bounds for '") + name + "' must be positive");
            }
        }
    }

    bool contains(const ProcessParams& p) const {
        return power_w.contains(p.power_w) && speed_mm_s.contains(p.speed_mm_s) &&
               layer_um.contains(p.layer_um()) && hatch_um.contains(p.hatch_um());
    }

    friend bool operator==(const ParamRanges&, const ParamRanges&) = default;
};

// Maps a point of the unit 5-cube onto the parameter box; the fifth
// coordinate picks the scan rotation (< 0.5 -> 67, otherwise 90).
inline ProcessParams params_from_unit(std::span<const double> u, const ParamRanges& r) {
    return ProcessParams::from_micrometres(r.power_w.lo + u[0] * r.power_w.width(),
                                           r.speed_mm_s.lo + u[1] * r.speed_mm_s.width(),
                                           r.layer_um.lo + u[2] * r.layer_um.width(),
                                           r.hatch_um.lo + u[3] * r.hatch_um.width(),
                                           u[4] < 0.5 ? ScanRotation::deg67 : ScanRotation::deg90);
}

struct DoeOptions {
    bool scramble = false;
};

/// Low-discrepancy design over the parameter box. Without scrambling the
/// design is the plain Sobol sequence and does not depend on the seed.
inline std::vector<ProcessParams> generate_doe(std::size_t n, const ParamRanges& ranges,
                                               std::uint64_t seed, DoeOptions options = {}) {
    if (n == 0) throw DomainError("generate_doe: n must be at least 1");
    ranges.validate();
    SobolSequence seq(5, options.scramble, seed);
    std::vector<ProcessParams> out;
    out.reserve(n);
    std::array<double, 5> u{};
    for (std::size_t i = 0; i < n; ++i) {
        seq.fill(i, u.data());
        out.push_back(params_from_unit(u, ranges));
    }
    return out;
}

}  // namespace fuselab
