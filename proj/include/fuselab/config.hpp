#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fuselab/errors.hpp"
#include "fuselab/hierarchy.hpp"
#include "fuselab/imaging/image.hpp"
#include "fuselab/optimizer.hpp"
#include "fuselab/util/format.hpp"

namespace fuselab {

namespace toml {

// The subset used by run files: [table] and [a.b] headers, bare or quoted
// keys, strings, integers, floats, booleans and single-line arrays of those.
// Comments start with '#'. Everything else is rejected with its line number.
class Parser {
public:
    explicit Parser(std::string_view text, std::string name) : s_(text), name_(std::move(name)) {}

    nlohmann::json parse() {
        nlohmann::json root = nlohmann::json::object();
        nlohmann::json* table = &root;
        while (pos_ < s_.size()) {
            skip_ws();
            if (eol()) {
                next_line();
                continue;
            }
            if (s_[pos_] == '[') {
                ++pos_;
                table = &root;
                std::string path;
                for (const auto& part : dotted_key(']')) {
                    auto& t = (*table)[part];
                    if (t.is_null()) t = nlohmann::json::object();
                    if (!t.is_object()) fail("'" + part + "' is not a table");
                    table = &t;
                    path += part + '\x1f';
                }
                if (!headers_.insert(path).second) fail("table defined twice");
                expect(']');
            } else {
                const auto key = dotted_key('=');
                expect('=');
                skip_ws();
                nlohmann::json* slot = table;
                for (std::size_t i = 0; i + 1 < key.size(); ++i) {
                    auto& t = (*slot)[key[i]];
                    if (t.is_null()) t = nlohmann::json::object();
                    if (!t.is_object()) fail("'" + key[i] + "' is not a table");
                    slot = &t;
                }
                if (slot->contains(key.back())) fail("duplicate key '" + key.back() + "'");
                (*slot)[key.back()] = value();
            }
            skip_ws();
            if (!eol()) fail("unexpected text after value");
            next_line();
        }
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw DataError(name_ + ":" + std::to_string(line_) + ": " + what);
    }
    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    bool eol() const { return pos_ >= s_.size() || s_[pos_] == '\n' || s_[pos_] == '\r' || s_[pos_] == '#'; }
    void next_line() {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        if (pos_ < s_.size()) ++pos_;
        ++line_;
    }
    void expect(char c) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::vector<std::string> dotted_key(char stop) {
        std::vector<std::string> parts;
        for (;;) {
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == '"') {
                parts.push_back(string_value());
            } else {
                const auto start = pos_;
                while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-')) ++pos_;
                if (pos_ == start) fail("expected a key");
                parts.emplace_back(s_.substr(start, pos_ - start));
            }
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == '.') {
                ++pos_;
                continue;
            }
            if (pos_ >= s_.size() || s_[pos_] != stop) fail(std::string("expected '") + stop + "' after key");
            return parts;
        }
    }

    std::string string_value() {
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            char c = s_[pos_++];
            if (c == '\n') fail("unterminated string");
            if (c == '\\') {
                if (pos_ >= s_.size()) fail("unterminated string");
                const char e = s_[pos_++];
                switch (e) {
                    case 'n': c = '\n'; break;
                    case 't': c = '\t'; break;
                    case '"': c = '"'; break;
                    case '\\': c = '\\'; break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
            }
            out.push_back(c);
        }
        if (pos_ >= s_.size()) fail("unterminated string");
        ++pos_;
        return out;
    }

    nlohmann::json value() {
        if (pos_ >= s_.size()) fail("missing value");
        const char c = s_[pos_];
        if (c == '"') return string_value();
        if (c == '[') {
            ++pos_;
            nlohmann::json arr = nlohmann::json::array();
            for (;;) {
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ']') {
                    ++pos_;
                    return arr;
                }
                arr.push_back(value());
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ',') {
                    ++pos_;
                } else if (pos_ >= s_.size() || s_[pos_] != ']') {
                    fail("expected ',' or ']' in array");
                }
            }
        }
        const auto start = pos_;
        while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_])) && s_[pos_] != ',' &&
               s_[pos_] != ']' && s_[pos_] != '#') {
            ++pos_;
        }
        std::string tok(s_.substr(start, pos_ - start));
        if (tok == "true") return true;
        if (tok == "false") return false;
        std::string digits;
        for (char d : tok) {
            if (d != '_') digits.push_back(d);
        }
        if (digits.find_first_of(".eE") == std::string::npos && digits.find("inf") == std::string::npos &&
            digits.find("nan") == std::string::npos) {
            try {
                return parse_integer(digits, "integer");
            } catch (const DataError&) {
                fail("bad value '" + tok + "'");
            }
        }
        try {
            return parse_double(digits, "float");
        } catch (const DataError&) {
            fail("bad value '" + tok + "'");
        }
    }

    std::string_view s_;
    std::string name_;
    std::set<std::string> headers_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

inline nlohmann::json parse(std::string_view text, std::string name = "config") {
    return Parser(text, std::move(name)).parse();
}

inline nlohmann::json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

}  // namespace toml

/// Every tunable a workflow reads. The resolved form is written next to
/// each artifact.
struct RunConfig {
    std::uint64_t seed = 1;
    int jobs = 1;

    // training
    int n_starts = 8;
    int max_iterations = 200;
    std::size_t latent_dim = 2;
    double nugget_floor = 1e-8;
    double nugget_floor_max = 1e-4;
    int dropout_refine_steps = 60;
    bool include_scan_rotation = false;
    std::vector<std::size_t> ys_hidden{2, 2, 2};
    double ys_dropout = 0.2;
    std::vector<std::size_t> ef_hidden{2, 2};
    double ef_dropout = 0.2;

    // screening and maps
    std::size_t screen_n = 10000;
    bool low_discrepancy = true;
    ScreenFilters filters;
    std::string rank_mode = "combined";
    std::size_t pick = 1;
    std::size_t map_resolution = 200;

    // analysis
    std::size_t cv_k = 5;
    std::size_t sobol_n = 4096;

    // imaging
    int threshold = 75;
    imaging::Margins margins;
    int blur = 5;
    std::optional<double> sigma;

    HierarchyConfig hierarchy() const {
        HierarchyConfig h;
        h.fit.n_starts = n_starts;
        h.fit.max_iterations = max_iterations;
        h.fit.latent_dim = latent_dim;
        h.fit.nugget_floor = nugget_floor;
        h.fit.nugget_floor_max = nugget_floor_max;
        h.fit.dropout_refine_steps = dropout_refine_steps;
        h.fit.jobs = jobs;
        h.include_scan_rotation = include_scan_rotation;
        h.ys_mean = gp::MeanConfig::ffnn(ys_hidden, ys_dropout, true);
        h.ef_mean = gp::MeanConfig::ffnn(ef_hidden, ef_dropout, true);
        return h;
    }
};

inline nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"jobs", c.jobs},
            {"train",
             {{"n_starts", c.n_starts},
              {"max_iterations", c.max_iterations},
              {"latent_dim", c.latent_dim},
              {"nugget_floor", c.nugget_floor},
              {"nugget_floor_max", c.nugget_floor_max},
              {"dropout_refine_steps", c.dropout_refine_steps},
              {"include_scan_rotation", c.include_scan_rotation},
              {"ys_hidden", c.ys_hidden},
              {"ys_dropout", c.ys_dropout},
              {"ef_hidden", c.ef_hidden},
              {"ef_dropout", c.ef_dropout}}},
            {"optimize",
             {{"n", c.screen_n},
              {"low_discrepancy", c.low_discrepancy},
              {"ved_min", optional_json(c.filters.ved_min)},
              {"ved_max", optional_json(c.filters.ved_max)},
              {"ys_min", optional_json(c.filters.ys_min)},
              {"ef_min", optional_json(c.filters.ef_min)},
              {"rank", c.rank_mode},
              {"pick", c.pick}}},
            {"map", {{"resolution", c.map_resolution}}},
            {"cv", {{"k", c.cv_k}}},
            {"sobol", {{"n", c.sobol_n}}},
            {"porosity",
             {{"threshold", c.threshold},
              {"crop", {c.margins.top, c.margins.right, c.margins.left, c.margins.bottom}},
              {"blur", c.blur},
              {"sigma", optional_json(c.sigma)}}}};
}

namespace config_detail {

template <class T>
void take(const nlohmann::json& table, const char* key, T& out, const std::string& where) {
    if (!table.contains(key)) return;
    try {
        out = table.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw DataError("config: bad type for " + where + "." + key);
    }
}

inline void take_optional(const nlohmann::json& table, const char* key, std::optional<double>& out,
                          const std::string& where) {
    if (!table.contains(key)) return;
    const auto& v = table.at(key);
    if (v.is_null() || (v.is_string() && v.get<std::string>() == "off")) {
        out.reset();
    } else if (v.is_number()) {
        out = v.get<double>();
    } else {
        throw DataError("config: " + where + "." + key + " must be a number or \"off\"");
    }
}

inline void reject_unknown(const nlohmann::json& table, std::initializer_list<const char*> known,
                           const std::string& where) {
    for (auto it = table.begin(); it != table.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw DataError("config: unknown key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
    }
}

}  // namespace config_detail

/// Overlays a parsed config document on `base`. Unknown keys are errors.
inline RunConfig apply_config(RunConfig c, const nlohmann::json& j) {
    using namespace config_detail;
    if (!j.is_object()) throw DataError("config: top level must be a table");
    reject_unknown(j, {"seed", "jobs", "train", "optimize", "map", "cv", "sobol", "porosity"}, "");
    take(j, "seed", c.seed, "");
    take(j, "jobs", c.jobs, "");
    auto table = [&](const char* name) { return j.contains(name) ? j.at(name) : nlohmann::json::object(); };
    const auto t = table("train");
    reject_unknown(t, {"n_starts", "max_iterations", "latent_dim", "nugget_floor", "nugget_floor_max",
                       "dropout_refine_steps", "include_scan_rotation", "ys_hidden", "ys_dropout", "ef_hidden",
                       "ef_dropout"},
                   "train");
    take(t, "n_starts", c.n_starts, "train");
    take(t, "max_iterations", c.max_iterations, "train");
    take(t, "latent_dim", c.latent_dim, "train");
    take(t, "nugget_floor", c.nugget_floor, "train");
    take(t, "nugget_floor_max", c.nugget_floor_max, "train");
    take(t, "dropout_refine_steps", c.dropout_refine_steps, "train");
    take(t, "include_scan_rotation", c.include_scan_rotation, "train");
    take(t, "ys_hidden", c.ys_hidden, "train");
    take(t, "ys_dropout", c.ys_dropout, "train");
    take(t, "ef_hidden", c.ef_hidden, "train");
    take(t, "ef_dropout", c.ef_dropout, "train");
    const auto o = table("optimize");
    reject_unknown(o, {"n", "low_discrepancy", "ved_min", "ved_max", "ys_min", "ef_min", "rank", "pick"}, "optimize");
    take(o, "n", c.screen_n, "optimize");
    take(o, "low_discrepancy", c.low_discrepancy, "optimize");
    take_optional(o, "ved_min", c.filters.ved_min, "optimize");
    take_optional(o, "ved_max", c.filters.ved_max, "optimize");
    take_optional(o, "ys_min", c.filters.ys_min, "optimize");
    take_optional(o, "ef_min", c.filters.ef_min, "optimize");
    take(o, "rank", c.rank_mode, "optimize");
    take(o, "pick", c.pick, "optimize");
    const auto m = table("map");
    reject_unknown(m, {"resolution"}, "map");
    take(m, "resolution", c.map_resolution, "map");
    const auto cv = table("cv");
    reject_unknown(cv, {"k"}, "cv");
    take(cv, "k", c.cv_k, "cv");
    const auto so = table("sobol");
    reject_unknown(so, {"n"}, "sobol");
    take(so, "n", c.sobol_n, "sobol");
    const auto p = table("porosity");
    reject_unknown(p, {"threshold", "crop", "blur", "sigma"}, "porosity");
    take(p, "threshold", c.threshold, "porosity");
    if (p.contains("crop")) {
        std::vector<std::size_t> v;
        take(p, "crop", v, "porosity");
        if (v.size() != 4) throw DataError("config: porosity.crop needs four margins (top, right, left, bottom)");
        c.margins = {v[0], v[1], v[2], v[3]};
    }
    take(p, "blur", c.blur, "porosity");
    take_optional(p, "sigma", c.sigma, "porosity");
    return c;
}

/// Seed fallback chain: explicit flag, then config file, then FUSELAB_SEED,
/// then the built-in default.
inline std::uint64_t seed_from_environment(std::uint64_t fallback) {
    const char* env = std::getenv("FUSELAB_SEED");
    if (env == nullptr || *env == '\0') return fallback;
    const auto v = parse_integer(env, "FUSELAB_SEED");
    if (v < 0) throw DataError("FUSELAB_SEED must be non-negative");
    return static_cast<std::uint64_t>(v);
}

// 64-bit FNV-1a, used to fingerprint resolved configs.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace fuselab
