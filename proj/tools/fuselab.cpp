// fuselab command-line driver.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fuselab/fuselab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fuselab;

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

bool g_quiet = false;

// key=value log lines on stderr; never part of any artifact.
void log(const std::string& level, const std::string& cmd, const std::string& msg,
         const std::vector<std::pair<std::string, std::string>>& fields = {}) {
    if (g_quiet && level == "info") return;
    std::cerr << "level=" << level << " cmd=" << cmd << " msg=\"" << msg << '"';
    for (const auto& [k, v] : fields) std::cerr << ' ' << k << '=' << v;
    std::cerr << '\n';
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

// Temp file in the destination directory, then rename.
void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path() && !path.parent_path().empty()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw DataError("write failed: " + tmp.string());
    }
    fs::rename(tmp, path);
}

// One run: the resolved config plus the command's own settings. The hash
// covers everything that can change an artifact's bytes.
struct Run {
    std::string command;
    RunConfig config;
    json args = json::object();    // result-affecting options of this command
    json inputs = json::object();  // paths, recorded but not hashed
    json outputs = json::object();

    json resolved() const {
        json c = to_json(config);
        c.erase("jobs");
        return {{"command", command}, {"config", c}, {"args", args}};
    }
    std::string hash() const { return hex64(fnv1a(resolved().dump())); }
    std::string csv_header() const {
        return std::string("# fuselab ") + kVersion + " config=" + hash() + "\n";
    }
    json generator() const { return {{"tool", "fuselab"}, {"version", kVersion}, {"config_hash", hash()}}; }

    void write_csv(const fs::path& path, const std::string& body) {
        write_atomic(path, csv_header() + body);
        outputs[path.filename().string()] = path.string();
    }
    void write_json(const fs::path& path, json doc) {
        doc["generator"] = generator();
        write_atomic(path, doc.dump(1) + "\n");
        outputs[path.filename().string()] = path.string();
    }
    // Sidecar with the fully resolved configuration.
    void write_config(const fs::path& artifact) {
        json doc = resolved();
        doc["config_hash"] = hash();
        doc["version"] = kVersion;
        doc["inputs"] = inputs;
        fs::path side = artifact;
        side += ".config.json";
        write_atomic(side, doc.dump(1) + "\n");
    }
};

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(std::string(trim(cur)));
    return out;
}

std::optional<double> threshold_value(const std::string& text, const char* what) {
    if (text == "off" || text == "none") return std::nullopt;
    try {
        return parse_double(text, what);
    } catch (const DataError& e) {
        throw UsageError(e.what());
    }
}

ProcessParams parse_param_tuple(const std::string& text) {
    const auto parts = split(text, ',');
    if (parts.size() != 4 && parts.size() != 5) {
        throw UsageError("--params expects power,speed,layer_um,hatch_um[,rotation], got '" + text + "'");
    }
    std::array<double, 4> v{};
    for (std::size_t i = 0; i < 4; ++i) v[i] = parse_double(parts[i], "--params");
    ScanRotation rot = ScanRotation::deg90;
    if (parts.size() == 5) {
        if (parts[4] == "67") rot = ScanRotation::deg67;
        else if (parts[4] != "90") throw UsageError("scan rotation must be 67 or 90, got '" + parts[4] + "'");
    }
    auto p = ProcessParams::from_micrometres(v[0], v[1], v[2], v[3], rot);
    require_positive(p);
    return p;
}

HierarchyPipeline load_pipeline(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open input file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError(path + ": not valid JSON (" + e.what() + ")");
    }
    return pipeline_from_json(j);
}

std::string params_csv(const ProcessParams& p) {
    return format_double(p.power_w) + "," + format_double(p.speed_mm_s) + "," + format_double(p.layer_um()) + "," +
           format_double(p.hatch_um()) + "," + std::to_string(degrees(p.scan_rotation));
}

std::string opt_csv(double v) { return std::isnan(v) ? std::string() : format_double(v); }

void report_warnings(const std::string& cmd, const std::vector<IngestionWarning>& warnings) {
    for (const auto& w : warnings) log("warn", cmd, w.message);
}

// ---- subcommands -----------------------------------------------------------

struct SynthArgs {
    std::string spec, out_dir;
};

int run_synth(Run& run, const SynthArgs& a, bool seed_given) {
    synthetic::CampaignSpec spec;
    json spec_doc = json::object();
    if (!a.spec.empty()) {
        std::ifstream in(a.spec);
        if (!in) throw DataError("cannot open input file: " + a.spec);
        try {
            in >> spec_doc;
        } catch (const json::exception& e) {
            throw DataError(a.spec + ": not valid JSON (" + e.what() + ")");
        }
        spec = synthetic::spec_from_json(spec_doc);
        run.inputs["spec"] = a.spec;
    }
    if (seed_given || !spec_doc.contains("seed")) spec.seed = run.config.seed;
    run.args["spec"] = synthetic::to_json(spec);
    const auto campaign = synthetic::generate_campaign(spec);
    const fs::path dir(a.out_dir);
    std::ostringstream c, t;
    write_cuboids(c, campaign.cuboids);
    write_tensile(t, campaign.tensile);
    run.write_csv(dir / "cuboids.csv", c.str());
    run.write_csv(dir / "tensile.csv", t.str());
    json truth = {{"spec", synthetic::to_json(spec)}};
    json cub = json::array(), ten = json::array();
    for (const auto& r : campaign.cuboids) {
        cub.push_back({{"id", r.id},
                       {"hardness_hv", campaign.truth.hardness(r.params)},
                       {"porosity", campaign.truth.porosity(r.params)}});
    }
    for (const auto& r : campaign.tensile) {
        ten.push_back({{"id", r.id},
                       {"ys_mpa", campaign.truth.yield_strength(r.params)},
                       {"uts_mpa", campaign.truth.ultimate_strength(r.params)},
                       {"ef_pct", campaign.truth.ductility(r.params)}});
    }
    truth["cuboids"] = cub;
    truth["tensile"] = ten;
    run.write_json(dir / "truth.json", truth);
    run.write_config(dir / "truth.json");
    log("info", "synth", "campaign written",
        {{"cuboids", std::to_string(campaign.cuboids.size())}, {"tensile", std::to_string(campaign.tensile.size())},
         {"seed", std::to_string(spec.seed)}});
    return 0;
}

struct PorosityArgs {
    std::string in, out, hist;
};

int run_porosity(Run& run, const PorosityArgs& a) {
    const auto& c = run.config;
    if (c.blur < 1 || c.blur % 2 == 0) throw UsageError("--blur must be an odd kernel size >= 1");
    std::vector<fs::path> files;
    if (fs::is_directory(a.in)) {
        for (const auto& e : fs::directory_iterator(a.in)) {
            if (e.is_regular_file() && imaging::is_image_name(e.path())) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        if (files.empty()) throw DataError("no PNG or TIFF images in " + a.in);
    } else if (fs::exists(a.in)) {
        files.push_back(a.in);
    } else {
        throw DataError("cannot open input: " + a.in);
    }
    run.inputs["images"] = a.in;
    imaging::PorositySettings settings{c.margins, c.blur, c.sigma, c.threshold};
    std::vector<imaging::PorosityResult> results(files.size());
    parallel_for(files.size(), c.jobs, [&](std::size_t i) {
        results[i] = imaging::measure_porosity(imaging::read_image(files[i]), settings);
    });
    std::string body = "filename,porosity\n";
    for (std::size_t i = 0; i < files.size(); ++i) {
        body += files[i].filename().string() + "," + format_double(results[i].porosity) + "\n";
    }
    run.write_csv(a.out, body);
    if (!a.hist.empty()) {
        std::string h = "filename,intensity,count\n";
        for (std::size_t i = 0; i < files.size(); ++i) {
            for (std::size_t v = 0; v < 256; ++v) {
                h += files[i].filename().string() + "," + std::to_string(v) + "," +
                     std::to_string(results[i].histogram[v]) + "\n";
            }
        }
        run.write_csv(a.hist, h);
    }
    run.write_config(a.out);
    log("info", "porosity", "images measured", {{"count", std::to_string(files.size())}});
    return 0;
}

struct DataArgs {
    std::string cuboids, tensile, out;
};

int run_train(Run& run, const DataArgs& a) {
    std::vector<IngestionWarning> warnings;
    const auto cub = read_cuboids_file(a.cuboids, &warnings);
    const auto ten = read_tensile_file(a.tensile, &warnings);
    report_warnings("train", warnings);
    run.inputs = {{"cuboids", a.cuboids}, {"tensile", a.tensile}};
    const auto t0 = std::chrono::steady_clock::now();
    const auto pipe = train_hierarchy(cub, ten, run.config.hierarchy(), run.config.seed);
    for (Stage s : {Stage::hardness, Stage::engineered_porosity, Stage::yield_strength, Stage::ductility}) {
        const auto& d = pipe.stage(s).diagnostics();
        log("info", "train", "stage fitted",
            {{"stage", stage_name(s)}, {"map_loss", format_double(d.map_loss)},
             {"starts", std::to_string(d.starts_succeeded) + "/" + std::to_string(d.starts_attempted)}});
    }
    log("info", "train", "pipeline trained", {{"seconds", fixed3(seconds_since(t0))}});
    run.write_json(a.out, to_json(pipe));
    run.write_config(a.out);
    return 0;
}

struct CvArgs {
    std::string data, response, cuboids, tensile, out;
    bool squared = false;
};

int run_cv(Run& run, const CvArgs& a) {
    const auto& c = run.config;
    json report;
    if (!a.data.empty()) {
        if (a.response.empty()) throw UsageError("cv --data needs --response");
        run.inputs["data"] = a.data;
        run.args["response"] = a.response;
        std::ifstream in(a.data);
        if (!in) throw DataError("cannot open input file: " + a.data);
        const auto table = detail::read_csv_table(in, a.data);
        const auto col = detail::require_column(table, a.response, a.data);
        gp::MixedDataset data;
        data.schema = hierarchy::base_schema(c.include_scan_rotation);
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto p = detail::parse_params(table, table.rows[r], a.data + ":" + std::to_string(table.line_numbers[r]));
            data.add(hierarchy::base_input(p, c.include_scan_rotation),
                     parse_double(table.rows[r][col], a.response));
        }
        auto fit = c.hierarchy().fit;
        fit.jobs = c.jobs;
        run.args["squared"] = a.squared;
        report = analysis::to_json(analysis::kfold_cv(data, c.cv_k, fit, c.seed, a.squared));
        report["response"] = a.response;
    } else {
        if (a.cuboids.empty() || a.tensile.empty()) {
            throw UsageError("cv needs either --data with --response, or --cuboids with --tensile");
        }
        run.inputs = {{"cuboids", a.cuboids}, {"tensile", a.tensile}};
        std::vector<IngestionWarning> warnings;
        const auto cub = read_cuboids_file(a.cuboids, &warnings);
        const auto ten = read_tensile_file(a.tensile, &warnings);
        report_warnings("cv", warnings);
        const auto rep = analysis::hierarchy_cv(cub, ten, c.hierarchy(), c.cv_k, c.seed, c.jobs);
        auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
        json folds = json::array();
        for (std::size_t f = 0; f < rep.k; ++f) {
            json fj = {{"failed", static_cast<bool>(rep.fold_failed[f])}};
            if (rep.fold_failed[f]) {
                fj["error"] = rep.fold_errors[f];
            } else {
                fj["prediction_error"] = {{"hardness", num(rep.fold_metric_hardness[f])},
                                    {"ys", num(rep.fold_metric_ys[f])},
                                    {"ef", num(rep.fold_metric_ef[f])}};
            }
            folds.push_back(fj);
        }
        report = {{"k", rep.k},
                  {"seed", rep.seed},
                  {"metric", "root_mean_square"},
                  {"folds", folds},
                  {"r_squared", {{"hardness", num(rep.r2_hardness)}, {"ys", num(rep.r2_ys)}, {"ef", num(rep.r2_ef)}}}};
    }
    run.write_json(a.out, report);
    run.write_config(a.out);
    return 0;
}

struct SobolArgs {
    std::string pipeline, stage, out;
};

int run_sobol(Run& run, const SobolArgs& a) {
    const Stage stage = stage_from_name(a.stage);
    run.inputs["pipeline"] = a.pipeline;
    run.args["stage"] = a.stage;
    const auto pipe = load_pipeline(a.pipeline);
    const bool rot = pipe.include_scan_rotation();
    const auto features = analysis::process_features(ParamRanges{}, rot);
    const int jobs = run.config.jobs;
    analysis::BatchModel model = [&](const std::vector<std::vector<double>>& rows) {
        std::vector<ProcessParams> p;
        p.reserve(rows.size());
        for (const auto& r : rows) p.push_back(analysis::params_from_features(r, rot));
        std::vector<double> out(p.size());
        const std::size_t block = 1024;
        parallel_for((p.size() + block - 1) / block, jobs, [&](std::size_t b) {
            const std::size_t lo = b * block, hi = std::min(p.size(), lo + block);
            const auto part = pipe.predict_stage(stage, std::span<const ProcessParams>(p.data() + lo, hi - lo));
            std::copy(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
        });
        return out;
    };
    const auto rep = analysis::sobol_indices(model, features, run.config.sobol_n, run.config.seed);
    json doc = {{"stage", a.stage},
                {"n_base", rep.n_base},
                {"seed", rep.seed},
                {"variance", rep.variance},
                {"names", rep.names},
                {"main", rep.main},
                {"total", rep.total},
                {"main_se", rep.main_se},
                {"total_se", rep.total_se},
                {"negligible", analysis::negligible_features(rep)}};
    run.write_json(a.out, doc);
    run.write_config(a.out);
    return 0;
}

int run_corr(Run& run, const DataArgs& a) {
    std::vector<IngestionWarning> warnings;
    const auto cub = read_cuboids_file(a.cuboids, &warnings);
    run.inputs["cuboids"] = a.cuboids;
    std::vector<std::string> names = {"power_w", "speed_mm_s", "layer_um", "hatch_um", "ved", "porosity", "hardness_hv"};
    std::vector<std::vector<double>> cols(names.size());
    auto push_base = [&](const CuboidRecord& r) {
        cols[0].push_back(r.params.power_w);
        cols[1].push_back(r.params.speed_mm_s);
        cols[2].push_back(r.params.layer_um());
        cols[3].push_back(r.params.hatch_um());
        cols[4].push_back(compute_ved(r.params));
        cols[5].push_back(r.porosity);
        cols[6].push_back(r.hardness);
    };
    if (a.tensile.empty()) {
        for (const auto& r : cub) push_base(r);
    } else {
        run.inputs["tensile"] = a.tensile;
        const auto ten = read_tensile_file(a.tensile, &warnings);
        const bool uts = std::all_of(ten.begin(), ten.end(), [](const auto& t) { return t.ultimate_strength.has_value(); });
        names.push_back("ys_mpa");
        if (uts) names.push_back("uts_mpa");
        names.push_back("ef_pct");
        cols.resize(names.size());
        std::size_t unmatched = 0;
        for (const auto& t : ten) {
            auto it = std::find_if(cub.begin(), cub.end(), [&](const auto& c) { return c.params == t.params; });
            if (it == cub.end()) {
                ++unmatched;
                continue;
            }
            push_base(*it);
            std::size_t k = 7;
            cols[k++].push_back(t.yield_strength);
            if (uts) cols[k++].push_back(*t.ultimate_strength);
            cols[k].push_back(t.ductility);
        }
        if (unmatched > 0) {
            log("warn", "corr", "tensile rows without a cuboid at the same settings were skipped",
                {{"count", std::to_string(unmatched)}});
        }
    }
    report_warnings("corr", warnings);
    const auto m = analysis::pearson_matrix(names, cols);
    std::string body = "variable";
    for (const auto& n : m.names) body += "," + n;
    body += "\n";
    for (std::size_t i = 0; i < m.names.size(); ++i) {
        body += m.names[i];
        for (double v : m.r[i]) body += "," + format_double(v);
        body += "\n";
    }
    run.write_csv(a.out, body);
    run.write_config(a.out);
    return 0;
}

struct OptimizeArgs {
    std::string pipeline, out;
};

int run_optimize(Run& run, const OptimizeArgs& a) {
    const auto& c = run.config;
    if (c.screen_n == 0) throw UsageError("--n must be at least 1");
    const auto mode = rank_mode_from_name(c.rank_mode);
    if (c.pick == 0) throw UsageError("--pick is 1-based");
    run.inputs["pipeline"] = a.pipeline;
    const auto pipe = load_pipeline(a.pipeline);
    const auto set = screen(pipe, c.screen_n, ParamRanges{}, c.filters, c.seed, c.low_discrepancy, c.jobs);
    std::vector<std::size_t> rank(set.candidates.size(), 0);
    const std::size_t passed = set.passed_count();
    std::optional<Candidate> picked;
    if (passed > 0) {
        const auto ranked = rank_by_uncertainty(set, mode);
        for (std::size_t r = 0; r < ranked.size(); ++r) rank[ranked[r].index] = r + 1;
        if (c.pick <= ranked.size()) picked = ranked[c.pick - 1];
    }
    std::string body =
        "index,power_w,speed_mm_s,layer_um,hatch_um,scan_rot,ved,ys_mpa,ys_sd,ef_pct,ef_sd,objective,"
        "pass_ved,pass_ys,pass_ef,passed,rank\n";
    for (const auto& cd : set.candidates) {
        body += std::to_string(cd.index) + "," + params_csv(cd.params) + "," + format_double(cd.ved) + "," +
                format_double(cd.ys) + "," + format_double(cd.ys_sd) + "," + format_double(cd.ef) + "," +
                format_double(cd.ef_sd) + "," + opt_csv(cd.objective) + "," + (cd.pass_ved ? "1" : "0") + "," +
                (cd.pass_ys ? "1" : "0") + "," + (cd.pass_ef ? "1" : "0") + "," + (cd.passed() ? "1" : "0") + "," +
                (rank[cd.index] ? std::to_string(rank[cd.index]) : std::string()) + "\n";
    }
    run.write_csv(a.out, body);
    run.write_config(a.out);
    if (passed == 0) {
        log("warn", "optimize", "no candidate passed the filters", {{"n", std::to_string(set.candidates.size())}});
    } else if (!picked) {
        log("warn", "optimize", "--pick exceeds the number of passed candidates", {{"passed", std::to_string(passed)}});
    } else {
        log("info", "optimize", "screened",
            {{"passed", std::to_string(passed)}, {"pick", std::to_string(c.pick)}, {"index", std::to_string(picked->index)}});
        std::cout << "power_w,speed_mm_s,layer_um,hatch_um,scan_rot,ved,ys_mpa,ys_sd,ef_pct,ef_sd\n"
                  << params_csv(picked->params) << "," << format_double(picked->ved) << "," << format_double(picked->ys)
                  << "," << format_double(picked->ys_sd) << "," << format_double(picked->ef) << ","
                  << format_double(picked->ef_sd) << "\n";
    }
    return 0;
}

struct MapArgs {
    std::string pipeline, free, fixed, out, iso_out;
    int rotation = 90;
    std::size_t res_y = 0;
};

int run_map(Run& run, const MapArgs& a) {
    const auto axes = split(a.free, ',');
    if (axes.size() != 2) throw UsageError("--free expects two parameter names, e.g. power,speed");
    const Param x = param_from_name(axes[0]), y = param_from_name(axes[1]);
    std::map<std::string, double> fixed;
    if (!a.fixed.empty()) {
        for (const auto& kv : split(a.fixed, ',')) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw UsageError("--fixed expects name=value pairs, got '" + kv + "'");
            fixed[param_name(param_from_name(kv.substr(0, eq)))] = parse_double(kv.substr(eq + 1), "--fixed");
        }
    }
    if (a.rotation != 67 && a.rotation != 90) throw UsageError("--rotation must be 67 or 90");
    const std::size_t rx = run.config.map_resolution;
    const std::size_t ry = a.res_y ? a.res_y : rx;
    if (rx < 2 || ry < 2) throw UsageError("--res must be at least 2");
    run.inputs["pipeline"] = a.pipeline;
    run.args = {{"free", {param_name(x), param_name(y)}}, {"fixed", fixed}, {"rotation", a.rotation}, {"res_y", ry}};
    const auto pipe = load_pipeline(a.pipeline);
    const auto m = design_map(pipe, x, y, fixed, rx, ry, ParamRanges{},
                              a.rotation == 67 ? ScanRotation::deg67 : ScanRotation::deg90, {100.0, 200.0},
                              run.config.jobs);
    std::string body = std::string(param_name(x)) + "," + param_name(y) + ",ved,ys_mpa,ys_sd,ef_pct,ef_sd,objective\n";
    for (std::size_t i = 0; i < m.x.size(); ++i) {
        for (std::size_t j = 0; j < m.y.size(); ++j) {
            const auto k = m.cell(i, j);
            body += format_double(m.x[i]) + "," + format_double(m.y[j]) + "," + format_double(m.ved[k]) + "," +
                    format_double(m.ys[k]) + "," + format_double(m.ys_sd[k]) + "," + format_double(m.ef[k]) + "," +
                    format_double(m.ef_sd[k]) + "," + opt_csv(m.objective[k]) + "\n";
        }
    }
    run.write_csv(a.out, body);
    if (!a.iso_out.empty()) {
        std::string iso = std::string("ved_level,") + param_name(x) + "," + param_name(y) + "\n";
        for (const auto& line : m.iso) {
            for (const auto& [px, py] : line.points) {
                iso += format_double(line.level) + "," + format_double(px) + "," + format_double(py) + "\n";
            }
        }
        run.write_csv(a.iso_out, iso);
    }
    run.write_config(a.out);
    return 0;
}

struct PredictArgs {
    std::string pipeline, out;
    std::vector<std::string> params;
};

int run_predict(Run& run, const PredictArgs& a) {
    if (a.params.empty()) throw UsageError("predict needs at least one --params tuple");
    std::vector<ProcessParams> p;
    for (const auto& s : a.params) p.push_back(parse_param_tuple(s));
    run.inputs["pipeline"] = a.pipeline;
    run.args["params"] = a.params;
    const auto pipe = load_pipeline(a.pipeline);
    const auto pred = pipe.predict_tensile(p);
    std::string body = "power_w,speed_mm_s,layer_um,hatch_um,scan_rot,ved,ys_mpa,ys_sd,ef_pct,ef_sd\n";
    for (std::size_t i = 0; i < p.size(); ++i) {
        body += params_csv(p[i]) + "," + format_double(compute_ved(p[i])) + "," + format_double(pred[i].ys_mean) + "," +
                format_double(pred[i].ys_sd) + "," + format_double(pred[i].ef_mean) + "," +
                format_double(pred[i].ef_sd) + "\n";
    }
    if (a.out.empty()) {
        std::cout << run.csv_header() << body;
    } else {
        run.write_csv(a.out, body);
        run.write_config(a.out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Process-property emulation and screening for laser powder bed fusion"};
    app.set_version_flag("--version", std::string("fuselab ") + kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    app.add_option("--config", config_path, "TOML run file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "global seed (default: config, then FUSELAB_SEED, then 1)");
    app.add_option("--jobs", jobs, "maximum worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", g_quiet, "only warnings and errors on stderr");

    // Per-command overrides of config values, applied after the config file.
    std::optional<int> n_starts, max_iter, threshold, blur;
    std::optional<std::size_t> k, n, res, pick;
    std::optional<double> sigma;
    std::optional<std::string> ved_min, ved_max, ys_min, ef_min, crop, rank;
    bool rotation_flag = false, uniform = false;
    auto training_opts = [&](CLI::App* s) {
        s->add_option("--starts", n_starts, "optimizer restarts per stage");
        s->add_option("--max-iter", max_iter, "L-BFGS iterations per restart");
        s->add_flag("--scan-rotation", rotation_flag, "treat scan rotation as a categorical input");
    };

    SynthArgs synth;
    auto* s_synth = app.add_subcommand("synth", "generate a synthetic campaign");
    s_synth->add_option("--spec", synth.spec, "campaign spec JSON");
    s_synth->add_option("--out-dir", synth.out_dir, "output directory")->required();

    PorosityArgs por;
    auto* s_por = app.add_subcommand("porosity", "porosity fraction of micrographs");
    s_por->add_option("--in", por.in, "image file or directory")->required();
    s_por->add_option("--out", por.out, "output CSV")->required();
    s_por->add_option("--hist", por.hist, "per-image histogram CSV");
    s_por->add_option("--threshold", threshold, "pore intensity threshold (strict)");
    s_por->add_option("--crop", crop, "margins top,right,left,bottom");
    s_por->add_option("--blur", blur, "odd Gaussian kernel size");
    s_por->add_option("--sigma", sigma, "Gaussian sigma");

    DataArgs train;
    auto* s_train = app.add_subcommand("train", "train the four-stage pipeline");
    s_train->add_option("--cuboids", train.cuboids, "cuboid CSV")->required();
    s_train->add_option("--tensile", train.tensile, "tensile CSV")->required();
    s_train->add_option("--out", train.out, "pipeline JSON")->required();
    training_opts(s_train);

    CvArgs cv;
    auto* s_cv = app.add_subcommand("cv", "k-fold cross-validation");
    s_cv->add_option("--data", cv.data, "CSV with process parameters and a response");
    s_cv->add_option("--response", cv.response, "response column of --data");
    s_cv->add_option("--cuboids", cv.cuboids, "cuboid CSV (whole pipeline)");
    s_cv->add_option("--tensile", cv.tensile, "tensile CSV (whole pipeline)");
    s_cv->add_option("--k", k, "number of folds");
    s_cv->add_flag("--squared", cv.squared, "report mean squared error instead of its root (--data only)");
    s_cv->add_option("--out", cv.out, "report JSON")->required();
    training_opts(s_cv);

    SobolArgs sob;
    auto* s_sob = app.add_subcommand("sobol", "Sobol indices of a pipeline stage");
    s_sob->add_option("--pipeline", sob.pipeline, "pipeline JSON")->required();
    s_sob->add_option("--stage", sob.stage, "h, ep, ys or ef")->required();
    s_sob->add_option("--n", n, "base sample size");
    s_sob->add_option("--out", sob.out, "report JSON")->required();

    DataArgs corr;
    auto* s_corr = app.add_subcommand("corr", "Pearson correlation matrix");
    s_corr->add_option("--cuboids", corr.cuboids, "cuboid CSV")->required();
    s_corr->add_option("--tensile", corr.tensile, "tensile CSV");
    s_corr->add_option("--out", corr.out, "matrix CSV")->required();

    OptimizeArgs opt;
    auto* s_opt = app.add_subcommand("optimize", "screen candidate settings");
    s_opt->add_option("--pipeline", opt.pipeline, "pipeline JSON")->required();
    s_opt->add_option("--n", n, "number of candidates");
    s_opt->add_option("--ved-min", ved_min, "lower VED bound or 'off'");
    s_opt->add_option("--ved-max", ved_max, "upper VED bound or 'off'");
    s_opt->add_option("--ys-min", ys_min, "yield strength threshold or 'off'");
    s_opt->add_option("--ef-min", ef_min, "ductility threshold or 'off'");
    s_opt->add_option("--rank", rank, "ys, ef or combined");
    s_opt->add_option("--pick", pick, "rank of the reported candidate");
    s_opt->add_flag("--uniform", uniform, "pseudo-random instead of low-discrepancy sampling");
    s_opt->add_option("--out", opt.out, "candidates CSV")->required();

    MapArgs map;
    auto* s_map = app.add_subcommand("map", "design map over two parameters");
    s_map->add_option("--pipeline", map.pipeline, "pipeline JSON")->required();
    s_map->add_option("--free", map.free, "two free parameters, e.g. power,speed")->required();
    s_map->add_option("--fixed", map.fixed, "values of the others, e.g. layer_um=20,hatch_um=77");
    s_map->add_option("--rotation", map.rotation, "scan rotation 67 or 90");
    s_map->add_option("--res", res, "grid points per axis");
    s_map->add_option("--res-y", map.res_y, "grid points on the second axis");
    s_map->add_option("--iso-out", map.iso_out, "VED iso-line CSV");
    s_map->add_option("--out", map.out, "map CSV")->required();

    PredictArgs pred;
    auto* s_pred = app.add_subcommand("predict", "predict tensile properties");
    s_pred->add_option("--pipeline", pred.pipeline, "pipeline JSON")->required();
    s_pred->add_option("--params", pred.params, "power,speed,layer_um,hatch_um[,rotation]")->required();
    s_pred->add_option("--out", pred.out, "output CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    Run run;
    run.command = sub->get_name();
    try {
        RunConfig& c = run.config;
        c.jobs = default_jobs();
        c.seed = seed_from_environment(c.seed);
        if (!config_path.empty()) c = apply_config(c, toml::parse_file(config_path));
        if (seed) c.seed = *seed;
        if (jobs) c.jobs = *jobs;
        if (n_starts) c.n_starts = *n_starts;
        if (max_iter) c.max_iterations = *max_iter;
        if (rotation_flag) c.include_scan_rotation = true;
        if (threshold) c.threshold = *threshold;
        if (blur) c.blur = *blur;
        if (sigma) c.sigma = *sigma;
        if (crop) {
            const auto parts = split(*crop, ',');
            if (parts.size() != 4) throw UsageError("--crop expects top,right,left,bottom");
            std::array<std::size_t, 4> v{};
            for (std::size_t i = 0; i < 4; ++i) {
                const auto x = parse_integer(parts[i], "--crop");
                if (x < 0) throw UsageError("--crop margins must be non-negative");
                v[i] = static_cast<std::size_t>(x);
            }
            c.margins = {v[0], v[1], v[2], v[3]};
        }
        if (k) c.cv_k = *k;
        if (n) (run.command == "sobol" ? c.sobol_n : c.screen_n) = *n;
        if (res) c.map_resolution = *res;
        if (pick) c.pick = *pick;
        if (rank) c.rank_mode = *rank;
        if (uniform) c.low_discrepancy = false;
        if (ved_min) c.filters.ved_min = threshold_value(*ved_min, "--ved-min");
        if (ved_max) c.filters.ved_max = threshold_value(*ved_max, "--ved-max");
        if (ys_min) c.filters.ys_min = threshold_value(*ys_min, "--ys-min");
        if (ef_min) c.filters.ef_min = threshold_value(*ef_min, "--ef-min");

        if (sub == s_synth) return run_synth(run, synth, seed.has_value());
        if (sub == s_por) return run_porosity(run, por);
        if (sub == s_train) return run_train(run, train);
        if (sub == s_cv) return run_cv(run, cv);
        if (sub == s_sob) return run_sobol(run, sob);
        if (sub == s_corr) return run_corr(run, corr);
        if (sub == s_opt) return run_optimize(run, opt);
        if (sub == s_map) return run_map(run, map);
        if (sub == s_pred) return run_predict(run, pred);
        throw UsageError("unknown subcommand");
    } catch (const UsageError& e) {
        log("error", run.command, e.what(), {{"kind", "usage"}});
        return 2;
    } catch (const NumericError& e) {
        log("error", run.command, e.what(), {{"kind", "numeric"}});
        return 4;
    } catch (const DataError& e) {
        log("error", run.command, e.what(), {{"kind", "data"}});
        return 3;
    } catch (const DomainError& e) {
        log("error", run.command, e.what(), {{"kind", "data"}});
        return 3;
    } catch (const fs::filesystem_error& e) {
        log("error", run.command, e.what(), {{"kind", "data"}});
        return 3;
    } catch (const Error& e) {
        log("error", run.command, e.what(), {{"kind", "numeric"}});
        return 4;
    }
}
