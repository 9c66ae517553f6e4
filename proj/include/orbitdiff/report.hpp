#pragma once
// run configuration, verdicts, and deterministic serialization shared by the
// command-line tool and the acceptance harness

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "orbitdiff/filtering.hpp"
#include "orbitdiff/sde.hpp"
#include "orbitdiff/types.hpp"

// embedded in every report; overridable from the build system
#ifndef ORBITDIFF_COMMIT
#define ORBITDIFF_COMMIT "unreleased"
#endif

namespace orbitdiff {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// run configuration

// a run is a pure function of this struct plus the binary; numeric fields
// left at zero fall back to the scenario defaults when the run is resolved
struct RunConfig {
    std::string scenario;
    std::uint64_t seed = 1;
    long n_paths = 1000;
    double h = 0.0;
    double horizon = 0.0;
    std::vector<Index> grid;    // cells per base dimension
    std::string estimator = "direct";  // direct | reweighted
    std::vector<int> labels;    // irrep labels for kernel comparisons
    std::string out_dir = ".";
};

namespace detail {

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
    detail::require(j.is_object(), "config must be a JSON object");
    static const std::vector<std::string> known = {
        "scenario", "seed", "n_paths", "h",      "horizon",
        "grid",     "labels", "estimator", "out_dir"};
    for (const auto& item : j.items()) {
        bool found = false;
        for (const std::string& k : known) found = found || k == item.key();
        detail::require(found, "unknown config key: " + item.key());
    }

    RunConfig cfg;
    detail::require(j.contains("scenario") && j["scenario"].is_string(),
                    "config needs a scenario name");
    cfg.scenario = j["scenario"].get<std::string>();
    detail::require(!cfg.scenario.empty(), "config needs a scenario name");

    if (j.contains("seed")) {
        detail::require(j["seed"].is_number_integer()
                            && (j["seed"].is_number_unsigned()
                                || j["seed"].get<long long>() >= 0),
                        "seed must be a nonnegative integer");
        cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("n_paths")) {
        detail::require(j["n_paths"].is_number_integer(),
                        "n_paths must be an integer");
        cfg.n_paths = j["n_paths"].get<long>();
        detail::require(cfg.n_paths > 0, "n_paths must be positive");
    }
    if (j.contains("h")) {
        detail::require(j["h"].is_number(), "h must be a number");
        cfg.h = j["h"].get<double>();
        detail::require(cfg.h > 0.0, "h must be positive");
    }
    if (j.contains("horizon")) {
        detail::require(j["horizon"].is_number(), "horizon must be a number");
        cfg.horizon = j["horizon"].get<double>();
        detail::require(cfg.horizon > 0.0, "horizon must be positive");
    }
    if (j.contains("grid")) {
        detail::require(j["grid"].is_array(), "grid must be an array of cell counts");
        for (const auto& v : j["grid"]) {
            detail::require(v.is_number_integer() && v.get<long>() > 0,
                            "grid entries must be positive integers");
            cfg.grid.push_back(v.get<Index>());
        }
    }
    if (j.contains("labels")) {
        detail::require(j["labels"].is_array(), "labels must be an array");
        for (const auto& v : j["labels"]) {
            detail::require(v.is_number_integer() && v.get<int>() >= 0,
                            "labels must be nonnegative integers");
            cfg.labels.push_back(v.get<int>());
        }
    }
    if (j.contains("estimator")) {
        detail::require(j["estimator"].is_string(), "estimator must be a string");
        cfg.estimator = j["estimator"].get<std::string>();
        detail::require(cfg.estimator == "direct" || cfg.estimator == "reweighted",
                        "estimator must be 'direct' or 'reweighted'");
    }
    if (j.contains("out_dir")) {
        detail::require(j["out_dir"].is_string(), "out_dir must be a string");
        cfg.out_dir = j["out_dir"].get<std::string>();
    }
    return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("bad JSON in " + path + ": " + e.what());
    }
    return parse_run_config(j);
}

inline json run_config_to_json(const RunConfig& cfg) {
    json j;
    j["scenario"] = cfg.scenario;
    j["seed"] = cfg.seed;
    j["n_paths"] = cfg.n_paths;
    j["h"] = cfg.h;
    j["horizon"] = cfg.horizon;
    j["grid"] = cfg.grid;
    j["labels"] = cfg.labels;
    j["estimator"] = cfg.estimator;
    j["out_dir"] = cfg.out_dir;
    return j;
}

// ---------------------------------------------------------------------------
// hashing and number formatting

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : s) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

inline std::string config_hash(const RunConfig& cfg) {
    const std::uint64_t h = fnv1a64(run_config_to_json(cfg).dump());
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// verdicts

// one checked quantity: measured against reference with an uncertainty scale,
// where z counts deviations in units of the spread
struct Verdict {
    std::string id;
    double measured = 0.0;
    double reference = 0.0;
    double spread = 0.0;
    std::string kind = "statistical";  // statistical | algebraic
    double z = 0.0;
    bool pass = false;
};

inline Verdict statistical_verdict(const std::string& id, double measured,
                                   double reference, double pooled_se,
                                   double z_gate = 3.0) {
    Verdict v;
    v.id = id;
    v.measured = measured;
    v.reference = reference;
    v.spread = pooled_se;
    v.kind = "statistical";
    const double diff = std::abs(measured - reference);
    if (pooled_se > 0.0)
        v.z = diff / pooled_se;
    else
        v.z = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    v.pass = v.z <= z_gate;
    return v;
}

inline Verdict algebraic_verdict(const std::string& id, double residual,
                                 double tolerance) {
    Verdict v;
    v.id = id;
    v.measured = residual;
    v.reference = 0.0;
    v.spread = tolerance;
    v.kind = "algebraic";
    v.z = tolerance > 0.0 ? residual / tolerance
                          : std::numeric_limits<double>::infinity();
    v.pass = residual <= tolerance;
    return v;
}

inline json verdict_to_json(const Verdict& v) {
    json j;
    j["id"] = v.id;
    j["measured"] = v.measured;
    j["reference"] = v.reference;
    j["spread"] = v.spread;
    j["kind"] = v.kind;
    j["z"] = v.z;
    j["pass"] = v.pass;
    return j;
}

inline json provenance_block(const RunConfig& cfg, const json& criteria) {
    json j;
    j["config_hash"] = config_hash(cfg);
    j["seed"] = cfg.seed;
    j["commit"] = ORBITDIFF_COMMIT;
    j["criteria"] = criteria;
    return j;
}

inline json verdict_report(const RunConfig& cfg, const json& criteria,
                           const std::vector<Verdict>& verdicts) {
    json j;
    j["provenance"] = provenance_block(cfg, criteria);
    j["config"] = run_config_to_json(cfg);
    json rows = json::array();
    long n_pass = 0;
    double worst = 0.0;
    for (const Verdict& v : verdicts) {
        rows.push_back(verdict_to_json(v));
        n_pass += v.pass ? 1 : 0;
        worst = std::max(worst, v.z);
    }
    j["verdicts"] = rows;
    j["summary"]["checked"] = verdicts.size();
    j["summary"]["passed"] = n_pass;
    j["summary"]["failed"] = static_cast<long>(verdicts.size()) - n_pass;
    j["summary"]["worst_z"] = worst;
    return j;
}

// ---------------------------------------------------------------------------
// tabular output

inline void write_text_file(const std::string& path, const std::string& body) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw ConfigError("cannot write file: " + path);
    out << body;
}

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    return quoted + "\"";
}

inline std::string csv_table(const std::vector<std::string>& header,
                             const std::vector<std::vector<std::string>>& rows) {
    std::ostringstream out;
    for (size_t i = 0; i < header.size(); ++i)
        out << csv_field(header[i]) << (i + 1 < header.size() ? "," : "\n");
    for (const auto& row : rows)
        for (size_t i = 0; i < row.size(); ++i)
            out << csv_field(row[i]) << (i + 1 < row.size() ? "," : "\n");
    return out.str();
}

inline std::string verdicts_csv(const std::vector<Verdict>& verdicts) {
    std::vector<std::vector<std::string>> rows;
    for (const Verdict& v : verdicts)
        rows.push_back({v.id, format_double(v.measured), format_double(v.reference),
                        format_double(v.spread), v.kind, format_double(v.z),
                        v.pass ? "pass" : "fail"});
    return csv_table({"id", "measured", "reference", "spread", "kind", "z", "status"},
                     rows);
}

inline json kernel_estimate_to_json(const KernelEstimate& est) {
    json j;
    j["label"] = est.label;
    j["dim"] = est.dim;
    j["n_paths"] = est.n_paths;
    j["n_excluded"] = est.n_excluded;
    j["source"] = est.source;
    json cells = json::array();
    for (size_t c = 0; c < est.mean.size(); ++c) {
        json cell;
        cell["cell"] = c;
        cell["center"] = std::vector<double>(
            est.cell_centers[c].data(),
            est.cell_centers[c].data() + est.cell_centers[c].size());
        cell["volume"] = est.cell_volumes[c];
        cell["count"] = est.count[c];
        json re = json::array(), im = json::array();
        for (Index p = 0; p < est.dim; ++p)
            for (Index q = 0; q < est.dim; ++q) {
                re.push_back(est.mean[c](p, q).real());
                im.push_back(est.mean[c](p, q).imag());
            }
        cell["mean_re"] = re;
        cell["mean_im"] = im;
        cell["stderr"] = est.stderr_of_mean[c];
        cells.push_back(cell);
    }
    j["cells"] = cells;
    return j;
}

inline std::string kernel_estimate_csv(const KernelEstimate& est) {
    std::vector<std::string> header = {"cell"};
    const Index nd = est.cell_centers.empty() ? 0 : est.cell_centers[0].size();
    for (Index d = 0; d < nd; ++d) header.push_back("center_" + std::to_string(d));
    header.insert(header.end(), {"volume", "count"});
    for (Index p = 0; p < est.dim; ++p)
        for (Index q = 0; q < est.dim; ++q) {
            const std::string tag =
                est.dim == 1 ? "" : "_" + std::to_string(p) + std::to_string(q);
            header.push_back("mean_re" + tag);
            header.push_back("mean_im" + tag);
        }
    header.push_back("stderr");

    std::vector<std::vector<std::string>> rows;
    for (size_t c = 0; c < est.mean.size(); ++c) {
        std::vector<std::string> row = {std::to_string(c)};
        for (Index d = 0; d < nd; ++d)
            row.push_back(format_double(est.cell_centers[c][d]));
        row.push_back(format_double(est.cell_volumes[c]));
        row.push_back(std::to_string(est.count[c]));
        for (Index p = 0; p < est.dim; ++p)
            for (Index q = 0; q < est.dim; ++q) {
                row.push_back(format_double(est.mean[c](p, q).real()));
                row.push_back(format_double(est.mean[c](p, q).imag()));
            }
        row.push_back(format_double(est.stderr_of_mean[c]));
        rows.push_back(row);
    }
    return csv_table(header, rows);
}

// ---------------------------------------------------------------------------
// trajectory export

inline std::string trajectory_csv(const Trajectory& tr) {
    std::vector<std::string> header = {"time"};
    const Index nd = tr.states.empty() ? 0 : tr.states[0].size();
    for (Index d = 0; d < nd; ++d) header.push_back("q_" + std::to_string(d));
    header.push_back("log_weight");
    header.push_back("residual");

    std::vector<std::vector<std::string>> rows;
    for (size_t k = 0; k < tr.states.size(); ++k) {
        std::vector<std::string> row = {format_double(tr.times[k])};
        for (Index d = 0; d < nd; ++d)
            row.push_back(format_double(tr.states[k][d]));
        row.push_back(format_double(tr.log_weights[k]));
        row.push_back(format_double(tr.residuals[k]));
        rows.push_back(row);
    }
    return csv_table(header, rows);
}

inline std::string trajectory_jsonl(const Trajectory& tr) {
    std::ostringstream out;
    for (size_t k = 0; k < tr.states.size(); ++k) {
        json rec;
        rec["time"] = tr.times[k];
        rec["state"] = std::vector<double>(
            tr.states[k].data(), tr.states[k].data() + tr.states[k].size());
        rec["log_weight"] = tr.log_weights[k];
        rec["residual"] = tr.residuals[k];
        out << rec.dump() << "\n";
    }
    return out.str();
}

}  // namespace orbitdiff
