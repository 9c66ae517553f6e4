#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <orbitdiff/driver.hpp>

using namespace orbitdiff;

namespace {

struct CommonFlags {
    std::string out;
    std::string format = "json";
    std::uint64_t seed = 0;
    long paths = 0;
    double step = 0.0;
    bool seed_set = false, paths_set = false, step_set = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--out", f.out, "output file (default: stdout, or out_dir from the config)");
    cmd->add_option("--format", f.format, "output format")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--seed", f.seed, "override the config seed")
        ->each([&f](const std::string&) { f.seed_set = true; });
    cmd->add_option("--paths", f.paths, "override the config path count")
        ->check(CLI::PositiveNumber)
        ->each([&f](const std::string&) { f.paths_set = true; });
    cmd->add_option("--step", f.step, "override the config step size")
        ->check(CLI::PositiveNumber)
        ->each([&f](const std::string&) { f.step_set = true; });
}

RunConfig load_with_overrides(const std::string& path, const CommonFlags& f) {
    RunConfig cfg = load_run_config(path);
    if (f.seed_set) cfg.seed = f.seed;
    if (f.paths_set) cfg.n_paths = f.paths;
    if (f.step_set) cfg.h = f.step;
    return cfg;
}

// route the report to --out, to the config's out_dir, or to stdout
void emit(const std::string& body, const CommonFlags& f, const RunConfig& cfg,
          const std::string& stem) {
    std::string path = f.out;
    if (path.empty() && cfg.out_dir != ".")
        path = cfg.out_dir + "/" + stem + "-" + config_hash(cfg) + "."
               + (f.format == "csv" ? "csv" : "json");
    if (path.empty()) {
        std::fputs(body.c_str(), stdout);
        if (!body.empty() && body.back() != '\n') std::fputc('\n', stdout);
    } else {
        write_text_file(path, body);
        std::printf("wrote %s\n", path.c_str());
    }
}

int run_check_geometry(const std::string& scenario, const CommonFlags& f) {
    const Scenario s = find_scenario(scenario);
    const std::uint64_t seed = f.seed_set ? f.seed : 2026;
    const long points = f.paths_set ? f.paths : 1000;
    const double tol = 1e-8;
    const auto verdicts = check_geometry(s, points, seed, tol);

    RunConfig cfg;
    cfg.scenario = scenario;
    cfg.seed = seed;
    cfg.n_paths = points;
    bool all_pass = true;
    for (const Verdict& v : verdicts) all_pass = all_pass && v.pass;

    if (f.format == "csv") {
        emit(verdicts_csv(verdicts), f, cfg, "check-geometry");
    } else {
        json criteria;
        criteria["points"] = points;
        criteria["tolerance"] = tol;
        criteria["rule"] = "every residual <= tolerance";
        emit(verdict_report(cfg, criteria, verdicts).dump(2), f, cfg,
             "check-geometry");
    }
    return all_pass ? 0 : 1;
}

int run_simulate(const std::string& config_path, const CommonFlags& f) {
    const RunConfig cfg = load_with_overrides(config_path, f);
    const ResolvedRun run = resolve_run(cfg);
    if (f.format == "csv") {
        if (run.scenario.kind == ScenarioKind::gauge_bundle) {
            const KernelEstimate est = estimate_kernel_ambient(
                run.scenario, run.grid, ensemble_config(run));
            emit(kernel_estimate_csv(est), f, cfg, "simulate");
        } else {
            const json j = simulate_run(run);
            std::vector<std::vector<std::string>> rows;
            for (size_t i = 0; i < j["observables"].size(); ++i)
                rows.push_back({j["observables"][i].get<std::string>(),
                                format_double(j["mean"][i].get<double>()),
                                format_double(j["stderr"][i].get<double>())});
            emit(csv_table({"observable", "mean", "stderr"}, rows), f, cfg,
                 "simulate");
        }
    } else {
        emit(simulate_run(run).dump(2), f, cfg, "simulate");
    }
    return 0;
}

int run_verify_identity(const std::string& config_path, const CommonFlags& f) {
    const RunConfig cfg = load_with_overrides(config_path, f);
    const ResolvedRun run = resolve_run(cfg);
    const KernelComparison cmp = verify_identity_run(run);
    if (f.format == "csv") {
        std::vector<Verdict> rows = cmp.aggregates;
        rows.insert(rows.end(), cmp.cells.begin(), cmp.cells.end());
        emit(verdicts_csv(rows), f, cfg, "verify-identity");
    } else {
        emit(kernel_comparison_report(run, cmp).dump(2), f, cfg, "verify-identity");
    }
    bool all_pass = true;
    for (const Verdict& v : cmp.aggregates) all_pass = all_pass && v.pass;
    return all_pass ? 0 : 1;
}

int run_export_paths(const std::string& config_path, const CommonFlags& f) {
    const RunConfig cfg = load_with_overrides(config_path, f);
    const ResolvedRun run = resolve_run(cfg);
    emit(export_paths_text(run, f.format), f, cfg, "paths");
    return 0;
}

int run_list_scenarios() {
    for (const Scenario& s : builtin_scenarios()) {
        std::string kind = s.kind == ScenarioKind::gauge_bundle
                               ? "gauge bundle, chart dim "
                                     + std::to_string(s.bundle.np) + ", fiber dim "
                                     + std::to_string(s.bundle.ng)
                               : "embedded manifold";
        std::printf("%-20s %s (%s)\n", s.name.c_str(), s.summary.c_str(),
                    kind.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"simulation and verification toolkit for diffusions with a gauge symmetry"};
    app.require_subcommand(1);

    std::string scenario, config_path;
    CommonFlags f_geom, f_sim, f_ver, f_exp;

    CLI::App* geom = app.add_subcommand(
        "check-geometry", "run the projector and determinant identity battery");
    geom->add_option("scenario", scenario, "scenario name")->required();
    add_common(geom, f_geom);

    CLI::App* sim = app.add_subcommand(
        "simulate", "estimate the transition kernel of the ambient process");
    sim->add_option("config", config_path, "run config JSON file")->required();
    add_common(sim, f_sim);

    CLI::App* ver = app.add_subcommand(
        "verify-identity",
        "compare the group-averaged ambient kernel with the reduced kernel");
    ver->add_option("config", config_path, "run config JSON file")->required();
    add_common(ver, f_ver);

    CLI::App* exp = app.add_subcommand("export-paths",
                                       "write sampled trajectories of the ambient process");
    exp->add_option("config", config_path, "run config JSON file")->required();
    add_common(exp, f_exp);

    app.add_subcommand("list-scenarios", "list the built-in scenarios");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (geom->parsed()) return run_check_geometry(scenario, f_geom);
        if (sim->parsed()) return run_simulate(config_path, f_sim);
        if (ver->parsed()) return run_verify_identity(config_path, f_ver);
        if (exp->parsed()) return run_export_paths(config_path, f_exp);
        return run_list_scenarios();
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
