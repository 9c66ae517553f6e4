#pragma once
// ensemble drivers behind the command-line tool and the verification harness:
// hot integration loops, grid-resolved kernel estimators, geometry check
// batteries, and the run commands assembled from them

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "orbitdiff/bundle.hpp"
#include "orbitdiff/filtering.hpp"
#include "orbitdiff/report.hpp"
#include "orbitdiff/rng.hpp"
#include "orbitdiff/scenario.hpp"
#include "orbitdiff/sde.hpp"

namespace orbitdiff {

// ---------------------------------------------------------------------------
// resolved runs

struct ResolvedRun {
    Scenario scenario;
    RunConfig config;  // with scenario defaults substituted
    GridSpec grid;
    std::vector<int> labels;
};

inline ResolvedRun resolve_run(const RunConfig& cfg) {
    ResolvedRun run{find_scenario(cfg.scenario), cfg, {}, {}};
    if (run.config.h <= 0.0) run.config.h = run.scenario.default_step;
    if (run.config.horizon <= 0.0)
        run.config.horizon = run.scenario.default_horizon;
    run.grid = run.scenario.base_grid;
    if (!cfg.grid.empty()) {
        if (static_cast<Index>(cfg.grid.size()) != run.grid.dims())
            throw ConfigError("grid rank does not match the scenario base");
        run.grid.cells.clear();
        for (Index c : cfg.grid) run.grid.cells.push_back(static_cast<int>(c));
    }
    run.labels = cfg.labels.empty() ? run.scenario.default_labels : cfg.labels;
    return run;
}

struct EnsembleConfig {
    long n_paths = 100000;
    double h = 1e-3;
    double horizon = 0.5;
    std::uint64_t seed = 1;
    int n_batches = 32;
    double abort_quota = 1e-3;  // tolerated fraction of numerically lost paths
};

inline EnsembleConfig ensemble_config(const ResolvedRun& run) {
    EnsembleConfig ec;
    ec.n_paths = run.config.n_paths;
    ec.h = run.config.h;
    ec.horizon = run.config.horizon;
    ec.seed = run.config.seed;
    return ec;
}

// decorrelates the comparison ensemble from the primary one
inline std::uint64_t companion_seed(std::uint64_t seed) {
    return seed ^ 0x9e3779b97f4a7c15ULL;
}

namespace detail {

inline const Irrep& irrep_for(const GroupModel& g, int label) {
    for (const Irrep& rep : g.irreps)
        if (rep.label == label) return rep;
    throw ConfigError("no irrep with label " + std::to_string(label));
}

inline void check_abort_quota(long n_aborted, const EnsembleConfig& ec,
                              const std::string& what) {
    if (static_cast<double>(n_aborted) > ec.abort_quota * ec.n_paths)
        throw NumericalError(what + ": " + std::to_string(n_aborted) + " of "
                             + std::to_string(ec.n_paths)
                             + " paths lost numerically");
}

// projection geometry and reduced coefficients along a path, evaluated once
// and reused when the scenario geometry is translation invariant
class ReducedStepCache {
public:
    struct Work {
        PointGeometry pg;
        ReducedCoefficients rc;
        Mat noise_factor;
    };

    ReducedStepCache(const GaugeBundle& b, bool homogeneous, const Vec& q0)
        : bundle_(b), homogeneous_(homogeneous) {
        if (homogeneous_) set(q0);
    }

    const Work& at(const Vec& q) {
        if (!homogeneous_) set(q);
        return work_;
    }

    bool frozen() const { return homogeneous_; }

private:
    void set(const Vec& q) {
        work_.pg = point_geometry(bundle_, q);
        work_.rc = reduced_coefficients(bundle_, work_.pg);
        work_.noise_factor = bundle_.metric.noise_factor(q);
    }

    const GaugeBundle& bundle_;
    bool homogeneous_ = false;
    Work work_;
};

inline std::vector<double> slice_cell_volumes(const GaugeBundle& b,
                                              const GridSpec& grid) {
    return cell_volumes(
        grid, [&b](const Vec& x) { return slice_volume_density(b, x); });
}

// one Euler step of the gauge-fixed (or volume-blind) slice process followed
// by the slice projection; every reduced runner steps through here
inline void reduced_step(const ReducedStepCache::Work& w, const GaugeBundle& b,
                         bool volume_blind, double ds, double ns, double h,
                         const Vec& dw, Vec& q) {
    const Vec drift =
        volume_blind ? Vec(w.rc.base_drift + w.rc.volume_drift) : w.rc.base_drift;
    q += ds * drift * h + ns * (w.pg.n * (w.noise_factor * dw));
    q = decompose(b, q).slice_point;
}

// kernel grids bin base coordinates; a wider grid would read past them
inline void check_grid_rank(const GridSpec& grid, const GaugeBundle& b,
                            const Vec& probe, const std::string& name) {
    const Index rank = b.base_coords(probe).size();
    if (grid.dims() > rank)
        throw ConfigError("grid rank " + std::to_string(grid.dims())
                          + " exceeds base coordinate rank "
                          + std::to_string(rank) + " on " + name);
}

inline KernelEstimate build_estimate(int label, Index dim, const GridSpec& grid,
                                     const std::vector<double>& volumes,
                                     const std::vector<BatchAccumulator>& acc,
                                     long n_paths, long n_excluded,
                                     const std::string& source) {
    KernelEstimate est;
    est.label = label;
    est.dim = dim;
    est.n_paths = n_paths;
    est.n_excluded = n_excluded;
    est.source = source;
    const Index n_cells = grid.cell_count();
    for (Index c = 0; c < n_cells; ++c) {
        est.cell_centers.push_back(grid.center(c));
        est.cell_volumes.push_back(volumes[static_cast<size_t>(c)]);
        CMat m(dim, dim);
        double se2 = 0.0;
        for (Index p = 0; p < dim; ++p)
            for (Index q = 0; q < dim; ++q) {
                const BatchAccumulator& a = acc[static_cast<size_t>(p * dim + q)];
                m(p, q) = a.mean(c) / volumes[static_cast<size_t>(c)];
                const double se =
                    a.stderr_of_mean(c) / volumes[static_cast<size_t>(c)];
                se2 += se * se;
            }
        est.mean.push_back(m);
        est.stderr_of_mean.push_back(std::sqrt(se2));
        est.count.push_back(acc[0].hits(c));
    }
    return est;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// kernel estimators

// ambient ensemble; each path deposits the irrep matrix of its terminal fiber
// phase into the cell of its terminal base point
inline std::vector<KernelEstimate> group_average_kernel(
    const Scenario& s, const GridSpec& grid, const std::vector<int>& labels,
    const EnsembleConfig& ec) {
    if (s.kind != ScenarioKind::gauge_bundle)
        throw ConfigError(s.name + " has no gauge structure to average over");
    const GaugeBundle& b = s.bundle;
    detail::check_grid_rank(grid, b, s.ambient_start, s.name);
    const Index np = b.np;
    const long n_steps = std::lround(ec.horizon / ec.h);
    const SimulationParams params;
    const double ds = drift_scale(params), ns = noise_scale(params);
    const double sqh = std::sqrt(ec.h);

    std::vector<const Irrep*> reps;
    for (int label : labels) reps.push_back(&detail::irrep_for(b.group, label));

    const Index n_cells = grid.cell_count();
    std::vector<std::vector<BatchAccumulator>> acc;
    for (const Irrep* rep : reps)
        acc.emplace_back(static_cast<size_t>(rep->dim * rep->dim),
                         BatchAccumulator(n_cells, ec.n_paths, ec.n_batches));

    const bool frozen = s.homogeneous_geometry;
    Vec drift0;
    Mat factor0;
    if (frozen) {
        drift0 = ds * b.metric.bm_drift_divergence_form(s.ambient_start);
        factor0 = ns * b.metric.noise_factor(s.ambient_start);
    }

    long n_aborted = 0;
    for (long pid = 0; pid < ec.n_paths; ++pid) {
        GaussianStream rng(ec.seed, static_cast<std::uint64_t>(pid));
        Vec q = s.ambient_start;
        bool stopped = false, aborted = false;
        for (long k = 0; k < n_steps; ++k) {
            if (s.kernel_stop_ambient && s.kernel_stop_ambient(q)) {
                stopped = true;
                break;
            }
            const Vec dw = sqh * rng.normal_vec(np);
            if (frozen)
                q += drift0 * ec.h + factor0 * dw;
            else
                q += ds * b.metric.bm_drift_divergence_form(q) * ec.h
                     + ns * (b.metric.noise_factor(q) * dw);
            if (!q.allFinite()) {
                aborted = true;
                break;
            }
        }
        if (aborted) {
            ++n_aborted;
            continue;
        }
        if (stopped) continue;
        const Index cell = grid.locate(b.base_coords(q));
        if (cell < 0) continue;
        const Vec phase = b.gauge_phase(q);
        for (size_t l = 0; l < reps.size(); ++l) {
            const CMat d = reps[l]->matrix(phase);
            const Index dim = reps[l]->dim;
            for (Index p = 0; p < dim; ++p)
                for (Index qq = 0; qq < dim; ++qq)
                    acc[l][static_cast<size_t>(p * dim + qq)].add(
                        static_cast<std::uint64_t>(pid), cell, d(p, qq));
        }
    }
    detail::check_abort_quota(n_aborted, ec, "ambient kernel run on " + s.name);

    const std::vector<double> volumes = detail::slice_cell_volumes(b, grid);
    std::vector<KernelEstimate> out;
    for (size_t l = 0; l < reps.size(); ++l)
        out.push_back(detail::build_estimate(
            labels[l], reps[l]->dim, grid, volumes, acc[l], ec.n_paths,
            n_aborted, "ambient process, terminal fiber phase"));
    return out;
}

// plain base-occupancy kernel of the ambient process
inline KernelEstimate estimate_kernel_ambient(const Scenario& s,
                                              const GridSpec& grid,
                                              const EnsembleConfig& ec) {
    return group_average_kernel(s, grid, {0}, ec)[0];
}

// gauge-fixed ensemble on the slice; each path carries one multiplicative
// group transport per label, and optionally the change-of-drift weight that
// converts the orbit-volume-blind process into the gauge-fixed one
inline std::vector<KernelEstimate> estimate_kernel_reduced(
    const Scenario& s, const GridSpec& grid, const std::vector<int>& labels,
    const EnsembleConfig& ec, const std::string& variant = "direct") {
    if (s.kind != ScenarioKind::gauge_bundle)
        throw ConfigError(s.name + " has no reduced process");
    if (variant != "direct" && variant != "reweighted")
        throw ConfigError("estimator must be 'direct' or 'reweighted'");
    const GaugeBundle& b = s.bundle;
    detail::check_grid_rank(grid, b, s.ambient_start, s.name);
    const Index np = b.np;
    const long n_steps = std::lround(ec.horizon / ec.h);
    const SimulationParams params;
    const double ds = drift_scale(params), ns = noise_scale(params);
    const double sqh = std::sqrt(ec.h);
    const bool reweighted = variant == "reweighted";

    std::vector<const Irrep*> reps;
    for (int label : labels) reps.push_back(&detail::irrep_for(b.group, label));

    const Index n_cells = grid.cell_count();
    std::vector<std::vector<BatchAccumulator>> acc;
    for (const Irrep* rep : reps)
        acc.emplace_back(static_cast<size_t>(rep->dim * rep->dim),
                         BatchAccumulator(n_cells, ec.n_paths, ec.n_batches));

    const Vec q0 = b.param(s.base_start);
    detail::ReducedStepCache cache(b, s.homogeneous_geometry, q0);

    // translation-invariant geometry also freezes the transport coefficients
    std::vector<MultIntegralCoeffs> frozen_co;
    if (cache.frozen()) {
        const auto& w = cache.at(q0);
        for (const Irrep* rep : reps)
            frozen_co.push_back(mult_integral_coefficients(
                w.pg, w.noise_factor, rep->algebra, w.rc.fiber_drift, params));
    }

    long n_aborted = 0;
    for (long pid = 0; pid < ec.n_paths; ++pid) {
        GaussianStream rng(ec.seed, static_cast<std::uint64_t>(pid));
        Vec q = q0;
        std::vector<MultiplicativeIntegralState> transport;
        for (const Irrep* rep : reps)
            transport.push_back(make_mult_integral_state(*rep));
        double log_weight = 0.0;
        bool stopped = false, aborted = false;
        try {
            for (long k = 0; k < n_steps; ++k) {
                if (s.kernel_stop_base
                    && s.kernel_stop_base(b.base_coords(q))) {
                    stopped = true;
                    break;
                }
                const auto& w = cache.at(q);
                const Vec dw = sqh * rng.normal_vec(np);
                for (size_t l = 0; l < reps.size(); ++l) {
                    const MultIntegralCoeffs co =
                        cache.frozen()
                            ? frozen_co[l]
                            : mult_integral_coefficients(w.pg, w.noise_factor,
                                                         reps[l]->algebra,
                                                         w.rc.fiber_drift,
                                                         params);
                    mult_integral_step(transport[l], co, dw, ec.h);
                }
                if (reweighted)
                    log_weight += girsanov_log_weight_step(
                        w.pg, w.noise_factor, w.rc.volume_drift, dw, ec.h,
                        params);
                detail::reduced_step(w, b, reweighted, ds, ns, ec.h, dw, q);
                if (!q.allFinite()) {
                    aborted = true;
                    break;
                }
            }
        } catch (const NumericalError&) {
            aborted = true;
        }
        for (const auto& st : transport) aborted = aborted || st.overflowed;
        if (aborted) {
            ++n_aborted;
            continue;
        }
        if (stopped) continue;
        const Index cell = grid.locate(b.base_coords(q));
        if (cell < 0) continue;
        const double weight = reweighted ? std::exp(log_weight) : 1.0;
        for (size_t l = 0; l < reps.size(); ++l) {
            const Index dim = reps[l]->dim;
            for (Index p = 0; p < dim; ++p)
                for (Index qq = 0; qq < dim; ++qq)
                    acc[l][static_cast<size_t>(p * dim + qq)].add(
                        static_cast<std::uint64_t>(pid), cell,
                        weight * transport[l].value(p, qq));
        }
    }
    detail::check_abort_quota(n_aborted, ec, "reduced kernel run on " + s.name);

    const std::vector<double> volumes = detail::slice_cell_volumes(b, grid);
    const std::string source =
        reweighted ? "orbit-volume-blind process, group transport, reweighted"
                   : "gauge-fixed process, group transport";
    std::vector<KernelEstimate> out;
    for (size_t l = 0; l < reps.size(); ++l)
        out.push_back(detail::build_estimate(labels[l], reps[l]->dim, grid,
                                             volumes, acc[l], ec.n_paths,
                                             n_aborted, source));
    return out;
}

// terminal slice point of one reduced path, for cross-checking the fused
// estimator loop against the generic integrator
inline Vec reduced_terminal_point(const Scenario& s, const EnsembleConfig& ec,
                                  std::uint64_t path_id,
                                  const std::string& variant = "direct") {
    const GaugeBundle& b = s.bundle;
    const long n_steps = std::lround(ec.horizon / ec.h);
    const SimulationParams params;
    const double ds = drift_scale(params), ns = noise_scale(params);
    const double sqh = std::sqrt(ec.h);
    const Vec q0 = b.param(s.base_start);
    detail::ReducedStepCache cache(b, s.homogeneous_geometry, q0);
    GaussianStream rng(ec.seed, path_id);
    Vec q = q0;
    for (long k = 0; k < n_steps; ++k) {
        const auto& w = cache.at(q);
        const Vec dw = sqh * rng.normal_vec(b.np);
        detail::reduced_step(w, b, variant == "reweighted", ds, ns, ec.h, dw, q);
    }
    return q;
}

// ---------------------------------------------------------------------------
// observable runners

struct ObservableStats {
    std::vector<double> mean;
    std::vector<double> se;
    double weight_mean = 1.0;  // mean of the path weights (1 when unweighted)
    double weight_se = 0.0;
    long n_stopped = 0;
    long n_aborted = 0;
};

namespace detail {

inline ObservableStats collect_stats(const std::vector<BatchAccumulator>& acc,
                                     const BatchAccumulator& weights,
                                     long n_stopped, long n_aborted) {
    ObservableStats out;
    for (const BatchAccumulator& a : acc) {
        out.mean.push_back(a.mean(0).real());
        out.se.push_back(a.stderr_of_mean(0));
    }
    out.weight_mean = weights.mean(0).real();
    out.weight_se = weights.stderr_of_mean(0);
    out.n_stopped = n_stopped;
    out.n_aborted = n_aborted;
    return out;
}

}  // namespace detail

// ambient ensemble; observables evaluated at the terminal ambient point, with
// paths frozen in place once the stop predicate fires
inline ObservableStats ambient_observable_stats(
    const Scenario& s, const EnsembleConfig& ec,
    const std::vector<ScalarFun>& observables, const StopPredicate& stop = {}) {
    if (s.kind != ScenarioKind::gauge_bundle)
        throw ConfigError(s.name + " has no bundle ambient process");
    const GaugeBundle& b = s.bundle;
    const Index np = b.np;
    const long n_steps = std::lround(ec.horizon / ec.h);
    const SimulationParams params;
    const double ds = drift_scale(params), ns = noise_scale(params);
    const double sqh = std::sqrt(ec.h);

    std::vector<BatchAccumulator> acc(
        observables.size(), BatchAccumulator(1, ec.n_paths, ec.n_batches));
    BatchAccumulator weights(1, ec.n_paths, ec.n_batches);

    const bool frozen = s.homogeneous_geometry;
    Vec drift0;
    Mat factor0;
    if (frozen) {
        drift0 = ds * b.metric.bm_drift_divergence_form(s.ambient_start);
        factor0 = ns * b.metric.noise_factor(s.ambient_start);
    }

    long n_stopped = 0, n_aborted = 0;
    for (long pid = 0; pid < ec.n_paths; ++pid) {
        GaussianStream rng(ec.seed, static_cast<std::uint64_t>(pid));
        Vec q = s.ambient_start;
        bool stopped = false, aborted = false;
        for (long k = 0; k < n_steps; ++k) {
            if (stop && stop(q)) {
                stopped = true;
                break;
            }
            const Vec dw = sqh * rng.normal_vec(np);
            if (frozen)
                q += drift0 * ec.h + factor0 * dw;
            else
                q += ds * b.metric.bm_drift_divergence_form(q) * ec.h
                     + ns * (b.metric.noise_factor(q) * dw);
            if (!q.allFinite()) {
                aborted = true;
                break;
            }
        }
        if (aborted) {
            ++n_aborted;
            continue;
        }
        n_stopped += stopped ? 1 : 0;
        for (size_t i = 0; i < observables.size(); ++i)
            acc[i].add(static_cast<std::uint64_t>(pid), 0, observables[i](q));
        weights.add(static_cast<std::uint64_t>(pid), 0, 1.0);
    }
    detail::check_abort_quota(n_aborted, ec,
                              "ambient observable run on " + s.name);
    return detail::collect_stats(acc, weights, n_stopped, n_aborted);
}

// coupled slice-plus-group ensemble driven by one Wiener stream; observables
// evaluated at the reconstructed ambient point act(slice, element)
inline ObservableStats joint_observable_stats(
    const Scenario& s, const EnsembleConfig& ec,
    const std::vector<ScalarFun>& observables, const StopPredicate& stop = {}) {
    if (s.kind != ScenarioKind::gauge_bundle)
        throw ConfigError(s.name + " has no joint process");
    const GaugeBundle& b = s.bundle;
    const Index np = b.np;
    const long n_steps = std::lround(ec.horizon / ec.h);
    const SimulationParams params;
    const double ds = drift_scale(params), ns = noise_scale(params);
    const double sqh = std::sqrt(ec.h);

    std::vector<BatchAccumulator> acc(
        observables.size(), BatchAccumulator(1, ec.n_paths, ec.n_batches));
    BatchAccumulator weights(1, ec.n_paths, ec.n_batches);

    const Vec q0 = b.param(s.base_start);
    detail::ReducedStepCache cache(b, s.homogeneous_geometry, q0);

    long n_stopped = 0, n_aborted = 0;
    for (long pid = 0; pid < ec.n_paths; ++pid) {
        GaussianStream rng(ec.seed, static_cast<std::uint64_t>(pid));
        Vec q = q0;
        Vec elem = b.group.identity;
        Vec point = b.act(q, elem);
        bool stopped = false, aborted = false;
        try {
            for (long k = 0; k < n_steps; ++k) {
                if (stop && stop(point)) {
                    stopped = true;
                    break;
                }
                const auto& w = cache.at(q);
                const Mat vb = b.group.vbar(elem);
                const Vec dw = sqh * rng.normal_vec(np);
                const Vec fiber_noise = w.pg.lambda * (w.noise_factor * dw);
                elem += ds * (vb * w.rc.fiber_drift) * ec.h
                        + ns * (vb * fiber_noise);
                detail::reduced_step(w, b, false, ds, ns, ec.h, dw, q);
                point = b.act(q, elem);
                if (!point.allFinite()) {
                    aborted = true;
                    break;
                }
            }
        } catch (const NumericalError&) {
            aborted = true;
        }
        if (aborted) {
            ++n_aborted;
            continue;
        }
        n_stopped += stopped ? 1 : 0;
        for (size_t i = 0; i < observables.size(); ++i)
            acc[i].add(static_cast<std::uint64_t>(pid), 0,
                       observables[i](point));
        weights.add(static_cast<std::uint64_t>(pid), 0, 1.0);
    }
    detail::check_abort_quota(n_aborted, ec, "joint run on " + s.name);
    return detail::collect_stats(acc, weights, n_stopped, n_aborted);
}

// gauge-fixed or volume-blind ensemble on the slice with per-path weights;
// observables evaluated at the (frozen) terminal slice point
inline ObservableStats reduced_observable_stats(
    const Scenario& s, const EnsembleConfig& ec,
    const std::vector<ScalarFun>& observables,
    const std::string& variant = "direct", const StopPredicate& stop = {}) {
    if (s.kind != ScenarioKind::gauge_bundle)
        throw ConfigError(s.name + " has no reduced process");
    const GaugeBundle& b = s.bundle;
    const Index np = b.np;
    const long n_steps = std::lround(ec.horizon / ec.h);
    const SimulationParams params;
    const double ds = drift_scale(params), ns = noise_scale(params);
    const double sqh = std::sqrt(ec.h);
    const bool reweighted = variant == "reweighted";

    std::vector<BatchAccumulator> acc(
        observables.size(), BatchAccumulator(1, ec.n_paths, ec.n_batches));
    BatchAccumulator weights(1, ec.n_paths, ec.n_batches);

    const Vec q0 = b.param(s.base_start);
    detail::ReducedStepCache cache(b, s.homogeneous_geometry, q0);

    long n_stopped = 0, n_aborted = 0;
    for (long pid = 0; pid < ec.n_paths; ++pid) {
        GaussianStream rng(ec.seed, static_cast<std::uint64_t>(pid));
        Vec q = q0;
        double log_weight = 0.0;
        bool stopped = false, aborted = false;
        try {
            for (long k = 0; k < n_steps; ++k) {
                if (stop && stop(q)) {
                    stopped = true;
                    break;
                }
                const auto& w = cache.at(q);
                const Vec dw = sqh * rng.normal_vec(np);
                if (reweighted)
                    log_weight += girsanov_log_weight_step(
                        w.pg, w.noise_factor, w.rc.volume_drift, dw, ec.h,
                        params);
                detail::reduced_step(w, b, reweighted, ds, ns, ec.h, dw, q);
                if (!q.allFinite()) {
                    aborted = true;
                    break;
                }
            }
        } catch (const NumericalError&) {
            aborted = true;
        }
        if (aborted) {
            ++n_aborted;
            continue;
        }
        n_stopped += stopped ? 1 : 0;
        const double weight = reweighted ? std::exp(log_weight) : 1.0;
        for (size_t i = 0; i < observables.size(); ++i)
            acc[i].add(static_cast<std::uint64_t>(pid), 0,
                       weight * observables[i](q));
        weights.add(static_cast<std::uint64_t>(pid), 0, weight);
    }
    detail::check_abort_quota(n_aborted, ec, "reduced run on " + s.name);
    return detail::collect_stats(acc, weights, n_stopped, n_aborted);
}

// generic ensemble over a hand-assembled process; terminal_map converts the
// integrator state into the point the observables expect
inline ObservableStats sde_observable_stats(
    const SdeSpec& spec, const Vec& start, const EnsembleConfig& ec,
    const std::vector<ScalarFun>& observables,
    const std::function<Vec(const Vec&)>& terminal_map = {}) {
    std::vector<BatchAccumulator> acc(
        observables.size(), BatchAccumulator(1, ec.n_paths, ec.n_batches));
    BatchAccumulator weights(1, ec.n_paths, ec.n_batches);
    const SimulationParams params;
    IntegratorConfig cfg;
    cfg.h = ec.h;
    cfg.seed = ec.seed;
    cfg.max_residual = 0.1;

    long n_aborted = 0;
    for (long pid = 0; pid < ec.n_paths; ++pid) {
        const TerminalResult r =
            run_to_horizon(spec, start, ec.horizon, cfg, params,
                           static_cast<std::uint64_t>(pid));
        if (r.aborted) {
            ++n_aborted;
            continue;
        }
        const Vec point = terminal_map ? terminal_map(r.state) : r.state;
        for (size_t i = 0; i < observables.size(); ++i)
            acc[i].add(static_cast<std::uint64_t>(pid), 0,
                       observables[i](point));
        weights.add(static_cast<std::uint64_t>(pid), 0, 1.0);
    }
    detail::check_abort_quota(n_aborted, ec, "ensemble run");
    return detail::collect_stats(acc, weights, 0, n_aborted);
}

// ---------------------------------------------------------------------------
// geometry check battery

namespace detail {

struct ResidualTracker {
    std::vector<std::string> ids;
    std::vector<double> worst;

    void note(const std::string& id, double value) {
        for (size_t i = 0; i < ids.size(); ++i)
            if (ids[i] == id) {
                worst[i] = std::max(worst[i], value);
                return;
            }
        ids.push_back(id);
        worst.push_back(value);
    }

    std::vector<Verdict> verdicts(const std::string& prefix, double tol) const {
        std::vector<Verdict> out;
        for (size_t i = 0; i < ids.size(); ++i)
            out.push_back(algebraic_verdict(prefix + "/" + ids[i], worst[i], tol));
        return out;
    }
};

inline double max_abs(const Mat& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace detail

// projector algebra, annihilation relations, and determinant identities over
// randomly sampled chart and base points
inline std::vector<Verdict> check_geometry(const Scenario& s,
                                           long n_points = 1000,
                                           std::uint64_t seed = 2026,
                                           double tol = 1e-8) {
    detail::ResidualTracker t;
    GaussianStream rng(seed, 0);
    const SimulationParams params;

    if (s.kind == ScenarioKind::gauge_bundle) {
        const GaugeBundle& b = s.bundle;
        const Index np = b.np, ng = b.ng;
        const Mat eye_g = Mat::Identity(ng, ng);
        const Mat ubar = b.group.ubar(b.group.identity);
        const Mat vbar = b.group.vbar(b.group.identity);
        for (long i = 0; i < n_points; ++i) {
            const Vec u = s.sample_chart(rng);
            const PointGeometry p = point_geometry(b, u);
            t.note("projector-idempotent-n", detail::max_abs(p.n * p.n - p.n));
            t.note("projector-idempotent-pperp",
                   detail::max_abs(p.p_perp * p.p_perp - p.p_perp));
            t.note("projector-idempotent-pi",
                   detail::max_abs(p.pi * p.pi - p.pi));
            t.note("product-n-pperp", detail::max_abs(p.n * p.p_perp - p.p_perp));
            t.note("product-pperp-n", detail::max_abs(p.p_perp * p.n - p.n));
            t.note("response-normalization",
                   detail::max_abs(p.lambda * p.k - eye_g));
            t.note("n-annihilates-killing", detail::max_abs(p.n * p.k));
            t.note("pi-annihilates-killing", detail::max_abs(p.pi * p.k));
            t.note("phase-jacobian-annihilates-n",
                   detail::max_abs(p.chi_jac * p.n));
            t.note("horizontal-license",
                   detail::max_abs((p.n * p.g_inv * p.n.transpose())
                                       * (p.p_perp.transpose() * p.g_h * p.p_perp)
                                   - p.p_perp));

            Mat block = Mat::Zero(np + ng, np + ng);
            block.topLeftCorner(np, np) = p.p_perp;
            block.bottomRightCorner(ng, ng) = eye_g;
            t.note("adapted-block-inverse",
                   detail::max_abs(adapted_pseudo_inverse(p, vbar)
                                       * adapted_metric(p, ubar)
                                   - block));
        }
        for (long i = 0; i < n_points; ++i) {
            const Vec x = s.sample_base(rng);
            const SurfaceGeometry sg = surface_geometry(b, x);
            const PointGeometry& p = sg.point;
            t.note("slice-projector-det",
                   std::abs(projector_pseudo_det(p.p_perp) - 1.0));
            const Mat h_inv = sg.h.ldlt().solve(Mat::Identity(b.nx, b.nx));
            t.note("horizontal-mass",
                   detail::max_abs(p.n * p.g_inv * p.n.transpose()
                                   - sg.q_x * h_inv * sg.q_x.transpose()));
            const double closed = adapted_pseudo_det_closed(p, ubar);
            t.note("adapted-det-closed",
                   std::abs(adapted_pseudo_det(p, ubar) - closed)
                       / std::abs(closed));
        }
    } else {
        const SdeSpec generic = make_submanifold_ambient_sde(
            s.embedding, s.chart_inverse, s.ambient_metric);
        for (long i = 0; i < n_points; ++i) {
            const Vec x = s.sample_base(rng);
            const Vec q = s.embedding(x);
            t.note("closed-vs-generic-drift",
                   (s.closed_ambient.drift(q, params)
                    - generic.drift(q, params))
                       .cwiseAbs()
                       .maxCoeff());
            const Mat dc = s.closed_ambient.diffusion(q, params);
            const Mat dg = generic.diffusion(q, params);
            t.note("closed-vs-generic-covariance",
                   detail::max_abs(dc * dc.transpose() - dg * dg.transpose()));
        }
    }
    return t.verdicts(s.name, tol);
}

// ---------------------------------------------------------------------------
// kernel factorization comparison

struct KernelComparison {
    std::vector<KernelEstimate> reduced;
    std::vector<KernelEstimate> ambient;
    std::vector<Verdict> cells;       // worst component per (label, cell)
    std::vector<Verdict> aggregates;  // pooled pass rules per label + overall
    long empty_cells = 0;
};

namespace detail {

// pooled pass rule: nothing beyond four standard errors, and at most five
// percent of the cells between three and four
inline Verdict pooled_verdict(const std::string& id,
                              const std::vector<double>& zs) {
    Verdict v;
    v.id = id;
    v.kind = "aggregate";
    long loose = 0;
    double worst = 0.0;
    for (double z : zs) {
        worst = std::max(worst, z);
        loose += z > 3.0 ? 1 : 0;
    }
    const double share = zs.empty() ? 0.0 : static_cast<double>(loose) / zs.size();
    v.measured = share;
    v.reference = 0.0;
    v.spread = 0.05;
    v.z = worst;
    v.pass = worst <= 4.0 && share <= 0.05;
    return v;
}

}  // namespace detail

inline KernelComparison verify_identity_run(const ResolvedRun& run) {
    const EnsembleConfig ec = ensemble_config(run);
    EnsembleConfig ea = ec;
    ea.seed = companion_seed(ec.seed);

    KernelComparison cmp;
    cmp.reduced = estimate_kernel_reduced(run.scenario, run.grid, run.labels,
                                          ec, run.config.estimator);
    cmp.ambient = group_average_kernel(run.scenario, run.grid, run.labels, ea);

    std::vector<double> all_z;
    const long min_count = 64;
    for (size_t l = 0; l < run.labels.size(); ++l) {
        const KernelEstimate& red = cmp.reduced[l];
        const KernelEstimate& amb = cmp.ambient[l];
        std::vector<double> label_z;
        for (size_t c = 0; c < red.mean.size(); ++c) {
            if (red.count[c] < min_count || amb.count[c] < min_count) {
                ++cmp.empty_cells;
                continue;
            }
            const double se = std::sqrt(red.stderr_of_mean[c] * red.stderr_of_mean[c]
                                        + amb.stderr_of_mean[c] * amb.stderr_of_mean[c]);
            for (Index p = 0; p < red.dim; ++p)
                for (Index q = 0; q < red.dim; ++q) {
                    const std::complex<double> mr = red.mean[c](p, q);
                    const std::complex<double> ma = amb.mean[c](p, q);
                    const std::string base =
                        "lambda" + std::to_string(red.label) + "/cell"
                        + std::to_string(c)
                        + (red.dim > 1 ? "/" + std::to_string(p)
                                             + std::to_string(q)
                                       : "");
                    const Verdict vre = statistical_verdict(
                        base + "/re", mr.real(), ma.real(), se);
                    const Verdict vim = statistical_verdict(
                        base + "/im", mr.imag(), ma.imag(), se);
                    cmp.cells.push_back(vre.z >= vim.z ? vre : vim);
                    label_z.push_back(std::max(vre.z, vim.z));
                    all_z.push_back(std::max(vre.z, vim.z));
                }
        }
        cmp.aggregates.push_back(detail::pooled_verdict(
            "lambda" + std::to_string(run.labels[l]) + "/pooled", label_z));
    }
    cmp.aggregates.push_back(detail::pooled_verdict("pooled", all_z));
    return cmp;
}

inline json kernel_comparison_report(const ResolvedRun& run,
                                     const KernelComparison& cmp) {
    json criteria;
    criteria["cell_rule"] = "|z| <= 3 per (label, cell) component";
    criteria["pooled_rule"] =
        "max |z| <= 4 and at most 5% of cells with |z| > 3";
    criteria["min_cell_count"] = 64;
    json j = verdict_report(run.config, criteria, cmp.aggregates);
    json rows = json::array();
    for (const Verdict& v : cmp.cells) rows.push_back(verdict_to_json(v));
    j["cells"] = rows;
    j["empty_cells"] = cmp.empty_cells;
    json reduced = json::array(), ambient = json::array();
    for (const KernelEstimate& est : cmp.reduced)
        reduced.push_back(kernel_estimate_to_json(est));
    for (const KernelEstimate& est : cmp.ambient)
        ambient.push_back(kernel_estimate_to_json(est));
    j["reduced"] = reduced;
    j["ambient"] = ambient;
    return j;
}

// ---------------------------------------------------------------------------
// plain simulation and path export

inline json simulate_run(const ResolvedRun& run) {
    const Scenario& s = run.scenario;
    const EnsembleConfig ec = ensemble_config(run);
    json j;
    j["provenance"] = provenance_block(run.config, json::object());
    j["config"] = run_config_to_json(run.config);

    if (s.kind == ScenarioKind::gauge_bundle) {
        const KernelEstimate est = estimate_kernel_ambient(s, run.grid, ec);
        j["estimate"] = kernel_estimate_to_json(est);
        double mass = 0.0;
        for (size_t c = 0; c < est.mean.size(); ++c)
            mass += est.mean[c](0, 0).real() * est.cell_volumes[c];
        j["mass_on_grid"] = mass;
    } else {
        std::vector<ScalarFun> obs;
        const Index nd = s.ambient_start.size();
        for (Index d = 0; d < nd; ++d)
            obs.push_back([d](const Vec& q) { return q[d]; });
        obs.push_back([](const Vec& q) { return axial_harmonic_l1(q[0]); });
        obs.push_back([](const Vec& q) { return axial_harmonic_l2(q[0]); });
        const ObservableStats st =
            sde_observable_stats(s.closed_ambient, s.ambient_start, ec, obs);
        json names = json::array();
        for (Index d = 0; d < nd; ++d) names.push_back("q_" + std::to_string(d));
        names.push_back("axial_l1");
        names.push_back("axial_l2");
        j["observables"] = names;
        j["mean"] = st.mean;
        j["stderr"] = st.se;
        j["n_aborted"] = st.n_aborted;
    }
    return j;
}

inline SdeSpec primary_process(const Scenario& s) {
    return s.kind == ScenarioKind::gauge_bundle
               ? make_ambient_sde(s.bundle.metric)
               : s.closed_ambient;
}

inline std::string export_paths_text(const ResolvedRun& run,
                                     const std::string& format) {
    const Scenario& s = run.scenario;
    const SdeSpec spec = primary_process(s);
    const SimulationParams params;
    IntegratorConfig cfg;
    cfg.h = run.config.h;
    cfg.seed = run.config.seed;
    cfg.max_residual = 0.1;

    std::ostringstream out;
    bool header_written = false;
    for (long pid = 0; pid < run.config.n_paths; ++pid) {
        const Trajectory tr =
            integrate(spec, s.ambient_start, run.config.horizon, cfg, params,
                      static_cast<std::uint64_t>(pid));
        if (format == "csv") {
            if (!header_written) {
                out << "path,";
                std::istringstream head(trajectory_csv(tr));
                std::string line;
                std::getline(head, line);
                out << line << "\n";
                header_written = true;
            }
            std::istringstream body(trajectory_csv(tr));
            std::string line;
            std::getline(body, line);  // drop the per-trajectory header
            while (std::getline(body, line))
                out << pid << "," << line << "\n";
        } else {
            std::istringstream body(trajectory_jsonl(tr));
            std::string line;
            while (std::getline(body, line)) {
                json rec = json::parse(line);
                json tagged;
                tagged["path"] = pid;
                for (auto& item : rec.items()) tagged[item.key()] = item.value();
                out << tagged.dump() << "\n";
            }
        }
    }
    return out.str();
}

}  // namespace orbitdiff
