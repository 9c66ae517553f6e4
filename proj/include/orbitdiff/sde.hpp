#pragma once
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "bundle.hpp"
#include "metric.hpp"
#include "numdiff.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace orbitdiff {

// time-homogeneous Ito system dX = b(X)dt + sigma(X)dW with an optional
// constraint surface and chart-maintenance hooks
struct SdeSpec {
    Index state_dim = 0;
    Index noise_dim = 0;
    std::function<Vec(const Vec&, const SimulationParams&)> drift;
    std::function<Mat(const Vec&, const SimulationParams&)> diffusion;
    std::function<Vec(const Vec&)> constraint;  // residual, zero on the admissible set
    std::function<Vec(const Vec&)> project;     // restore the constraint after a step
    std::function<Vec(const Vec&)> stabilize;   // chart swap keeping coordinates tame
};

enum class ProjectionPolicy { none, renormalize_constraint };

struct IntegratorConfig {
    double h = 1e-3;
    ProjectionPolicy policy = ProjectionPolicy::renormalize_constraint;
    double max_residual = 1e-6;  // constraint norm beyond which the step aborts
    std::uint64_t seed = 0;
};

// one Wiener increment over a step, with its seed lineage
struct WienerIncrement {
    Vec values;  // each component Normal(0, h)
    double h = 0.0;
    std::uint64_t path_id = 0;
    std::int64_t step_index = 0;
};

inline WienerIncrement wiener_increment(GaussianStream& rng, Index noise_dim, double h,
                                        std::uint64_t path_id = 0,
                                        std::int64_t step_index = 0) {
    WienerIncrement dw;
    dw.values = std::sqrt(h) * rng.normal_vec(noise_dim);
    dw.h = h;
    dw.path_id = path_id;
    dw.step_index = step_index;
    return dw;
}

// raw Euler--Maruyama update without constraint handling
inline Vec euler_maruyama_step(const SdeSpec& spec, const Vec& state,
                               const WienerIncrement& dw, const SimulationParams& params) {
    return state + spec.drift(state, params) * dw.h
           + spec.diffusion(state, params) * dw.values;
}

// policy-applying step: project back to the constraint set when requested,
// abort when the state leaves the chart or the residual exceeds the bound
inline Vec integrator_step(const SdeSpec& spec, const Vec& state, const WienerIncrement& dw,
                           const IntegratorConfig& cfg, const SimulationParams& params) {
    Vec next = euler_maruyama_step(spec, state, dw, params);
    if (!next.allFinite()) throw DomainExitError("state left the chart domain");
    if (spec.constraint) {
        if (cfg.policy == ProjectionPolicy::renormalize_constraint && spec.project)
            next = spec.project(next);
        if (spec.constraint(next).norm() > cfg.max_residual)
            throw ConstraintBlowupError("constraint residual exceeds configured bound");
    }
    if (spec.stabilize) next = spec.stabilize(next);
    return next;
}

// full record of one simulated path
struct Trajectory {
    std::vector<double> times;
    std::vector<Vec> states;
    std::vector<double> log_weights;  // accumulated reweighting log-factor
    std::vector<double> residuals;    // constraint residual norm, 0 when unconstrained
};

// per-step weight hook, evaluated at the left point; returns a log-weight
// increment accumulated along the path
using StepObserver =
    std::function<double(const Vec& before, const Vec& after, const WienerIncrement& dw)>;

using StopPredicate = std::function<bool(const Vec&)>;

inline Trajectory integrate(const SdeSpec& spec, const Vec& start, double horizon,
                            const IntegratorConfig& cfg, const SimulationParams& params,
                            std::uint64_t path_id = 0, const StepObserver& observer = {}) {
    const long n_steps = std::lround(horizon / cfg.h);
    GaussianStream rng(cfg.seed, path_id);
    auto residual = [&spec](const Vec& s) {
        return spec.constraint ? spec.constraint(s).norm() : 0.0;
    };
    Trajectory out;
    out.times.reserve(n_steps + 1);
    out.states.reserve(n_steps + 1);
    out.log_weights.reserve(n_steps + 1);
    out.residuals.reserve(n_steps + 1);
    Vec state = start;
    double lw = 0.0;
    out.times.push_back(0.0);
    out.states.push_back(state);
    out.log_weights.push_back(lw);
    out.residuals.push_back(residual(state));
    for (long k = 0; k < n_steps; ++k) {
        const WienerIncrement dw =
            wiener_increment(rng, spec.noise_dim, cfg.h, path_id, k);
        const Vec next = integrator_step(spec, state, dw, cfg, params);
        if (observer) lw += observer(state, next, dw);
        state = next;
        out.times.push_back(static_cast<double>(k + 1) * cfg.h);
        out.states.push_back(state);
        out.log_weights.push_back(lw);
        out.residuals.push_back(residual(state));
    }
    return out;
}

// terminal summary of one path, for ensemble estimation; never throws, so
// a degenerate path poisons one sample instead of the whole ensemble
struct TerminalResult {
    Vec state;
    double log_weight = 0.0;
    bool stopped = false;  // stop predicate fired; state frozen at that moment
    bool aborted = false;  // left the domain or blew past the residual bound
    double max_residual = 0.0;
    long steps = 0;
};

inline TerminalResult run_to_horizon(const SdeSpec& spec, const Vec& start, double horizon,
                                     const IntegratorConfig& cfg,
                                     const SimulationParams& params,
                                     std::uint64_t path_id = 0,
                                     const StepObserver& observer = {},
                                     const StopPredicate& stop = {}) {
    const long n_steps = std::lround(horizon / cfg.h);
    GaussianStream rng(cfg.seed, path_id);
    const bool renorm = cfg.policy == ProjectionPolicy::renormalize_constraint
                        && static_cast<bool>(spec.project);
    TerminalResult out;
    out.state = start;
    for (long k = 0; k < n_steps; ++k) {
        if (stop && stop(out.state)) {
            out.stopped = true;
            break;
        }
        const WienerIncrement dw =
            wiener_increment(rng, spec.noise_dim, cfg.h, path_id, k);
        Vec next = out.state + spec.drift(out.state, params) * cfg.h
                   + spec.diffusion(out.state, params) * dw.values;
        if (!next.allFinite()) {
            out.aborted = true;
            break;
        }
        if (spec.constraint) {
            if (renorm) next = spec.project(next);
            const double r = spec.constraint(next).norm();
            out.max_residual = std::max(out.max_residual, r);
            if (r > cfg.max_residual) {
                out.aborted = true;
                break;
            }
        }
        if (spec.stabilize) next = spec.stabilize(next);
        if (observer) out.log_weight += observer(out.state, next, dw);
        out.state = next;
        ++out.steps;
    }
    return out;
}

// ---------------------------------------------------------------------------
// system factories

// ambient diffusion: divergence-form drift with inverse-root noise
inline SdeSpec make_ambient_sde(const MetricField& metric) {
    SdeSpec s;
    s.state_dim = metric.dim();
    s.noise_dim = metric.dim();
    s.drift = [metric](const Vec& q, const SimulationParams& p) {
        return Vec(drift_scale(p) * metric.bm_drift_divergence_form(q));
    };
    s.diffusion = [metric](const Vec& q, const SimulationParams& p) {
        return Mat(noise_scale(p) * metric.noise_factor(q));
    };
    return s;
}

// gauge-surface process: projected drift and noise, constrained to {chi = 0}
inline SdeSpec make_sigma_sde(const GaugeBundle& bundle) {
    SdeSpec s;
    s.state_dim = bundle.np;
    s.noise_dim = bundle.np;
    s.drift = [bundle](const Vec& q, const SimulationParams& p) {
        return Vec(drift_scale(p) * reduced_coefficients(bundle, q).base_drift);
    };
    s.diffusion = [bundle](const Vec& q, const SimulationParams& p) {
        const PointGeometry pg = point_geometry(bundle, q);
        return Mat(noise_scale(p) * pg.n * bundle.metric.noise_factor(q));
    };
    s.constraint = [bundle](const Vec& q) { return bundle.gauge_phase(q); };
    s.project = [bundle](const Vec& q) { return decompose(bundle, q).slice_point; };
    return s;
}

// volume-blind reduced process: the gauge-surface drift with the orbit-volume
// term removed; reweighting restores the removed term in expectation
inline SdeSpec make_reduced_sde(const GaugeBundle& bundle) {
    SdeSpec s = make_sigma_sde(bundle);
    s.drift = [bundle](const Vec& q, const SimulationParams& p) {
        const ReducedCoefficients rc = reduced_coefficients(bundle, q);
        return Vec(drift_scale(p) * (rc.base_drift + rc.volume_drift));
    };
    return s;
}

// joint surface + phase process; both blocks are driven by one increment
inline SdeSpec make_group_sde(const GaugeBundle& bundle) {
    const Index np = bundle.np;
    const Index ne = bundle.group.elem_size;
    SdeSpec s;
    s.state_dim = np + ne;
    s.noise_dim = np;
    s.drift = [bundle, np, ne](const Vec& u, const SimulationParams& p) {
        const ReducedCoefficients rc = reduced_coefficients(bundle, u.head(np));
        Vec out(np + ne);
        out.head(np) = rc.base_drift;
        out.tail(ne) = bundle.group.vbar(u.tail(ne)) * rc.fiber_drift;
        return Vec(drift_scale(p) * out);
    };
    s.diffusion = [bundle, np, ne](const Vec& u, const SimulationParams& p) {
        const PointGeometry pg = point_geometry(bundle, u.head(np));
        const Mat xf = bundle.metric.noise_factor(u.head(np));
        Mat out(np + ne, np);
        out.topRows(np) = pg.n * xf;
        out.bottomRows(ne) = bundle.group.vbar(u.tail(ne)) * pg.lambda * xf;
        return Mat(noise_scale(p) * out);
    };
    s.constraint = [bundle, np](const Vec& u) { return bundle.gauge_phase(u.head(np)); };
    s.project = [bundle, np](const Vec& u) {
        Vec out = u;
        out.head(np) = decompose(bundle, u.head(np)).slice_point;
        return out;
    };
    return s;
}

// ambient-coordinate description of intrinsic diffusion on an embedded
// submanifold: tangent-projected noise plus the mean-curvature drift
inline SdeSpec make_submanifold_ambient_sde(const VecFun& embedding,
                                            const VecFun& chart_inverse,
                                            const MetricField& ambient) {
    const Index np = ambient.dim();
    SdeSpec s;
    s.state_dim = np;
    s.noise_dim = np;
    s.drift = [embedding, chart_inverse, ambient, np](const Vec& state,
                                                      const SimulationParams& p) {
        const Vec x = chart_inverse(state);
        const Vec q = embedding(x);
        const Mat qx = jacobian(embedding, x, 1e-6);
        const Tensor3 qxx = hessian_richardson(embedding, x);
        const Index nx = qx.cols();
        const Mat g = ambient.metric(q);
        const Mat h = qx.transpose() * g * qx;
        const Mat hi = h.ldlt().solve(Mat::Identity(nx, nx));
        const Mat n = qx * hi * qx.transpose() * g;
        const Mat m = qx * hi * qx.transpose();
        const Tensor3 gam = ambient.christoffels(q);
        Vec a = Vec::Zero(np);
        for (Index aa = 0; aa < np; ++aa)
            a[aa] = -0.5 * m.cwiseProduct(gam[static_cast<size_t>(aa)]).sum();
        Vec trace_curv = Vec::Zero(np);
        for (Index bb = 0; bb < np; ++bb) {
            double acc = 0.0;
            for (Index i = 0; i < nx; ++i)
                for (Index j = 0; j < nx; ++j)
                    acc += hi(i, j) * (qxx[static_cast<size_t>(bb)](i, j)
                                       + qx.col(i).dot(gam[static_cast<size_t>(bb)]
                                                       * qx.col(j)));
            trace_curv[bb] = acc;
        }
        a += 0.5 * (Mat::Identity(np, np) - n) * trace_curv;
        return Vec(drift_scale(p) * a);
    };
    s.diffusion = [embedding, chart_inverse, ambient](const Vec& state,
                                                      const SimulationParams& p) {
        const Vec x = chart_inverse(state);
        const Vec q = embedding(x);
        const Mat qx = jacobian(embedding, x, 1e-6);
        const Mat g = ambient.metric(q);
        const Mat h = qx.transpose() * g * qx;
        const Mat hi = h.ldlt().solve(Mat::Identity(qx.cols(), qx.cols()));
        return Mat(noise_scale(p) * qx * hi * qx.transpose() * g
                   * ambient.noise_factor(q));
    };
    s.constraint = [embedding, chart_inverse](const Vec& q) {
        return Vec(q - embedding(chart_inverse(q)));
    };
    s.project = [embedding, chart_inverse](const Vec& q) {
        return embedding(chart_inverse(q));
    };
    return s;
}

} // namespace orbitdiff
