#pragma once
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "bundle.hpp"
#include "group.hpp"
#include "metric.hpp"
#include "sde.hpp"
#include "types.hpp"

namespace orbitdiff {

// ---------------------------------------------------------------------------
// chart maps for the 3-sphere with its circle fibration over the 2-sphere

// stereographic chart of S^3 from the antipode of the identity quaternion
inline Vec unstereo3(const Vec& u) {
    const double r2 = u.squaredNorm();
    Vec q(4);
    q << (1.0 - r2), 2.0 * u[0], 2.0 * u[1], 2.0 * u[2];
    return q / (1.0 + r2);
}

inline Vec stereo3(const Vec& q) { return q.tail(3) / (1.0 + q[0]); }

// stereographic chart of S^2; the first sphere component is the polar axis
inline Vec unstereo2(const Vec& x) {
    const double r2 = x.squaredNorm();
    Vec b(3);
    b << (1.0 - r2), 2.0 * x[0], 2.0 * x[1];
    return b / (1.0 + r2);
}

inline Vec stereo2(const Vec& b) { return b.tail(2) / (1.0 + b[0]); }

inline Vec quat_i_exp(double theta) {
    Vec q(4);
    q << std::cos(theta), std::sin(theta), 0.0, 0.0;
    return q;
}

inline Vec quat_conj(const Vec& a) {
    return (Vec(4) << a[0], -a[1], -a[2], -a[3]).finished();
}

// bundle projection pi(q) = q i q^{-1}, returned as the imaginary 3-vector
inline Vec hopf_base(const Vec& q) {
    static const Vec qi = (Vec(4) << 0, 1, 0, 0).finished();
    return detail::quat_mul(detail::quat_mul(q, qi), quat_conj(q)).tail(3);
}

// local section over the base chart: s(b) = normalize(1 - b i)
inline Vec hopf_section(const Vec& b) {
    static const Vec qi = (Vec(4) << 0, 1, 0, 0).finished();
    const Vec bq = (Vec(4) << 0, b[0], b[1], b[2]).finished();
    Vec s = (Vec(4) << 1, 0, 0, 0).finished() - detail::quat_mul(bq, qi);
    return s / s.norm();
}

// phase of q relative to the section through its base point
inline double hopf_phase(const Vec& q) {
    const Vec c = detail::quat_mul(quat_conj(hopf_section(hopf_base(q))), q);
    return std::atan2(c[1], c[0]);
}

// generator of the fiber rotation, pushed through the stereographic chart
inline Vec hopf_killing(const Vec& u) {
    static const Vec qi = (Vec(4) << 0, 1, 0, 0).finished();
    const Vec q = unstereo3(u);
    const Vec v = detail::quat_mul(q, qi);
    return Vec(v.tail(3) / (1.0 + q[0]) - q.tail(3) * (v[0] / ((1.0 + q[0]) * (1.0 + q[0]))));
}

// angle between the base point of q and the reference pole +i
inline double hopf_base_angle(const Vec& q) {
    const Vec b = hopf_base(q);
    return std::acos(std::min(1.0, std::max(-1.0, b[0])));
}

// ---------------------------------------------------------------------------
// cell grids on chart boxes

struct GridSpec {
    Vec lo, hi;
    std::vector<int> cells;

    Index dims() const { return lo.size(); }

    Index cell_count() const {
        Index n = 1;
        for (int c : cells) n *= c;
        return n;
    }

    // flat index of the containing cell, or -1 when outside the box
    Index locate(const Vec& x) const {
        Index flat = 0;
        for (Index d = 0; d < dims(); ++d) {
            if (x[d] < lo[d] || x[d] >= hi[d]) return -1;
            const double step = (hi[d] - lo[d]) / cells[static_cast<size_t>(d)];
            const Index i = static_cast<Index>((x[d] - lo[d]) / step);
            flat = flat * cells[static_cast<size_t>(d)]
                   + std::min<Index>(i, cells[static_cast<size_t>(d)] - 1);
        }
        return flat;
    }

    Vec cell_lo(Index flat) const {
        Vec out(dims());
        for (Index d = dims() - 1; d >= 0; --d) {
            const int n = cells[static_cast<size_t>(d)];
            const Index i = flat % n;
            flat /= n;
            out[d] = lo[d] + (hi[d] - lo[d]) / n * static_cast<double>(i);
        }
        return out;
    }

    Vec cell_hi(Index flat) const {
        Vec out = cell_lo(flat);
        for (Index d = 0; d < dims(); ++d)
            out[d] += (hi[d] - lo[d]) / cells[static_cast<size_t>(d)];
        return out;
    }

    Vec center(Index flat) const { return 0.5 * (cell_lo(flat) + cell_hi(flat)); }
};

// integral of a density over every cell by tensorized 5-point Gauss--Legendre
inline std::vector<double> cell_volumes(const GridSpec& g, const ScalarFun& density) {
    static const double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                    0.5384693101056831, 0.9061798459386640};
    static const double weights[5] = {0.2369268850561891, 0.4786286704993665,
                                      0.5688888888888889, 0.4786286704993665,
                                      0.2369268850561891};
    const Index nd = g.dims();
    const Index nc = g.cell_count();
    std::vector<double> out(static_cast<size_t>(nc), 0.0);
    Index pts = 1;
    for (Index d = 0; d < nd; ++d) pts *= 5;
    for (Index c = 0; c < nc; ++c) {
        const Vec clo = g.cell_lo(c), chi = g.cell_hi(c);
        double acc = 0.0;
        for (Index p = 0; p < pts; ++p) {
            Index rest = p;
            Vec x(nd);
            double w = 1.0;
            for (Index d = 0; d < nd; ++d) {
                const int i = static_cast<int>(rest % 5);
                rest /= 5;
                x[d] = 0.5 * (clo[d] + chi[d]) + 0.5 * (chi[d] - clo[d]) * nodes[i];
                w *= 0.5 * (chi[d] - clo[d]) * weights[i];
            }
            acc += w * density(x);
        }
        out[static_cast<size_t>(c)] = acc;
    }
    return out;
}

inline double wrap_angle(double v) {
    const double w = std::remainder(v, 2.0 * M_PI);
    return w >= M_PI ? w - 2.0 * M_PI : w;
}

// ---------------------------------------------------------------------------
// closed-form references

// cell average over [lo, hi] of the heat kernel wrapped onto the circle
inline double wrapped_gaussian_cell_average(double lo, double hi, double variance,
                                            int images = 8) {
    double tot = 0.0;
    for (int k = -images; k <= images; ++k) {
        const double a = (lo - 2.0 * M_PI * k) / std::sqrt(2.0 * variance);
        const double b = (hi - 2.0 * M_PI * k) / std::sqrt(2.0 * variance);
        tot += 0.5 * (std::erf(b) - std::erf(a));
    }
    return tot / (hi - lo);
}

inline double axial_harmonic_l1(double cos_theta) {
    return std::sqrt(3.0 / (4.0 * M_PI)) * cos_theta;
}

inline double axial_harmonic_l2(double cos_theta) {
    return std::sqrt(5.0 / (16.0 * M_PI)) * (3.0 * cos_theta * cos_theta - 1.0);
}

// ---------------------------------------------------------------------------
// scenarios

enum class ScenarioKind { gauge_bundle, embedded_manifold };

struct Scenario {
    std::string name;
    std::string summary;
    ScenarioKind kind = ScenarioKind::gauge_bundle;

    GaugeBundle bundle;  // gauge scenarios only

    // embedded-manifold scenarios only
    VecFun embedding;
    VecFun chart_inverse;
    MetricField ambient_metric;
    SdeSpec closed_ambient;  // hand-written ambient coefficients
    SdeSpec intrinsic;       // chart-coordinate process

    Vec ambient_start;
    Vec base_start;
    // true when the bundle geometry is invariant under chart translations, so
    // projectors and reduced coefficients may be evaluated once and reused
    bool homogeneous_geometry = false;
    double default_horizon = 0.5;
    double default_step = 1e-3;
    GridSpec base_grid;
    GridSpec ambient_grid;           // torus only: cells on the full chart
    StopPredicate kernel_stop_ambient;  // censoring for kernel runs
    StopPredicate kernel_stop_base;     // same censoring in base-chart coordinates
    std::vector<int> default_labels;    // irrep labels for kernel comparisons
    std::function<Vec(GaussianStream&)> sample_chart;  // random chart points
    std::function<Vec(GaussianStream&)> sample_base;   // random base-chart points
};

namespace detail {

inline MetricField hopf_metric(double eps0, double warp) {
    return MetricField(3, [eps0, warp](const Vec& u) -> Mat {
        const double r2 = u.squaredNorm();
        const double phi = 4.0 / ((1.0 + r2) * (1.0 + r2));
        Mat g = phi * Mat::Identity(3, 3);
        if (eps0 == 1.0 && warp == 0.0) return g;
        const Vec kflat = phi * hopf_killing(u);
        const Vec b = hopf_base(unstereo3(u));
        const double eps2 = eps0 * eps0 * (1.0 + warp * b[2]);
        g += (eps2 - 1.0) * kflat * kflat.transpose();
        return g;
    });
}

inline Scenario hopf_scenario(const std::string& name, const std::string& summary,
                              double eps0, double warp) {
    Scenario s;
    s.name = name;
    s.summary = summary;
    s.kind = ScenarioKind::gauge_bundle;

    GaugeBundle b;
    b.name = name;
    b.np = 3;
    b.ng = 1;
    b.nx = 2;
    b.group = circle_group();
    b.metric = hopf_metric(eps0, warp);
    b.act = [](const Vec& u, const Vec& a) {
        return stereo3(detail::quat_mul(unstereo3(u), quat_i_exp(a[0])));
    };
    b.gauge_phase = [](const Vec& u) {
        return Vec::Constant(1, hopf_phase(unstereo3(u)));
    };
    b.killing = [](const Vec& u) -> Mat { return hopf_killing(u); };
    b.param = [](const Vec& x) { return stereo3(hopf_section(unstereo2(x))); };
    b.base_coords = [](const Vec& u) { return stereo2(hopf_base(unstereo3(u))); };
    s.bundle = b;

    s.ambient_start = Vec::Zero(3);  // identity quaternion, base at the pole +i
    s.base_start = Vec::Zero(2);
    s.default_horizon = 0.1;
    s.default_step = 5e-4;

    s.base_grid.lo = Vec::Constant(2, -1.1);
    s.base_grid.hi = Vec::Constant(2, 1.1);
    s.base_grid.cells = {4, 4};

    const double max_base_angle = 2.29;
    const double max_base_radius = std::tan(0.5 * max_base_angle);
    s.kernel_stop_ambient = [max_base_angle](const Vec& u) {
        const Vec q = unstereo3(u);
        return hopf_base_angle(q) > max_base_angle || q[0] < -0.9;
    };
    s.kernel_stop_base = [max_base_radius](const Vec& x) {
        return x.norm() > max_base_radius;
    };
    s.default_labels = {0, 1};
    s.sample_chart = [](GaussianStream& rng) {
        Vec u(3);
        for (Index i = 0; i < 3; ++i) u[i] = 1.6 * rng.uniform() - 0.8;
        return u;
    };
    s.sample_base = [](GaussianStream& rng) {
        Vec x(2);
        for (Index i = 0; i < 2; ++i) x[i] = 1.6 * rng.uniform() - 0.8;
        return x;
    };
    return s;
}

} // namespace detail

inline Scenario flat_torus_scenario() {
    Scenario s;
    s.name = "flat-torus";
    s.summary = "flat 2-torus, circle acting by rotation of the second angle";
    s.kind = ScenarioKind::gauge_bundle;

    GaugeBundle b;
    b.name = s.name;
    b.np = 2;
    b.ng = 1;
    b.nx = 1;
    b.group = circle_group();
    b.metric = MetricField(2, [](const Vec&) { return Mat::Identity(2, 2); });
    b.act = [](const Vec& q, const Vec& a) {
        return (Vec(2) << q[0], q[1] + a[0]).finished();
    };
    b.gauge_phase = [](const Vec& q) { return Vec::Constant(1, q[1]); };
    b.killing = [](const Vec&) -> Mat { return (Mat(2, 1) << 0, 1).finished(); };
    b.param = [](const Vec& x) { return (Vec(2) << x[0], 0.0).finished(); };
    b.base_coords = [](const Vec& q) { return Vec::Constant(1, q[0]); };
    s.bundle = b;

    s.ambient_start = Vec::Zero(2);
    s.base_start = Vec::Zero(1);
    s.homogeneous_geometry = true;
    s.default_horizon = 0.5;
    s.default_step = 1e-3;

    s.base_grid.lo = Vec::Constant(1, -M_PI);
    s.base_grid.hi = Vec::Constant(1, M_PI);
    s.base_grid.cells = {16};
    s.ambient_grid.lo = Vec::Constant(2, -M_PI);
    s.ambient_grid.hi = Vec::Constant(2, M_PI);
    s.ambient_grid.cells = {8, 8};

    s.default_labels = {0, 1, 2};
    s.sample_chart = [](GaussianStream& rng) {
        Vec q(2);
        for (Index i = 0; i < 2; ++i) q[i] = 2.0 * M_PI * rng.uniform() - M_PI;
        return q;
    };
    s.sample_base = [](GaussianStream& rng) {
        return Vec::Constant(1, 2.0 * M_PI * rng.uniform() - M_PI);
    };
    return s;
}

inline Scenario hopf_round_scenario() {
    return detail::hopf_scenario("hopf-round",
                                 "round 3-sphere with its circle fibration", 1.0, 0.0);
}

inline Scenario hopf_berger_scenario() {
    return detail::hopf_scenario(
        "hopf-berger",
        "squashed 3-sphere, fiber scale 0.8 warped by 0.3 along the base", 0.8, 0.3);
}

inline Scenario hopf_berger_uniform_scenario() {
    return detail::hopf_scenario(
        "hopf-berger-uniform",
        "squashed 3-sphere with constant fiber scale 0.8 (geodesic orbits)", 0.8, 0.0);
}

inline Scenario sphere_ambient_scenario() {
    Scenario s;
    s.name = "sphere-ambient";
    s.summary = "unit 2-sphere in flat 3-space, ambient vs chart descriptions";
    s.kind = ScenarioKind::embedded_manifold;

    s.embedding = [](const Vec& x) { return unstereo2(x); };
    s.chart_inverse = [](const Vec& q) { return stereo2(q / q.norm()); };
    s.ambient_metric = MetricField(3, [](const Vec&) { return Mat::Identity(3, 3); });

    s.closed_ambient.state_dim = 3;
    s.closed_ambient.noise_dim = 3;
    s.closed_ambient.drift = [](const Vec& q, const SimulationParams& p) {
        return Vec(-drift_scale(p) * q);
    };
    s.closed_ambient.diffusion = [](const Vec& q, const SimulationParams& p) {
        return Mat(noise_scale(p) * (Mat::Identity(3, 3) - q * q.transpose()));
    };
    s.closed_ambient.constraint = [](const Vec& q) {
        return Vec::Constant(1, q.norm() - 1.0);
    };
    s.closed_ambient.project = [](const Vec& q) { return Vec(q / q.norm()); };

    // conformal chart (u, sheet): the 2-d conformal factor cancels in the
    // drift, leaving pure multiplicative noise; the sheet flips on inversion
    s.intrinsic.state_dim = 3;
    s.intrinsic.noise_dim = 2;
    s.intrinsic.drift = [](const Vec& state, const SimulationParams&) {
        return Vec(Vec::Zero(3));
    };
    s.intrinsic.diffusion = [](const Vec& state, const SimulationParams& p) {
        const double r2 = state.head(2).squaredNorm();
        Mat out = Mat::Zero(3, 2);
        out.topRows(2) = noise_scale(p) * 0.5 * (1.0 + r2) * Mat::Identity(2, 2);
        return out;
    };
    s.intrinsic.stabilize = [](const Vec& state) {
        const double r2 = state.head(2).squaredNorm();
        if (r2 <= 4.0) return state;
        Vec out(3);
        out.head(2) = state.head(2) / r2;
        out[2] = -state[2];
        return out;
    };

    s.ambient_start = (Vec(3) << 1, 0, 0).finished();  // chart origin, sheet +1
    s.base_start = (Vec(3) << 0, 0, 1).finished();     // (u, sheet)
    s.default_horizon = 0.5;
    s.default_step = 1e-3;

    s.sample_base = [](GaussianStream& rng) {
        Vec x(2);
        for (Index i = 0; i < 2; ++i) x[i] = 1.6 * rng.uniform() - 0.8;
        return x;
    };
    return s;
}

// sphere point of the two-sheet chart state (u, sheet)
inline Vec sphere_chart_point(const Vec& state) {
    const Vec b = unstereo2(state.head(2));
    Vec p(3);
    p[0] = state[2] * b[0];
    p.tail(2) = b.tail(2);
    return p;
}

inline std::vector<Scenario> builtin_scenarios() {
    return {flat_torus_scenario(), hopf_round_scenario(), hopf_berger_scenario(),
            hopf_berger_uniform_scenario(), sphere_ambient_scenario()};
}

inline Scenario find_scenario(const std::string& name) {
    for (Scenario& s : builtin_scenarios())
        if (s.name == name) return s;
    throw ConfigError("unknown scenario: " + name);
}

} // namespace orbitdiff
