#pragma once
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "group.hpp"
#include "metric.hpp"
#include "numdiff.hpp"
#include "types.hpp"

namespace orbitdiff {

// one chart of a manifold with a free isometric group action and a gauge fix:
// the action map, the phase function cut out by the gauge, the Killing fields
// of the action, a parametrization of the gauge slice, and the base projection
struct GaugeBundle {
    std::string name;
    Index np = 0;   // chart dimension
    Index ng = 0;   // fiber (group) dimension
    Index nx = 0;   // base dimension, np - ng
    GroupModel group;
    MetricField metric;
    std::function<Vec(const Vec&, const Vec&)> act;   // (chart point, group element)
    std::function<Vec(const Vec&)> gauge_phase;       // chi: chart -> R^{ng}, zero on the slice
    std::function<Mat(const Vec&)> killing;           // np x ng generator fields
    std::function<Vec(const Vec&)> param;             // base chart -> point on the slice
    std::function<Vec(const Vec&)> base_coords;       // chart point -> base chart
};

// pointwise linear algebra of the gauge fixing at a chart point
struct PointGeometry {
    Vec q;
    Mat g, g_inv;    // metric and inverse, np x np
    Mat k;           // Killing fields, np x ng
    Mat chi_jac;     // phase Jacobian, ng x np
    Mat fp;          // gauge response chi_jac * K (Faddeev-Popov matrix), ng x ng
    Mat lambda;      // fp^{-1} chi_jac, ng x np
    Mat n;           // oblique slice projector I - K lambda
    Mat gamma;       // fiber metric K^T G K, ng x ng
    Mat p_perp;      // metric-orthogonal complement of the phase gradients
    Mat pi;          // horizontal projector I - K gamma^{-1} K^T G
    Mat g_h;         // horizontal metric G - G K gamma^{-1} K^T G
    Mat m;           // slice diffusion matrix N G^{-1} N^T
};

inline PointGeometry point_geometry(const GaugeBundle& b, const Vec& q,
                                    double chi_step = 1e-6) {
    PointGeometry p;
    p.q = q;
    p.g = b.metric.metric(q);
    p.g_inv = b.metric.inverse(q);
    p.k = b.killing(q);
    p.chi_jac = jacobian(b.gauge_phase, q, chi_step);
    p.fp = p.chi_jac * p.k;
    Eigen::FullPivLU<Mat> fp_lu(p.fp);
    if (!fp_lu.isInvertible())
        throw NumericalError("gauge fixing degenerate: singular response matrix");
    p.lambda = fp_lu.solve(p.chi_jac);
    const Mat id = Mat::Identity(b.np, b.np);
    p.n = id - p.k * p.lambda;
    p.gamma = p.k.transpose() * p.g * p.k;
    const Mat s = p.chi_jac * p.g_inv * p.chi_jac.transpose();
    p.p_perp = id - p.g_inv * p.chi_jac.transpose() * s.ldlt().solve(p.chi_jac);
    const Mat gk = p.g * p.k;
    const Mat gam_kg = p.gamma.ldlt().solve(gk.transpose());
    p.pi = id - p.k * gam_kg;
    p.g_h = p.g - gk * gam_kg;
    p.m = p.n * p.g_inv * p.n.transpose();
    return p;
}

// point geometry on the slice plus the slice tangent frame and induced metric
struct SurfaceGeometry {
    Vec x;
    PointGeometry point;
    Mat q_x;   // slice tangent frame dQ*/dx, np x nx
    Mat h;     // induced horizontal metric Q*^T G^H Q*, nx x nx
};

inline SurfaceGeometry surface_geometry(const GaugeBundle& b, const Vec& x) {
    SurfaceGeometry s;
    s.x = x;
    s.point = point_geometry(b, b.param(x));
    s.q_x = jacobian(b.param, x, 1e-6);
    s.h = s.q_x.transpose() * s.point.g_h * s.q_x;
    return s;
}

inline double gauge_response_det(const PointGeometry& p) { return p.fp.determinant(); }

// ---------------------------------------------------------------------------
// adapted (slice + fiber) frame metric and its degenerate-block calculus

// frame [P_perp | K ubar]: rank-np metric block of size np + ng
inline Mat adapted_metric(const PointGeometry& p, const Mat& ubar) {
    const Index np = p.g.rows(), ng = p.k.cols();
    const Mat ku = p.k * ubar;
    Mat gt(np + ng, np + ng);
    gt.topLeftCorner(np, np) = p.p_perp.transpose() * p.g * p.p_perp;
    gt.topRightCorner(np, ng) = p.p_perp.transpose() * p.g * ku;
    gt.bottomLeftCorner(ng, np) = gt.topRightCorner(np, ng).transpose();
    gt.bottomRightCorner(ng, ng) = ubar.transpose() * p.gamma * ubar;
    return gt;
}

// block pseudoinverse; the product with adapted_metric is blockdiag(P_perp, I)
inline Mat adapted_pseudo_inverse(const PointGeometry& p, const Mat& vbar) {
    const Index np = p.g.rows(), ng = p.k.cols();
    const Mat lv = vbar * p.lambda;
    Mat gti(np + ng, np + ng);
    gti.topLeftCorner(np, np) = p.m;
    gti.topRightCorner(np, ng) = p.n * p.g_inv * lv.transpose();
    gti.bottomLeftCorner(ng, np) = gti.topRightCorner(np, ng).transpose();
    gti.bottomRightCorner(ng, ng) = lv * p.g_inv * lv.transpose();
    return gti;
}

inline double adapted_pseudo_det(const PointGeometry& p, const Mat& ubar) {
    return pseudo_det(adapted_metric(p, ubar), p.g.rows());
}

// closed form of the rank-np pseudo-determinant of the adapted metric
inline double adapted_pseudo_det_closed(const PointGeometry& p, const Mat& ubar) {
    const Index np = p.g.rows(), ng = p.k.cols();
    const Mat pp = p.p_perp * p.p_perp.transpose();
    const double gram = pseudo_det(pp, np - ng);
    const double fp_det = p.fp.determinant();
    const double u_det = ubar.determinant();
    const Mat cc = p.chi_jac * p.chi_jac.transpose();
    return p.g.determinant() * gram * fp_det * fp_det * u_det * u_det
           / cc.determinant();
}

// nondegenerate metric in slice-chart + fiber coordinates; its determinant
// factorizes as det(h) det(gamma) det(ubar)^2
inline Mat adapted_coords_metric(const SurfaceGeometry& s, const Mat& ubar) {
    const Index nx = s.q_x.cols(), ng = s.point.k.cols();
    const PointGeometry& p = s.point;
    const Mat ku = p.k * ubar;
    Mat mad(nx + ng, nx + ng);
    mad.topLeftCorner(nx, nx) = s.q_x.transpose() * p.g * s.q_x;
    mad.topRightCorner(nx, ng) = s.q_x.transpose() * p.g * ku;
    mad.bottomLeftCorner(ng, nx) = mad.topRightCorner(nx, ng).transpose();
    mad.bottomRightCorner(ng, ng) = ubar.transpose() * p.gamma * ubar;
    return mad;
}

// ---------------------------------------------------------------------------
// connection and drift ingredients

// Christoffel symbols of the (degenerate) horizontal metric, out[b](c,d);
// the vertical ambiguity is resolved by the pseudoinverse, and every
// contraction used downstream is insensitive to that resolution
inline Tensor3 horizontal_christoffels(const GaugeBundle& b, const PointGeometry& p,
                                       double d = 1e-5,
                                       DiffAccuracy acc = DiffAccuracy::standard) {
    auto gh_fun = [&b](const Vec& v) -> Mat {
        const Mat g = b.metric.metric(v);
        const Mat k = b.killing(v);
        const Mat gk = g * k;
        const Mat gam = k.transpose() * gk;
        return g - gk * gam.ldlt().solve(gk.transpose());
    };
    const Tensor3 dgh = acc == DiffAccuracy::high
        ? matrix_derivative_richardson(gh_fun, p.q)
        : matrix_derivative(gh_fun, p.q, d);
    const Index np = b.np;
    const Mat ghp = pseudo_inverse(p.g_h, 1e-11);
    Tensor3 hg(static_cast<size_t>(np), Mat::Zero(np, np));
    for (Index c = 0; c < np; ++c)
        for (Index e = 0; e < np; ++e) {
            double rhs;
            for (Index a = 0; a < np; ++a) {
                rhs = 0.5 * (dgh[static_cast<size_t>(e)](a, c)
                             + dgh[static_cast<size_t>(c)](a, e)
                             - dgh[static_cast<size_t>(a)](c, e));
                for (Index bb = 0; bb < np; ++bb)
                    hg[static_cast<size_t>(bb)](c, e) += ghp(bb, a) * rhs;
            }
        }
    return hg;
}

// mean-curvature drift of the orbits, 1/2 M gamma^{ab} G (nabla_{K_a} K_b);
// vanishes when the orbit volume is constant over the base
inline Vec orbit_volume_drift(const GaugeBundle& b, const PointGeometry& p,
                              double d = 1e-6) {
    const Index np = b.np, ng = b.ng;
    const Tensor3 dk = matrix_derivative(b.killing, p.q, d);
    const Tensor3 gam = b.metric.christoffels(p.q, d);
    const Mat gamma_inv = p.gamma.inverse();
    Vec omega = Vec::Zero(np);
    for (Index al = 0; al < ng; ++al)
        for (Index be = 0; be < ng; ++be) {
            Vec nkk = Vec::Zero(np);
            for (Index c = 0; c < np; ++c) {
                double s = 0.0;
                for (Index pp = 0; pp < np; ++pp) {
                    s += p.k(pp, al) * dk[static_cast<size_t>(pp)](c, be);
                    for (Index bb = 0; bb < np; ++bb)
                        s += gam[static_cast<size_t>(c)](pp, bb) * p.k(pp, al) * p.k(bb, be);
                }
                nkk[c] = s;
            }
            omega += gamma_inv(al, be) * (p.g * nkk);
        }
    return 0.5 * p.m * omega;
}

// curvature drift of the gauge slice from its second fundamental form,
// expressed in the base chart of the slice parametrization
inline Vec slice_curvature_drift(const GaugeBundle& b, const SurfaceGeometry& s,
                                 DiffAccuracy acc = DiffAccuracy::standard) {
    const PointGeometry& p = s.point;
    const Index np = b.np, nx = b.nx;
    const Tensor3 hg = horizontal_christoffels(b, p, 1e-5, acc);
    const Tensor3 qxx = hessian_richardson(b.param, s.x);
    const Mat h_inv = s.h.inverse();
    Vec out = Vec::Zero(np);
    for (Index a = 0; a < np; ++a) {
        double acc = 0.0;
        for (Index i = 0; i < nx; ++i)
            for (Index j = 0; j < nx; ++j) {
                double inner = qxx[static_cast<size_t>(a)](i, j);
                for (Index pp = 0; pp < np; ++pp)
                    for (Index l = 0; l < np; ++l)
                        inner += hg[static_cast<size_t>(a)](pp, l) * s.q_x(pp, i) * s.q_x(l, j);
                acc += h_inv(i, j) * inner;
            }
        out[a] = acc;
    }
    return 0.5 * ((Mat::Identity(np, np) - p.n) * out);
}

// drift and noise coefficients of the slice + fiber system at unit intensity
struct ReducedCoefficients {
    Vec base_drift;     // np components: full slice drift, volume term included
    Vec fiber_drift;    // ng components, in fiber coordinates
    Vec volume_drift;   // the orbit-volume part alone; base_drift + volume_drift
                        // is the drift of the volume-blind reduced process
};

// assembled first-order generator coefficients of the projected process:
//   base:  -1/2 N HGamma : M  +  1/2 (dN) : M  -  orbit volume drift
//   fiber: -1/2 (T1 + T2 - T3) from the phase transport of the connection
inline ReducedCoefficients reduced_coefficients(const GaugeBundle& b,
                                                const PointGeometry& p,
                                                DiffAccuracy acc = DiffAccuracy::standard) {
    const Vec& q = p.q;
    const Index np = b.np, ng = b.ng;
    const bool high = acc == DiffAccuracy::high;

    // stacked [N; Lambda] so one difference pass serves both derivative terms
    auto n_lam_fun = [&b, high](const Vec& v) -> Mat {
        const Mat k = b.killing(v);
        const Mat cj = high ? jacobian_richardson(b.gauge_phase, v)
                            : jacobian(b.gauge_phase, v, 1e-6);
        const Mat fp = cj * k;
        const Mat lam = fp.partialPivLu().solve(cj);
        Mat out(k.rows() + lam.rows(), k.rows());
        out.topRows(k.rows()) = Mat::Identity(k.rows(), k.rows()) - k * lam;
        out.bottomRows(lam.rows()) = lam;
        return out;
    };
    const Tensor3 dnl = high ? matrix_derivative_richardson(n_lam_fun, q)
                             : matrix_derivative(n_lam_fun, q, 1e-5);

    const Tensor3 hg = horizontal_christoffels(b, p, 1e-5, acc);
    Vec base = Vec::Zero(np);
    for (Index a = 0; a < np; ++a) {
        double acc = 0.0;
        for (Index c = 0; c < np; ++c)
            for (Index dd = 0; dd < np; ++dd) {
                for (Index e = 0; e < np; ++e)
                    acc -= 0.5 * p.n(a, e) * hg[static_cast<size_t>(e)](c, dd) * p.m(c, dd);
            }
        for (Index mm = 0; mm < np; ++mm)
            for (Index l = 0; l < np; ++l)
                acc += 0.5 * dnl[static_cast<size_t>(mm)](a, l) * p.m(l, mm);
        base[a] = acc;
    }
    const Vec volume = orbit_volume_drift(b, p);
    base -= volume;

    const MatFun g_fun = [&b](const Vec& v) { return b.metric.metric(v); };
    const Tensor3 dg = high ? matrix_derivative_richardson(g_fun, q)
                            : matrix_derivative(g_fun, q, 1e-6);
    const Tensor3 dk = high ? matrix_derivative_richardson(b.killing, q)
                            : matrix_derivative(b.killing, q, 1e-6);
    Vec fiber = Vec::Zero(ng);
    for (Index be = 0; be < ng; ++be) {
        double t1 = 0.0, t2 = 0.0, t3 = 0.0;
        for (Index r = 0; r < np; ++r)
            for (Index ss = 0; ss < np; ++ss) {
                // Gamma-tilde: Christoffels of G with horizontally projected derivatives
                double gt = 0.0;
                for (Index bb = 0; bb < np; ++bb) {
                    double ge = 0.0;
                    for (Index e = 0; e < np; ++e) {
                        double v = 0.0;
                        for (Index dd = 0; dd < np; ++dd)
                            v += p.n(dd, r) * dg[static_cast<size_t>(dd)](e, ss)
                                 + p.n(dd, ss) * dg[static_cast<size_t>(dd)](e, r)
                                 - p.n(dd, e) * dg[static_cast<size_t>(dd)](r, ss);
                        ge += p.g_inv(bb, e) * v;
                    }
                    gt += 0.5 * ge * p.lambda(be, bb);
                }
                t1 += p.g_inv(r, ss) * gt;
            }
        for (Index r = 0; r < np; ++r)
            for (Index pp = 0; pp < np; ++pp)
                for (Index si = 0; si < ng; ++si)
                    for (Index bb = 0; bb < np; ++bb)
                        t2 += p.g_inv(r, pp) * p.lambda(si, r)
                              * dk[static_cast<size_t>(pp)](bb, si) * p.lambda(be, bb);
        for (Index c = 0; c < np; ++c)
            for (Index a = 0; a < np; ++a)
                for (Index mm = 0; mm < np; ++mm)
                    t3 += p.g_inv(c, a) * p.n(mm, c)
                          * dnl[static_cast<size_t>(mm)](np + be, a);
        fiber[be] = -0.5 * (t1 + t2 - t3);
    }

    ReducedCoefficients out;
    out.base_drift = base;
    out.fiber_drift = fiber;
    out.volume_drift = volume;
    return out;
}

inline ReducedCoefficients reduced_coefficients(const GaugeBundle& b, const Vec& q,
                                                DiffAccuracy acc = DiffAccuracy::standard) {
    return reduced_coefficients(b, point_geometry(b, q), acc);
}

inline Vec base_drift(const GaugeBundle& b, const Vec& q) {
    return reduced_coefficients(b, q).base_drift;
}

// the same drift assembled straight from the Ito transform of the ambient
// equation through the projection map onto the slice: the chain-rule image of
// the ambient drift plus the contraction of the projection's second
// derivative with the ambient covariance; requires a one-dimensional fiber
// (higher-dimensional groups add a right-translation curvature term)
inline Vec projected_ambient_drift(const GaugeBundle& b, const Vec& q) {
    if (b.ng != 1)
        throw NumericalError("projected ambient drift needs a one-dimensional fiber");
    const Index np = b.np, ng = b.ng;
    const PointGeometry p = point_geometry(b, q);
    const Tensor3 dk = matrix_derivative_richardson(b.killing, q);
    const MatFun weighted_inverse = [&b](const Vec& v) {
        const double sg = std::sqrt(b.metric.metric(v).determinant());
        return Mat(sg * b.metric.inverse(v));
    };
    const Tensor3 dw = matrix_derivative_richardson(weighted_inverse, q);
    const double sg = std::sqrt(b.metric.metric(q).determinant());
    Vec ambient = Vec::Zero(np);
    for (Index a = 0; a < np; ++a)
        for (Index bb = 0; bb < np; ++bb)
            ambient[a] += 0.5 * dw[static_cast<size_t>(bb)](a, bb) / sg;
    Vec slip = Vec::Zero(np);
    for (Index a = 0; a < np; ++a)
        for (Index e = 0; e < np; ++e)
            for (Index c = 0; c < np; ++c)
                for (Index mu = 0; mu < ng; ++mu) {
                    slip[a] -= p.g_inv(e, c) * dk[static_cast<size_t>(e)](a, mu)
                               * p.lambda(mu, c);
                    for (Index bb = 0; bb < np; ++bb)
                        slip[a] -= p.g_inv(e, c) * dk[static_cast<size_t>(bb)](a, mu)
                                   * p.n(bb, c) * p.lambda(mu, e);
                }
    Vec phase_hess(ng);
    const Tensor3 h2 = hessian_richardson(b.gauge_phase, q);
    for (Index al = 0; al < ng; ++al)
        phase_hess[al] = h2[static_cast<size_t>(al)].cwiseProduct(p.m).sum();
    return Vec(p.n * ambient + 0.5 * p.n * slip
               - 0.5 * p.k * p.fp.inverse() * phase_hess);
}

// the same drift once more, in its curvature display: horizontal-christoffel
// contraction with the slice mass, plus the mean curvature of the slice,
// minus the orbit volume term
inline Vec curvature_display_drift(const GaugeBundle& b, const Vec& x) {
    const SurfaceGeometry s = surface_geometry(b, x);
    const PointGeometry& p = s.point;
    const Tensor3 hg = horizontal_christoffels(b, p, 1e-5, DiffAccuracy::high);
    Vec out = slice_curvature_drift(b, s, DiffAccuracy::high)
              - orbit_volume_drift(b, p);
    for (Index a = 0; a < b.np; ++a)
        out[a] -= 0.5 * hg[static_cast<size_t>(a)].cwiseProduct(p.m).sum();
    return out;
}

inline Vec group_drift(const GaugeBundle& b, const Vec& q) {
    return reduced_coefficients(b, q).fiber_drift;
}

// ---------------------------------------------------------------------------
// orbit decomposition

struct Decomposition {
    Vec slice_point;    // chart point with zero phase
    Vec fiber_coords;   // algebra coordinates t with q = act(slice_point, exp(t))
    int iterations = 0;
};

// closed-form slice projection for equivariant phase functions
inline Vec phase_projection(const GaugeBundle& b, const Vec& q) {
    return b.act(q, b.group.exp(-b.gauge_phase(q)));
}

// Newton iteration on the fiber coordinates; one step is exact when the
// phase is strictly equivariant, more are needed near chart distortions
inline Decomposition decompose(const GaugeBundle& b, const Vec& q,
                               double tol = 1e-12, int max_iter = 50) {
    Decomposition d;
    Vec t = Vec::Zero(b.ng);
    Vec w = q;
    for (int it = 0; it < max_iter; ++it) {
        w = b.act(q, b.group.inverse(b.group.exp(t)));
        const Vec r = b.gauge_phase(w);
        d.iterations = it + 1;
        if (r.cwiseAbs().maxCoeff() < tol) {
            d.slice_point = w;
            d.fiber_coords = t;
            return d;
        }
        const Mat k = b.killing(w);
        const Mat cj = jacobian(b.gauge_phase, w, 1e-6);
        const Mat fp = cj * k;
        t += fp.partialPivLu().solve(r);
    }
    throw ConvergenceError("orbit decomposition did not converge");
}

// ---------------------------------------------------------------------------
// oracle drift of a transformed process: for smooth f and the ambient
// Brownian motion of the metric, the drift of f(eta_t) at unit intensity
inline Vec ito_transform_drift(const MetricField& mf, const VecFun& f, const Vec& q) {
    const Mat jf = jacobian(f, q, 1e-6);
    const Tensor3 h = hessian_richardson(f, q);
    const Mat gi = mf.inverse(q);
    Vec out = jf * mf.bm_drift(q);
    for (Index a = 0; a < out.size(); ++a)
        out[a] += 0.5 * (h[static_cast<size_t>(a)].cwiseProduct(gi)).sum();
    return out;
}

// gauge-fixed volume density on the slice in base coordinates:
// det(FP) / sqrt(det(chi G^{-1} chi^T)) * sqrt(det(Q_x^T G Q_x))
inline double slice_volume_density(const GaugeBundle& b, const Vec& x) {
    const SurfaceGeometry s = surface_geometry(b, x);
    const PointGeometry& p = s.point;
    const Mat ss = p.chi_jac * p.g_inv * p.chi_jac.transpose();
    const Mat a = s.q_x.transpose() * p.g * s.q_x;
    return p.fp.determinant() / std::sqrt(ss.determinant()) * std::sqrt(a.determinant());
}

} // namespace orbitdiff
