#pragma once
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "rng.hpp"
#include "types.hpp"

namespace orbitdiff {

// one unitary irreducible representation: label, dimension, matrix map, and
// the algebra generators J_mu = dD(exp(t e_mu))/dt at t = 0 in closed form
struct Irrep {
    int label = 0;   // circle: winding number n; SU(2): twice the spin
    Index dim = 1;
    std::function<CMat(const Vec&)> matrix;
    std::vector<CMat> algebra;
};

// compact Lie group in a concrete parametrization: composition law, exp/log
// between the algebra R^{ng} and elements, translation-basis matrices for the
// chart in use, Haar sampling, and the irreducible representations
struct GroupModel {
    std::string name;
    Index ng = 1;           // algebra dimension
    Index elem_size = 1;    // storage size of one element
    Vec identity;
    std::function<Vec(const Vec&, const Vec&)> compose;
    std::function<Vec(const Vec&)> inverse;
    std::function<Vec(const Vec&)> exp;
    std::function<Vec(const Vec&)> log;
    std::function<Mat(const Vec&)> ubar;   // left-translation effect on the chart
    std::function<Mat(const Vec&)> vbar;   // right-translation effect on the chart
    std::function<Vec(GaussianStream&)> haar_sample;   // normalized Haar measure
    double fiber_volume = 2.0 * M_PI;      // unnormalized invariant volume
    std::vector<Irrep> irreps;

    // representation generators J_mu = dD(exp(t e_mu))/dt at t = 0
    std::vector<CMat> generators(const Irrep& rep, double d = 1e-6) const {
        std::vector<CMat> out;
        for (Index mu = 0; mu < ng; ++mu) {
            Vec e = Vec::Zero(ng);
            e[mu] = d;
            const CMat dp = rep.matrix(exp(e));
            e[mu] = -d;
            const CMat dm = rep.matrix(exp(e));
            out.push_back((dp - dm) / (2.0 * d));
        }
        return out;
    }
};

// U(1) with the global angle chart; elements are angles, irreps e^{i n theta}
inline GroupModel circle_group(int max_winding = 8) {
    GroupModel g;
    g.name = "circle";
    g.ng = 1;
    g.elem_size = 1;
    g.identity = Vec::Zero(1);
    g.compose = [](const Vec& a, const Vec& b) { return Vec::Constant(1, a[0] + b[0]); };
    g.inverse = [](const Vec& a) { return Vec::Constant(1, -a[0]); };
    g.exp = [](const Vec& t) { return t; };
    g.log = [](const Vec& a) {
        return Vec::Constant(1, std::remainder(a[0], 2.0 * M_PI));
    };
    g.ubar = [](const Vec&) { return Mat::Identity(1, 1); };
    g.vbar = [](const Vec&) { return Mat::Identity(1, 1); };
    g.haar_sample = [](GaussianStream& rng) {
        return Vec::Constant(1, 2.0 * M_PI * rng.uniform() - M_PI);
    };
    g.fiber_volume = 2.0 * M_PI;
    for (int n = -max_winding; n <= max_winding; ++n) {
        Irrep rep;
        rep.label = n;
        rep.dim = 1;
        rep.matrix = [n](const Vec& a) {
            CMat m(1, 1);
            m(0, 0) = std::polar(1.0, n * a[0]);
            return m;
        };
        CMat j(1, 1);
        j(0, 0) = std::complex<double>(0.0, static_cast<double>(n));
        rep.algebra = {j};
        g.irreps.push_back(rep);
    }
    return g;
}

namespace detail {

inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

inline double binom(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    return factorial(n) / (factorial(k) * factorial(n - k));
}

// quaternion (w, x, y, z) -> SU(2) matrix w - i (x s1 + y s2 + z s3)
inline CMat quat_to_su2(const Vec& q) {
    CMat u(2, 2);
    const std::complex<double> i(0.0, 1.0);
    u(0, 0) = q[0] - i * q[3];
    u(0, 1) = -i * q[1] - q[2];
    u(1, 0) = -i * q[1] + q[2];
    u(1, 1) = q[0] + i * q[3];
    return u;
}

inline Vec quat_mul(const Vec& a, const Vec& b) {
    Vec c(4);
    c[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
    c[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
    c[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
    c[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
    return c;
}

// spin-j matrix of U in SU(2), dim = twoj + 1, basis ordered m = j .. -j;
// monomial-basis expansion of the action z -> U^T z on z1^{j+m} z2^{j-m}
inline CMat wigner_d(int twoj, const CMat& u) {
    const std::complex<double> a = u(0, 0), b = u(0, 1), c = u(1, 0), d = u(1, 1);
    const int dim = twoj + 1;
    CMat out = CMat::Zero(dim, dim);
    for (int ip = 0; ip < dim; ++ip) {          // j - m' = ip
        for (int iq = 0; iq < dim; ++iq) {      // j - m  = iq
            const int jp = twoj - iq, jm = iq;  // j + m, j - m
            std::complex<double> s = 0.0;
            for (int k = 0; k <= jp; ++k) {
                const int l = iq - ip + k;      // m' - m + k
                if (l < 0 || l > jm) continue;
                s += binom(jp, k) * binom(jm, l) * std::pow(a, jp - k) * std::pow(c, k)
                     * std::pow(b, l) * std::pow(d, jm - l);
            }
            out(ip, iq) = std::sqrt(factorial(twoj - ip) * factorial(ip)
                                    / (factorial(jp) * factorial(jm))) * s;
        }
    }
    return out;
}

} // namespace detail

// generator stack of the spin representation with basis ordered m = j .. -j;
// the quaternion axis directions map to -2i times the spin matrices
inline std::vector<CMat> su2_spin_generators(int twoj) {
    const int dim = twoj + 1;
    const double j = 0.5 * twoj;
    Mat sp = Mat::Zero(dim, dim), sm = Mat::Zero(dim, dim);
    CMat sz = CMat::Zero(dim, dim);
    for (int iq = 0; iq < dim; ++iq) {
        const double m = j - iq;
        sz(iq, iq) = m;
        if (iq > 0) sp(iq - 1, iq) = std::sqrt((j - m) * (j + m + 1.0));
        if (iq + 1 < dim) sm(iq + 1, iq) = std::sqrt((j + m) * (j - m + 1.0));
    }
    const std::complex<double> i(0.0, 1.0);
    const CMat sx = 0.5 * (sp + sm).cast<std::complex<double>>();
    const CMat sy = (sp - sm).cast<std::complex<double>>() / (2.0 * i);
    return {CMat(-2.0 * i * sx), CMat(-2.0 * i * sy), CMat(-2.0 * i * sz)};
}

// SU(2) with unit-quaternion elements; algebra increments act through the
// exponential chart at the current point, so the translation bases are trivial
inline GroupModel su2_group(int max_twoj = 2) {
    GroupModel g;
    g.name = "su2";
    g.ng = 3;
    g.elem_size = 4;
    g.identity = (Vec(4) << 1, 0, 0, 0).finished();
    g.compose = [](const Vec& a, const Vec& b) { return detail::quat_mul(a, b); };
    g.inverse = [](const Vec& a) {
        return (Vec(4) << a[0], -a[1], -a[2], -a[3]).finished();
    };
    g.exp = [](const Vec& t) {
        const double r = t.norm();
        Vec q(4);
        if (r < 1e-300) {
            q << 1, 0, 0, 0;
            return q;
        }
        const double s = std::sin(r) / r;
        q << std::cos(r), s * t[0], s * t[1], s * t[2];
        return q;
    };
    g.log = [](const Vec& q) {
        const double vn = q.segment(1, 3).norm();
        if (vn < 1e-300) return Vec::Zero(3).eval();
        const double ang = std::atan2(vn, q[0]);
        return (ang / vn * q.segment(1, 3)).eval();
    };
    g.ubar = [](const Vec&) { return Mat::Identity(3, 3); };
    g.vbar = [](const Vec&) { return Mat::Identity(3, 3); };
    g.haar_sample = [](GaussianStream& rng) {
        Vec q = rng.normal_vec(4);
        q.normalize();
        return q;
    };
    g.fiber_volume = 2.0 * M_PI * M_PI;
    for (int twoj = 0; twoj <= max_twoj; ++twoj) {
        Irrep rep;
        rep.label = twoj;
        rep.dim = twoj + 1;
        rep.matrix = [twoj](const Vec& q) {
            return detail::wigner_d(twoj, detail::quat_to_su2(q));
        };
        rep.algebra = su2_spin_generators(twoj);
        g.irreps.push_back(rep);
    }
    return g;
}

// character of a representation
inline std::complex<double> character(const Irrep& rep, const Vec& a) {
    return rep.matrix(a).trace();
}

// Monte Carlo average over the group with normalized Haar measure; F must
// return a concrete value type supporting + and scalar *
template <typename F>
auto haar_average(const GroupModel& g, F&& f, int n_samples, GaussianStream& rng) {
    using R = std::decay_t<decltype(f(std::declval<const Vec&>()))>;
    R acc = f(g.haar_sample(rng));
    for (int k = 1; k < n_samples; ++k)
        acc = R(acc + f(g.haar_sample(rng)));
    return R(acc * (1.0 / static_cast<double>(n_samples)));
}

// equispaced angle nodes with the flat weight; exact for trigonometric
// polynomials of degree below n_nodes / 2
struct CircleQuadrature {
    std::vector<Vec> nodes;
    double weight = 0.0;   // per-node share of the unnormalized fiber volume
};

inline CircleQuadrature circle_quadrature(int n_nodes = 64) {
    CircleQuadrature q;
    q.weight = 2.0 * M_PI / n_nodes;
    for (int k = 0; k < n_nodes; ++k)
        q.nodes.push_back(Vec::Constant(1, 2.0 * M_PI * k / n_nodes - M_PI));
    return q;
}

} // namespace orbitdiff
