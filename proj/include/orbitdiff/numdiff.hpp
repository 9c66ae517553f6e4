#pragma once
#include <functional>

#include "types.hpp"

namespace orbitdiff {

using VecFun = std::function<Vec(const Vec&)>;
using MatFun = std::function<Mat(const Vec&)>;
using ScalarFun = std::function<double(const Vec&)>;

// grade of the difference stencils used by coefficient assembly: `standard`
// is cheap enough for per-step use inside integrators, `high` switches to
// Richardson-extrapolated stencils for pointwise verification work
enum class DiffAccuracy { standard, high };

// step size scaled to the magnitude of the expansion point
inline double fd_step(const Vec& x, double base = 1e-5) {
    return base * std::max(1.0, x.cwiseAbs().maxCoeff());
}

// central-difference Jacobian J(i,k) = df_i/dx_k
inline Mat jacobian(const VecFun& f, const Vec& x, double d = 0.0) {
    if (d == 0.0) d = fd_step(x);
    Vec xp = x, xm = x;
    Mat j;
    for (Index k = 0; k < x.size(); ++k) {
        xp[k] += d; xm[k] -= d;
        const Vec fp = f(xp), fm = f(xm);
        if (j.size() == 0) j.resize(fp.size(), x.size());
        j.col(k) = (fp - fm) / (2.0 * d);
        xp[k] = x[k]; xm[k] = x[k];
    }
    return j;
}

// central-difference derivative of a matrix field: out[k] = dA/dx_k
inline Tensor3 matrix_derivative(const MatFun& f, const Vec& x, double d = 0.0) {
    if (d == 0.0) d = fd_step(x);
    Vec xp = x, xm = x;
    Tensor3 out(static_cast<size_t>(x.size()));
    for (Index k = 0; k < x.size(); ++k) {
        xp[k] += d; xm[k] -= d;
        out[static_cast<size_t>(k)] = (f(xp) - f(xm)) / (2.0 * d);
        xp[k] = x[k]; xm[k] = x[k];
    }
    return out;
}

// Richardson-extrapolated Jacobian, error O(d^4)
inline Mat jacobian_richardson(const VecFun& f, const Vec& x, double d = 1e-3) {
    const Mat coarse = jacobian(f, x, d);
    const Mat fine = jacobian(f, x, 0.5 * d);
    return (4.0 * fine - coarse) / 3.0;
}

// Richardson-extrapolated derivative of a matrix field, error O(d^4)
inline Tensor3 matrix_derivative_richardson(const MatFun& f, const Vec& x,
                                            double d = 6e-4) {
    Tensor3 coarse = matrix_derivative(f, x, d);
    Tensor3 fine = matrix_derivative(f, x, 0.5 * d);
    for (size_t k = 0; k < coarse.size(); ++k)
        fine[k] = (4.0 * fine[k] - coarse[k]) / 3.0;
    return fine;
}

// gradient of a scalar field
inline Vec gradient(const ScalarFun& f, const Vec& x, double d = 0.0) {
    if (d == 0.0) d = fd_step(x);
    Vec g(x.size()), xp = x, xm = x;
    for (Index k = 0; k < x.size(); ++k) {
        xp[k] += d; xm[k] -= d;
        g[k] = (f(xp) - f(xm)) / (2.0 * d);
        xp[k] = x[k]; xm[k] = x[k];
    }
    return g;
}

// central-difference Hessians of a vector field: out[a](i,j) = d2 f_a / dx_i dx_j
inline Tensor3 hessian(const VecFun& f, const Vec& x, double d = 1e-4) {
    const Vec f0 = f(x);
    const Index n = x.size(), m = f0.size();
    Tensor3 out(static_cast<size_t>(m), Mat::Zero(n, n));
    for (Index i = 0; i < n; ++i) {
        Vec xi = x;
        xi[i] = x[i] + d; const Vec fpp = f(xi);
        xi[i] = x[i] - d; const Vec fmm = f(xi);
        for (Index a = 0; a < m; ++a)
            out[static_cast<size_t>(a)](i, i) = (fpp[a] - 2.0 * f0[a] + fmm[a]) / (d * d);
        for (Index j = i + 1; j < n; ++j) {
            Vec xc = x;
            xc[i] += d; xc[j] += d; const Vec fa = f(xc);
            xc[j] -= 2 * d;         const Vec fb = f(xc);
            xc[i] -= 2 * d;         const Vec fd_ = f(xc);
            xc[j] += 2 * d;         const Vec fc = f(xc);
            for (Index a = 0; a < m; ++a) {
                const double v = (fa[a] - fb[a] - fc[a] + fd_[a]) / (4.0 * d * d);
                out[static_cast<size_t>(a)](i, j) = v;
                out[static_cast<size_t>(a)](j, i) = v;
            }
        }
    }
    return out;
}

// Richardson-extrapolated Hessians, error O(d^4); used by the drift oracles
inline Tensor3 hessian_richardson(const VecFun& f, const Vec& x, double d = 6e-4) {
    Tensor3 coarse = hessian(f, x, d);
    Tensor3 fine = hessian(f, x, 0.5 * d);
    for (size_t a = 0; a < coarse.size(); ++a)
        fine[a] = (4.0 * fine[a] - coarse[a]) / 3.0;
    return fine;
}

} // namespace orbitdiff
