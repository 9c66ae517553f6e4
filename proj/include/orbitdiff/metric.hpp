#pragma once
#include <functional>
#include <string>

#include "numdiff.hpp"
#include "types.hpp"

namespace orbitdiff {

// Riemannian metric on a single chart, with the derived quantities the
// diffusion generator needs. Derivatives fall back to central differences;
// closed-form metrics keep that cheap and accurate.
class MetricField {
public:
    MetricField() = default;
    MetricField(Index dim, MatFun g) : dim_(dim), g_(std::move(g)) {}

    Index dim() const { return dim_; }

    Mat metric(const Vec& q) const { return g_(q); }

    Mat inverse(const Vec& q) const {
        const Mat g = g_(q);
        Eigen::SelfAdjointEigenSolver<Mat> es(g);
        if (es.info() != Eigen::Success) throw NumericalError("metric eigensolve failed");
        const double lead = es.eigenvalues().maxCoeff();
        if (lead <= 0.0 || es.eigenvalues().minCoeff() < kSingularCutoff * lead)
            throw SingularMetricError("metric not positive definite within cutoff");
        return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal()
               * es.eigenvectors().transpose();
    }

    // noise factor X with X X^T = G^{-1} (spectral square root of the inverse)
    Mat noise_factor(const Vec& q) const { return spd_sqrt(inverse(q)); }

    // Christoffel symbols Gamma[a](b,c) of the Levi-Civita connection
    Tensor3 christoffels(const Vec& q, double d = 0.0) const {
        const Tensor3 dg = matrix_derivative(g_, q, d);
        const Mat gi = inverse(q);
        const Index n = dim_;
        Tensor3 gam(static_cast<size_t>(n), Mat::Zero(n, n));
        for (Index a = 0; a < n; ++a)
            for (Index b = 0; b < n; ++b)
                for (Index c = 0; c < n; ++c) {
                    double s = 0.0;
                    for (Index e = 0; e < n; ++e)
                        s += gi(a, e) * (dg[static_cast<size_t>(c)](e, b)
                                         + dg[static_cast<size_t>(b)](e, c)
                                         - dg[static_cast<size_t>(e)](b, c));
                    gam[static_cast<size_t>(a)](b, c) = 0.5 * s;
                }
        return gam;
    }

    // Brownian-motion drift -1/2 G^{PB} Gamma^A_PB (times mu^2 kappa by the caller)
    Vec bm_drift(const Vec& q) const {
        const Mat gi = inverse(q);
        const Tensor3 gam = christoffels(q);
        Vec b = Vec::Zero(dim_);
        for (Index a = 0; a < dim_; ++a)
            b[a] = -0.5 * (gi.cwiseProduct(gam[static_cast<size_t>(a)])).sum();
        return b;
    }

    // equivalent divergence form 1/2 G^{-1/2} d_B (sqrt(G) G^{AB})
    Vec bm_drift_divergence_form(const Vec& q) const {
        auto dens = [this](const Vec& v) -> Mat {
            const Mat g = g_(v);
            return std::sqrt(g.determinant()) * inverse(v);
        };
        const Tensor3 dd = matrix_derivative(dens, q);
        const double sq = std::sqrt(g_(q).determinant());
        Vec b = Vec::Zero(dim_);
        for (Index a = 0; a < dim_; ++a)
            for (Index k = 0; k < dim_; ++k) b[a] += dd[static_cast<size_t>(k)](a, k);
        return 0.5 / sq * b;
    }

    // covariant acceleration (nabla_V V)^c of a vector field along itself
    Vec self_covariant_derivative(const VecFun& field, const Vec& q) const {
        const Vec v = field(q);
        const Mat dv = jacobian(field, q, 1e-6 * std::max(1.0, q.cwiseAbs().maxCoeff()));
        const Tensor3 gam = christoffels(q, 1e-6 * std::max(1.0, q.cwiseAbs().maxCoeff()));
        Vec out = dv * v;
        for (Index c = 0; c < dim_; ++c)
            out[c] += v.dot(gam[static_cast<size_t>(c)] * v);
        return out;
    }

private:
    Index dim_ = 0;
    MatFun g_;
};

} // namespace orbitdiff
