#pragma once
#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace orbitdiff {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Index = Eigen::Index;

// rank-3 coefficient array T[a](b,c), e.g. Christoffel symbols with the
// contravariant index selecting the matrix
using Tensor3 = std::vector<Mat>;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

struct SingularMetricError : NumericalError {
    explicit SingularMetricError(const std::string& what) : NumericalError(what) {}
};

struct ConvergenceError : NumericalError {
    explicit ConvergenceError(const std::string& what) : NumericalError(what) {}
};

struct DomainExitError : NumericalError {
    explicit DomainExitError(const std::string& what) : NumericalError(what) {}
};

struct ConstraintBlowupError : NumericalError {
    explicit ConstraintBlowupError(const std::string& what) : NumericalError(what) {}
};

// relative eigenvalue cutoff below which a symmetric matrix counts as singular
inline constexpr double kSingularCutoff = 1e-12;

// x^T A y with A symmetric positive semi-definite, guarding tiny negatives
inline double clamp_nonneg(double v) { return v < 0.0 ? 0.0 : v; }

// symmetric eigen-decomposition based pseudo-inverse
inline Mat pseudo_inverse(const Mat& a, double rcond = kSingularCutoff) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
    const Vec& ev = es.eigenvalues();
    const double cut = rcond * ev.cwiseAbs().maxCoeff();
    Vec inv = Vec::Zero(ev.size());
    for (Index i = 0; i < ev.size(); ++i)
        if (std::abs(ev[i]) > cut) inv[i] = 1.0 / ev[i];
    return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

// factor X with X X^T = A for symmetric positive definite A (spectral square root)
inline Mat spd_sqrt(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
    const Vec& ev = es.eigenvalues();
    const double lead = ev.maxCoeff();
    if (lead <= 0.0 || ev.minCoeff() < kSingularCutoff * lead)
        throw SingularMetricError("matrix not positive definite within cutoff");
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

// product of the r largest eigenvalues of a symmetric PSD matrix
inline double pseudo_det(const Mat& a, Index rank) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
    const Vec& ev = es.eigenvalues();
    double p = 1.0;
    for (Index i = ev.size() - rank; i < ev.size(); ++i) p *= ev[i];
    return p;
}

// product of the eigenvalues of a (possibly oblique) projector away from zero;
// equals 1 for any idempotent matrix
inline double projector_pseudo_det(const Mat& p, double cutoff = 0.5) {
    Eigen::EigenSolver<Mat> es(p);
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed");
    std::complex<double> prod(1.0, 0.0);
    for (Index i = 0; i < p.rows(); ++i)
        if (std::abs(es.eigenvalues()[i]) > cutoff) prod *= es.eigenvalues()[i];
    return prod.real();
}

// physical constants of the diffusion; the generator is (mu^2 kappa / 2) Laplacian
struct SimulationParams {
    double mu2 = 1.0;     // mu squared
    double kappa = 1.0;
    double mass = 1.0;
};

inline double drift_scale(const SimulationParams& p) { return p.mu2 * p.kappa; }
inline double noise_scale(const SimulationParams& p) { return std::sqrt(p.mu2 * p.kappa); }

} // namespace orbitdiff
