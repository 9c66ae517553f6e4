#pragma once
#include <cmath>
#include <complex>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "bundle.hpp"
#include "group.hpp"
#include "rng.hpp"
#include "types.hpp"

namespace orbitdiff {

// matrix norm beyond which an accumulated multiplicative integral counts as
// overflowed; the path is excluded and the exclusion reported
inline constexpr double kMultOverflowNorm = 1e6;

// ---------------------------------------------------------------------------
// time-ordered multiplicative stochastic integral

// running value of the time-ordered product for one irrep along one path
struct MultiplicativeIntegralState {
    int label = 0;
    CMat value;  // identity at the start time
    double time = 0.0;
    bool overflowed = false;
};

inline MultiplicativeIntegralState make_mult_integral_state(const Irrep& rep) {
    MultiplicativeIntegralState st;
    st.label = rep.label;
    st.value = CMat::Identity(rep.dim, rep.dim);
    return st;
}

// step coefficients of the linear phase-transport equation at one point:
// the first-order factor uses a, the exponential factor uses c, and the two
// differ by the Ito quadratic correction a = c + 1/2 sum_M b_M b_M
struct MultIntegralCoeffs {
    CMat a;               // dt coefficient of the one-step factor I + a h + b dw
    CMat c;               // dt coefficient inside the exponential factor
    std::vector<CMat> b;  // dw coefficients, one per noise channel
};

inline MultIntegralCoeffs mult_integral_coefficients(const PointGeometry& pg,
                                                     const Mat& noise_factor,
                                                     const std::vector<CMat>& algebra,
                                                     const Vec& fiber_drift,
                                                     const SimulationParams& params) {
    const Index ng = pg.gamma.rows();
    const Index np = pg.lambda.cols();
    const Index dim = algebra.empty() ? 1 : algebra[0].rows();
    const Mat gamma_bar = pg.gamma.ldlt().solve(Mat::Identity(ng, ng));
    const Mat lam_pi_x = pg.lambda * pg.pi * noise_factor;

    MultIntegralCoeffs out;
    out.c = CMat::Zero(dim, dim);
    for (Index s = 0; s < ng; ++s)
        for (Index nu = 0; nu < ng; ++nu)
            out.c += 0.5 * drift_scale(params) * gamma_bar(s, nu)
                     * (algebra[static_cast<size_t>(s)] * algebra[static_cast<size_t>(nu)]);
    for (Index be = 0; be < ng; ++be)
        out.c += drift_scale(params) * fiber_drift[be] * algebra[static_cast<size_t>(be)];

    out.b.assign(static_cast<size_t>(np), CMat::Zero(dim, dim));
    for (Index m = 0; m < np; ++m)
        for (Index be = 0; be < ng; ++be)
            out.b[static_cast<size_t>(m)] +=
                noise_scale(params) * lam_pi_x(be, m) * algebra[static_cast<size_t>(be)];

    out.a = out.c;
    for (Index m = 0; m < np; ++m)
        out.a += 0.5 * out.b[static_cast<size_t>(m)] * out.b[static_cast<size_t>(m)];
    return out;
}

// left-multiply by the first-order factor; later times enter on the left
inline void mult_integral_step(MultiplicativeIntegralState& st,
                               const MultIntegralCoeffs& co, const Vec& dw, double h) {
    if (st.overflowed) return;
    const Index dim = st.value.rows();
    CMat f = CMat::Identity(dim, dim) + co.a * h;
    for (size_t m = 0; m < co.b.size(); ++m) f += co.b[m] * dw[static_cast<Index>(m)];
    st.value = f * st.value;
    st.time += h;
    if (!st.value.allFinite() || st.value.norm() > kMultOverflowNorm)
        st.overflowed = true;
}

// same update through the matrix exponential of the accumulated exponent;
// agrees with the first-order factor to O(h^2) in expectation per step
inline void mult_integral_step_exponential(MultiplicativeIntegralState& st,
                                           const MultIntegralCoeffs& co, const Vec& dw,
                                           double h) {
    if (st.overflowed) return;
    CMat expo = co.c * h;
    for (size_t m = 0; m < co.b.size(); ++m) expo += co.b[m] * dw[static_cast<Index>(m)];
    st.value = CMat(expo.exp()) * st.value;
    st.time += h;
    if (!st.value.allFinite() || st.value.norm() > kMultOverflowNorm)
        st.overflowed = true;
}

// ---------------------------------------------------------------------------
// path reweighting

// measure change from the volume-blind reduced process to the gauge-surface
// process: log-increment of exp(theta' dw - 1/2 |theta|^2 dt) at the left point
inline double girsanov_log_weight_step(const PointGeometry& pg, const Mat& noise_factor,
                                       const Vec& volume_drift, const Vec& dw, double h,
                                       const SimulationParams& params) {
    const Vec theta = -noise_scale(params)
                      * (noise_factor.transpose()
                         * (pg.g_h * (pg.p_perp * volume_drift)));
    return theta.dot(dw) - 0.5 * theta.squaredNorm() * h;
}

// potential-term weight at the left point
inline double feynman_kac_log_weight_step(double potential, double h,
                                          const SimulationParams& params) {
    return potential * h / (params.mu2 * params.kappa * params.mass);
}

// ---------------------------------------------------------------------------
// batched Monte Carlo accumulation

// per-cell sums of complex path contributions, partitioned into independent
// batches; the estimate is the batch-mean average, the standard error comes
// from the spread across batches
class BatchAccumulator {
public:
    BatchAccumulator(Index n_cells, long n_paths, int n_batches = 32)
        : n_paths_(n_paths), n_batches_(n_batches),
          sums_(static_cast<size_t>(n_cells), CVec::Zero(n_batches)),
          hits_(static_cast<size_t>(n_cells), 0) {
        if (n_batches < 2) throw ConfigError("need at least two batches");
        if (n_paths % n_batches != 0)
            throw ConfigError("path count must divide evenly into batches");
    }

    Index cells() const { return static_cast<Index>(sums_.size()); }
    long paths() const { return n_paths_; }
    int batches() const { return n_batches_; }

    void add(std::uint64_t path_id, Index cell, std::complex<double> value) {
        const int b = batch_of(path_id, static_cast<std::uint64_t>(n_paths_), n_batches_);
        sums_[static_cast<size_t>(cell)](b) += value;
        ++hits_[static_cast<size_t>(cell)];
    }

    long hits(Index cell) const { return hits_[static_cast<size_t>(cell)]; }

    std::complex<double> mean(Index cell) const {
        const double per = static_cast<double>(n_paths_) / n_batches_;
        return sums_[static_cast<size_t>(cell)].sum() / (per * n_batches_);
    }

    double stderr_of_mean(Index cell) const {
        const double per = static_cast<double>(n_paths_) / n_batches_;
        const CVec means = sums_[static_cast<size_t>(cell)] / per;
        const std::complex<double> m = means.mean();
        double var = 0.0;
        for (int b = 0; b < n_batches_; ++b) var += std::norm(means(b) - m);
        var /= (n_batches_ - 1);
        return std::sqrt(var / n_batches_);
    }

private:
    long n_paths_ = 0;
    int n_batches_ = 0;
    std::vector<CVec> sums_;
    std::vector<long> hits_;
};

// grid-resolved kernel estimate; matrix-valued per cell for nontrivial irreps
struct KernelEstimate {
    int label = 0;                  // irrep label, 0 for the scalar kernel
    Index dim = 1;                  // matrix dimension per cell
    std::vector<Vec> cell_centers;
    std::vector<double> cell_volumes;
    std::vector<CMat> mean;
    std::vector<double> stderr_of_mean;  // pooled over matrix entries
    std::vector<long> count;             // paths landing in the cell
    long n_paths = 0;
    long n_excluded = 0;  // overflowed or aborted paths left out of the sums
    std::string source;   // which process and weights produced the estimate
};

// ---------------------------------------------------------------------------
// harmonic analysis on the group

// nodes and normalized weights averaging to the Haar probability measure
struct GroupQuadrature {
    std::vector<Vec> nodes;
    std::vector<double> weights;
};

inline GroupQuadrature normalized_trapezoid_quadrature(int n_nodes = 64) {
    GroupQuadrature q;
    const CircleQuadrature base = circle_quadrature(n_nodes);
    q.nodes = base.nodes;
    q.weights.assign(base.nodes.size(), 1.0 / n_nodes);
    return q;
}

inline GroupQuadrature monte_carlo_quadrature(const GroupModel& g, int n_samples,
                                              GaussianStream& rng) {
    GroupQuadrature q;
    for (int k = 0; k < n_samples; ++k) q.nodes.push_back(g.haar_sample(rng));
    q.weights.assign(q.nodes.size(), 1.0 / n_samples);
    return q;
}

// coefficients of f against the matrix elements of the retained irreps, with
// the dimension prefactor folded in: c^l_pq = d^l <f, D^l_pq>
struct PeterWeylCoefficients {
    std::vector<int> labels;
    std::vector<CMat> coeffs;
};

inline PeterWeylCoefficients
peter_weyl_expand(const GroupModel& g,
                  const std::function<std::complex<double>(const Vec&)>& f,
                  const GroupQuadrature& quad) {
    PeterWeylCoefficients out;
    for (const Irrep& rep : g.irreps) {
        CMat c = CMat::Zero(rep.dim, rep.dim);
        for (size_t k = 0; k < quad.nodes.size(); ++k)
            c += quad.weights[k] * f(quad.nodes[k]) * rep.matrix(quad.nodes[k]).conjugate();
        out.labels.push_back(rep.label);
        out.coeffs.push_back(CMat(static_cast<double>(rep.dim) * c));
    }
    return out;
}

inline std::complex<double> peter_weyl_reconstruct(const GroupModel& g,
                                                   const PeterWeylCoefficients& c,
                                                   const Vec& a) {
    std::complex<double> s = 0.0;
    for (size_t i = 0; i < c.labels.size(); ++i) {
        for (const Irrep& rep : g.irreps) {
            if (rep.label != c.labels[i]) continue;
            const CMat d = rep.matrix(a);
            s += (c.coeffs[i].array() * d.array()).sum();
            break;
        }
    }
    return s;
}

} // namespace orbitdiff
