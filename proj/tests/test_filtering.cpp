#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include <orbitdiff/filtering.hpp>
#include <orbitdiff/scenario.hpp>
#include <orbitdiff/sde.hpp>

using namespace orbitdiff;

namespace {

const Irrep& irrep_with_label(const GroupModel& g, int label) {
    for (const auto& rep : g.irreps)
        if (rep.label == label) return rep;
    throw std::runtime_error("missing irrep");
}

// coefficients at a flat-torus slice point: the orbit direction is the second
// coordinate, so the response-projected noise vanishes and only the dt term
// survives
MultIntegralCoeffs torus_coefficients(int label, const SimulationParams& params) {
    const Scenario sc = flat_torus_scenario();
    const GroupModel g = circle_group();
    const Vec q = sc.bundle.param(Vec::Constant(1, 0.4));
    const PointGeometry pg = point_geometry(sc.bundle, q);
    const Mat noise_factor = spd_sqrt(pg.g_inv);
    const Vec fiber_drift = Vec::Zero(1);
    return mult_integral_coefficients(pg, noise_factor,
                                      irrep_with_label(g, label).algebra, fiber_drift,
                                      params);
}

}  // namespace

TEST_CASE("batch accumulator reproduces hand-computed statistics", "[filtering]") {
    BatchAccumulator acc(2, 8, 4);
    // cell 0 receives one contribution per path, alternating 1 and 3
    for (long p = 0; p < 8; ++p) acc.add(p, 0, std::complex<double>(p % 2 == 0 ? 1.0 : 3.0, 0.0));
    // cell 1 is hit by the first two paths only
    acc.add(0, 1, std::complex<double>(4.0, 2.0));
    acc.add(1, 1, std::complex<double>(0.0, 2.0));

    CHECK(acc.hits(0) == 8);
    CHECK(acc.hits(1) == 2);
    CHECK(acc.mean(0).real() == Catch::Approx(2.0));
    CHECK(acc.mean(0).imag() == 0.0);
    // paths that never hit the cell still divide the total
    CHECK(acc.mean(1).real() == Catch::Approx(0.5));
    CHECK(acc.mean(1).imag() == Catch::Approx(0.5));

    // every batch of cell 0 averages to 2 exactly, so the spread is zero
    CHECK(acc.stderr_of_mean(0) == Catch::Approx(0.0).margin(1e-15));

    // cell 1 batch means: 2 + 2i, 0, 0, 0; sample variance over 4 batches
    const double var = (std::norm(std::complex<double>(1.5, 1.5))
                        + 3.0 * std::norm(std::complex<double>(0.5, 0.5)))
                       / 3.0;
    CHECK(acc.stderr_of_mean(1) == Catch::Approx(std::sqrt(var / 4.0)));
}

TEST_CASE("batch accumulator rejects unusable batch layouts", "[filtering]") {
    CHECK_THROWS_AS(BatchAccumulator(2, 100, 1), ConfigError);
    CHECK_THROWS_AS(BatchAccumulator(2, 7, 4), ConfigError);
}

TEST_CASE("trivial representation transport stays at the identity", "[filtering]") {
    const SimulationParams params;
    const MultIntegralCoeffs co = torus_coefficients(0, params);
    MultiplicativeIntegralState st = make_mult_integral_state(irrep_with_label(circle_group(), 0));

    GaussianStream rng(7, 0);
    for (int step = 0; step < 200; ++step) {
        mult_integral_step(st, co, rng.normal_vec(2) * std::sqrt(1e-3), 1e-3);
    }
    CHECK(st.value(0, 0).real() == 1.0);
    CHECK(st.value(0, 0).imag() == 0.0);
    CHECK_FALSE(st.overflowed);
    CHECK(st.time == Catch::Approx(0.2));
}

TEST_CASE("torus transport collapses to a deterministic decay", "[filtering]") {
    // on the flat torus the noise coefficients vanish identically, so the
    // winding-n factor reduces to scalar multiplication by 1 - n^2 h / 2
    const SimulationParams params;
    const int n = 2;
    const MultIntegralCoeffs co = torus_coefficients(n, params);

    for (const auto& b : co.b) CHECK(b.norm() < 1e-12);
    CHECK(co.c(0, 0).real() == Catch::Approx(-0.5 * n * n).epsilon(1e-12));
    CHECK(std::abs(co.c(0, 0).imag()) < 1e-12);
    CHECK((co.a - co.c).norm() < 1e-12);

    const double h = 1e-3;
    const int n_steps = 100;
    MultiplicativeIntegralState first = make_mult_integral_state(irrep_with_label(circle_group(), n));
    MultiplicativeIntegralState expo = make_mult_integral_state(irrep_with_label(circle_group(), n));
    GaussianStream rng(11, 0);
    for (int step = 0; step < n_steps; ++step) {
        const Vec dw = rng.normal_vec(2) * std::sqrt(h);
        mult_integral_step(first, co, dw, h);
        mult_integral_step_exponential(expo, co, dw, h);
    }

    const double decay = -0.5 * n * n * h;
    CHECK(first.value(0, 0).real()
          == Catch::Approx(std::pow(1.0 + decay, n_steps)).epsilon(1e-12));
    CHECK(std::abs(first.value(0, 0).imag()) < 1e-14);
    CHECK(expo.value(0, 0).real()
          == Catch::Approx(std::exp(decay * n_steps)).epsilon(1e-12));
}

TEST_CASE("one-step factor differs from the exponential factor at second order",
          "[filtering]") {
    // with no noise coefficient the two factors differ by exactly the h^2 term
    // of the exponential series
    const std::complex<double> c(0.2, -0.7);
    MultIntegralCoeffs co;
    co.c = CMat::Constant(1, 1, c);
    co.a = co.c;
    co.b = {CMat::Zero(1, 1)};

    const double h = 1e-3;
    MultiplicativeIntegralState first = make_mult_integral_state(Irrep{0, 1, {}, {}});
    MultiplicativeIntegralState expo = make_mult_integral_state(Irrep{0, 1, {}, {}});
    first.value = CMat::Identity(1, 1);
    expo.value = CMat::Identity(1, 1);
    const Vec dw = Vec::Zero(1);
    mult_integral_step(first, co, dw, h);
    mult_integral_step_exponential(expo, co, dw, h);

    const std::complex<double> gap = expo.value(0, 0) - first.value(0, 0);
    CHECK(std::abs(gap - 0.5 * c * c * h * h) < std::abs(c * c * c) * h * h * h);
}

TEST_CASE("noisy one-step factors agree with the exponential in expectation",
          "[filtering]") {
    const std::complex<double> i(0.0, 1.0);
    MultIntegralCoeffs co;
    co.c = CMat::Constant(1, 1, 0.3 * i);
    co.b = {CMat::Constant(1, 1, 0.5 * i)};
    co.a = co.c + 0.5 * co.b[0] * co.b[0];

    const double h = 1e-2;
    const int n_samples = 40000;
    GaussianStream rng(23, 0);
    std::complex<double> gap_sum = 0.0;
    for (int k = 0; k < n_samples; ++k) {
        const Vec dw = rng.normal_vec(1) * std::sqrt(h);
        MultiplicativeIntegralState first = make_mult_integral_state(Irrep{1, 1, {}, {}});
        MultiplicativeIntegralState expo = first;
        mult_integral_step(first, co, dw, h);
        mult_integral_step_exponential(expo, co, dw, h);
        gap_sum += expo.value(0, 0) - first.value(0, 0);
    }
    // the pathwise gap is O(h) but its mean is O(h^2); the Monte Carlo error
    // on 4e4 samples sits well below the assertion threshold
    CHECK(std::abs(gap_sum) / n_samples < 30.0 * h * h);
}

TEST_CASE("transport flags an overflowing value and freezes", "[filtering]") {
    MultIntegralCoeffs co;
    co.c = CMat::Constant(1, 1, std::complex<double>(2e7, 0.0));
    co.a = co.c;
    co.b = {CMat::Zero(1, 1)};

    MultiplicativeIntegralState st = make_mult_integral_state(Irrep{0, 1, {}, {}});
    mult_integral_step(st, co, Vec::Zero(1), 1.0);
    CHECK(st.overflowed);
    const CMat frozen = st.value;
    mult_integral_step(st, co, Vec::Zero(1), 1.0);
    CHECK((st.value - frozen).norm() == 0.0);
    CHECK(st.time == Catch::Approx(1.0));
}

TEST_CASE("reweighting increment vanishes when the orbit volume is constant",
          "[filtering]") {
    const SimulationParams params;
    for (const Scenario& sc : {hopf_round_scenario(), hopf_berger_uniform_scenario()}) {
        const Vec q = sc.bundle.param((Vec(2) << 0.3, -0.5).finished());
        const PointGeometry pg = point_geometry(sc.bundle, q);
        const ReducedCoefficients rc = reduced_coefficients(sc.bundle, q);
        const Mat noise_factor = spd_sqrt(pg.g_inv);
        GaussianStream rng(3, 0);
        for (int trial = 0; trial < 20; ++trial) {
            const Vec dw = rng.normal_vec(3) * std::sqrt(1e-3);
            const double inc =
                girsanov_log_weight_step(pg, noise_factor, rc.volume_drift, dw, 1e-3, params);
            CHECK(std::abs(inc) < 1e-9);
        }
    }
}

TEST_CASE("reweighted paths have unit expected weight", "[filtering]") {
    // run the volume-blind process on the warped fibration and accumulate the
    // change-of-measure weight; its expectation must be one
    const Scenario sc = hopf_berger_scenario();
    const SimulationParams params;
    const SdeSpec spec = make_reduced_sde(sc.bundle);
    IntegratorConfig cfg;
    cfg.h = 1e-3;
    cfg.max_residual = 0.1;
    cfg.seed = 91;

    const Vec start = sc.bundle.param(Vec::Zero(2));
    const int n_paths = 800;
    const double horizon = 0.05;

    double sum = 0.0;
    double sum_sq = 0.0;
    for (int p = 0; p < n_paths; ++p) {
        StepObserver observer = [&](const Vec& before, const Vec&, const WienerIncrement& dw) {
            const PointGeometry pg = point_geometry(sc.bundle, before);
            const ReducedCoefficients rc = reduced_coefficients(sc.bundle, before);
            return girsanov_log_weight_step(pg, spd_sqrt(pg.g_inv), rc.volume_drift,
                                            dw.values, dw.h, params);
        };
        const TerminalResult res =
            run_to_horizon(spec, start, horizon, cfg, params, p, observer);
        REQUIRE_FALSE(res.aborted);
        const double w = std::exp(res.log_weight);
        sum += w;
        sum_sq += w * w;
    }
    const double mean = sum / n_paths;
    const double var = (sum_sq - n_paths * mean * mean) / (n_paths - 1);
    const double se = std::sqrt(var / n_paths);
    CHECK(std::abs(mean - 1.0) < 4.0 * se + 1e-6);
}

TEST_CASE("potential weights accumulate the scaled exposure time", "[filtering]") {
    SimulationParams params;
    params.mu2 = 2.0;
    CHECK(feynman_kac_log_weight_step(2.0, 0.25, params) == Catch::Approx(0.25));
    params.mu2 = 1.0;
    params.mass = 4.0;
    CHECK(feynman_kac_log_weight_step(-1.0, 0.5, params) == Catch::Approx(-0.125));
}

TEST_CASE("circle harmonics are recovered from fiber samples", "[filtering]") {
    const GroupModel g = circle_group();
    const GroupQuadrature quad = normalized_trapezoid_quadrature(64);
    const auto f = [](const Vec& a) { return std::complex<double>(std::cos(2.0 * a[0]), 0.0); };

    const PeterWeylCoefficients pw = peter_weyl_expand(g, f, quad);
    for (size_t k = 0; k < pw.labels.size(); ++k) {
        const double expected = std::abs(pw.labels[k]) == 2 ? 0.5 : 0.0;
        CHECK(std::abs(pw.coeffs[k](0, 0) - expected) < 1e-12);
    }

    GaussianStream rng(5, 0);
    for (int trial = 0; trial < 10; ++trial) {
        const Vec a = g.haar_sample(rng);
        const std::complex<double> back = peter_weyl_reconstruct(g, pw, a);
        CHECK(std::abs(back - f(a)) < 1e-12);
    }
}

TEST_CASE("su2 harmonic coefficients match the character orthogonality",
          "[filtering]") {
    const GroupModel g = su2_group(2);
    GaussianStream rng(17, 0);
    const GroupQuadrature quad = monte_carlo_quadrature(g, 20000, rng);
    const auto f = [&g](const Vec& a) { return character(irrep_with_label(g, 1), a); };

    const PeterWeylCoefficients pw = peter_weyl_expand(g, f, quad);
    for (size_t k = 0; k < pw.labels.size(); ++k) {
        const CMat expected = pw.labels[k] == 1
                                  ? CMat(CMat::Identity(pw.coeffs[k].rows(), pw.coeffs[k].cols()))
                                  : CMat(CMat::Zero(pw.coeffs[k].rows(), pw.coeffs[k].cols()));
        CHECK((pw.coeffs[k] - expected).norm() < 0.15);
    }
}
