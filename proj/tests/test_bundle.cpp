#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "orbitdiff/bundle.hpp"
#include "orbitdiff/rng.hpp"
#include "orbitdiff/scenario.hpp"

using namespace orbitdiff;

namespace {

std::vector<Scenario> gauge_scenarios() {
    std::vector<Scenario> out;
    out.push_back(flat_torus_scenario());
    out.push_back(hopf_round_scenario());
    out.push_back(hopf_berger_scenario());
    return out;
}

double max_abs(const Mat& a) { return a.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("projection operators are idempotent and annihilate the orbit",
          "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(11, 0);
        for (int trial = 0; trial < 60; ++trial) {
            const Vec q = sc.sample_chart(rng);
            const PointGeometry p = point_geometry(b, q);
            const Mat id = Mat::Identity(b.np, b.np);
            INFO(sc.name << " trial " << trial);
            CHECK(max_abs(p.n * p.n - p.n) < 1e-10);
            CHECK(max_abs(p.p_perp * p.p_perp - p.p_perp) < 1e-10);
            CHECK(max_abs(p.pi * p.pi - p.pi) < 1e-10);
            CHECK(max_abs(p.n * p.k) < 1e-10);
            CHECK(max_abs(p.pi * p.k) < 1e-10);
            CHECK(max_abs(p.lambda * p.k - Mat::Identity(b.ng, b.ng)) < 1e-10);
            CHECK(max_abs(p.chi_jac * p.p_perp) < 1e-10);
            CHECK(max_abs(p.chi_jac * p.n) < 1e-10);
            // the oblique projector reproduces the orthogonal one and back
            CHECK(max_abs(p.n * p.p_perp - p.p_perp) < 1e-10);
            CHECK(max_abs(p.p_perp * p.n - p.n) < 1e-10);
            // mass matrix is the horizontal block of the inverse metric
            CHECK(max_abs(p.m - p.n * p.g_inv * p.n.transpose()) < 1e-10);
            // composition license between mass and slice-restricted metric
            CHECK(max_abs(p.m * (p.p_perp.transpose() * p.g_h * p.p_perp)
                          - p.p_perp)
                  < 1e-9);
            CHECK(max_abs(id - p.n - p.k * p.lambda) < 1e-10);
        }
    }
}

TEST_CASE("adapted metric blocks and pseudo determinants", "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(12, 0);
        for (int trial = 0; trial < 25; ++trial) {
            const Vec q = sc.sample_chart(rng);
            const PointGeometry p = point_geometry(b, q);
            const Mat ubar = Mat::Identity(b.ng, b.ng);
            const Mat gt = adapted_metric(p, ubar);
            const Mat gt_inv = adapted_pseudo_inverse(p, ubar);
            Mat block = Mat::Zero(b.np + b.ng, b.np + b.ng);
            block.topLeftCorner(b.np, b.np) = p.p_perp;
            block.bottomRightCorner(b.ng, b.ng) = Mat::Identity(b.ng, b.ng);
            INFO(sc.name << " trial " << trial);
            CHECK(max_abs(gt_inv * gt - block) < 1e-9);
            const double direct = adapted_pseudo_det(p, ubar);
            const double closed = adapted_pseudo_det_closed(p, ubar);
            CHECK(std::abs(direct - closed) < 1e-8 * std::abs(closed));
        }
    }
}

TEST_CASE("gauge slice decomposition inverts the group action", "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(13, 0);
        for (int trial = 0; trial < 40; ++trial) {
            const Vec q = sc.sample_chart(rng);
            const Decomposition dec = decompose(b, q);
            INFO(sc.name << " trial " << trial);
            // the slice point sits on the gauge slice
            CHECK(b.gauge_phase(dec.slice_point).cwiseAbs().maxCoeff() < 1e-10);
            // acting with the recovered fiber element returns the input
            const Vec back =
                b.act(dec.slice_point, b.group.exp(dec.fiber_coords));
            CHECK((back - q).cwiseAbs().maxCoeff() < 1e-10);
            // slice points are fixed by a second pass
            const Decomposition again = decompose(b, dec.slice_point);
            CHECK(again.fiber_coords.cwiseAbs().maxCoeff() < 1e-10);
            CHECK((again.slice_point - dec.slice_point).cwiseAbs().maxCoeff()
                  < 1e-10);
        }
    }
}

TEST_CASE("one shot phase projection matches the iterative decomposition",
          "[bundle]") {
    // the fiber phases of these bundles are exactly equivariant, so undoing
    // the phase in a single group action already lands on the slice
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(14, 0);
        for (int trial = 0; trial < 20; ++trial) {
            const Vec q = sc.sample_chart(rng);
            const Vec direct = phase_projection(b, q);
            const Vec newton = decompose(b, q).slice_point;
            INFO(sc.name << " trial " << trial);
            CHECK((direct - newton).cwiseAbs().maxCoeff() < 1e-9);
        }
    }
}

TEST_CASE("slice parametrization geometry", "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(15, 0);
        for (int trial = 0; trial < 25; ++trial) {
            const Vec x = sc.sample_base(rng);
            const SurfaceGeometry s = surface_geometry(b, x);
            INFO(sc.name << " trial " << trial);
            // the parametrized point satisfies the gauge condition
            CHECK(b.gauge_phase(s.point.q).cwiseAbs().maxCoeff() < 1e-9);
            // its tangent frame is tangent to the slice
            CHECK(max_abs(s.point.chi_jac * s.q_x) < 1e-7);
            // the induced metric is symmetric positive definite
            CHECK(max_abs(s.h - s.h.transpose()) < 1e-9);
            Eigen::SelfAdjointEigenSolver<Mat> es(s.h);
            CHECK(es.eigenvalues().minCoeff() > 0.0);
            // the horizontal mass pushes forward to the inverse induced metric
            const Mat h_inv = s.h.inverse();
            CHECK(max_abs(s.point.m - s.q_x * h_inv * s.q_x.transpose())
                  < 1e-7);
        }
    }
}

TEST_CASE("slice volume density factorizes over fiber and base", "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(16, 0);
        for (int trial = 0; trial < 25; ++trial) {
            const Vec x = sc.sample_base(rng);
            const SurfaceGeometry s = surface_geometry(b, x);
            const double density = slice_volume_density(b, x);
            const double split = std::sqrt(s.point.gamma.determinant()
                                           * s.h.determinant());
            INFO(sc.name << " trial " << trial);
            CHECK(std::abs(density - split) < 1e-8 * std::abs(split));
        }
    }
}

TEST_CASE("reduced drift equals the projected ambient generator", "[bundle]") {
    // the slice-valued image of ambient diffusion is itself a diffusion; its
    // drift can be read off from the projection map by the chain rule, which
    // gives an independent reference for the assembled coefficients; the
    // reference differentiates the iterative projection numerically, so its
    // own noise floor sets the tolerance
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        const VecFun to_slice = [&b](const Vec& u) {
            return decompose(b, u).slice_point;
        };
        GaussianStream rng(17, 0);
        for (int trial = 0; trial < 12; ++trial) {
            const Vec q = b.param(sc.sample_base(rng));
            const Vec assembled =
                reduced_coefficients(b, q, DiffAccuracy::high).base_drift;
            const Vec reference = ito_transform_drift(b.metric, to_slice, q);
            INFO(sc.name << " trial " << trial);
            CHECK((assembled - reference).cwiseAbs().maxCoeff() < 2e-6);
        }
    }
}

TEST_CASE("three displays of the reduced drift coincide", "[bundle]") {
    // term-by-term Ito transform, curvature display, and the assembled
    // production coefficients are independent routes to one vector field
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(26, 0);
        for (int trial = 0; trial < 15; ++trial) {
            const Vec x = sc.sample_base(rng);
            const Vec q = b.param(x);
            const Vec transform = projected_ambient_drift(b, q);
            const Vec display = curvature_display_drift(b, x);
            const Vec assembled =
                reduced_coefficients(b, q, DiffAccuracy::high).base_drift;
            INFO(sc.name << " trial " << trial);
            CHECK((transform - display).cwiseAbs().maxCoeff() < 1e-8);
            CHECK((assembled - display).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("orbit volume term carries the sign that matches the generator",
          "[bundle]") {
    // flipping the volume contribution in the drift misses the chain-rule
    // reference by exactly twice its size, so the orientation is observable
    const Scenario sc = hopf_berger_scenario();
    const GaugeBundle& b = sc.bundle;
    const VecFun to_slice = [&b](const Vec& u) {
        return decompose(b, u).slice_point;
    };
    GaussianStream rng(18, 0);
    for (int trial = 0; trial < 8; ++trial) {
        const Vec q = b.param(sc.sample_base(rng));
        const ReducedCoefficients rc =
            reduced_coefficients(b, q, DiffAccuracy::high);
        const Vec reference = ito_transform_drift(b.metric, to_slice, q);
        const double twice = 2.0 * rc.volume_drift.cwiseAbs().maxCoeff();
        REQUIRE(twice > 1e-3);
        const Vec flipped = rc.base_drift + 2.0 * rc.volume_drift;
        INFO("trial " << trial);
        CHECK((rc.base_drift - reference).cwiseAbs().maxCoeff() < 2e-6);
        CHECK((flipped - reference).cwiseAbs().maxCoeff() > 0.5 * twice);
    }
}

TEST_CASE("fiber drift equals the phase of the ambient generator", "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(19, 0);
        for (int trial = 0; trial < 12; ++trial) {
            const Vec q = b.param(sc.sample_base(rng));
            const ReducedCoefficients rc =
                reduced_coefficients(b, q, DiffAccuracy::high);
            const Vec reference =
                ito_transform_drift(b.metric, b.gauge_phase, q);
            INFO(sc.name << " trial " << trial);
            CHECK((rc.fiber_drift - reference).cwiseAbs().maxCoeff() < 2e-6);
        }
    }
}

TEST_CASE("volume drift agrees with the self transport of the orbit frame",
          "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        REQUIRE(b.ng == 1);
        GaussianStream rng(20, 0);
        for (int trial = 0; trial < 12; ++trial) {
            const Vec q = sc.sample_chart(rng);
            const PointGeometry p = point_geometry(b, q);
            const ReducedCoefficients rc = reduced_coefficients(b, p);
            const VecFun orbit_frame = [&b](const Vec& u) {
                return Vec(b.killing(u).col(0));
            };
            const Vec transport =
                b.metric.self_covariant_derivative(orbit_frame, q);
            const Vec recomputed =
                0.5 * p.m * (p.g * transport) / p.gamma(0, 0);
            INFO(sc.name << " trial " << trial);
            CHECK((rc.volume_drift - recomputed).cwiseAbs().maxCoeff() < 1e-8);
        }
    }
}

TEST_CASE("volume drift vanishes exactly for uniform fiber size", "[bundle]") {
    const std::vector<Scenario> uniform = {
        flat_torus_scenario(), hopf_round_scenario(),
        hopf_berger_uniform_scenario()};
    bool warped_seen = false;
    for (const Scenario& sc : uniform) {
        GaussianStream rng(21, 0);
        for (int trial = 0; trial < 10; ++trial) {
            const Vec q = sc.sample_chart(rng);
            const ReducedCoefficients rc =
                reduced_coefficients(sc.bundle, q);
            INFO(sc.name << " trial " << trial);
            CHECK(rc.volume_drift.cwiseAbs().maxCoeff() < 1e-9);
        }
    }
    const Scenario warped = hopf_berger_scenario();
    GaussianStream rng(22, 0);
    for (int trial = 0; trial < 10; ++trial) {
        const Vec q = warped.sample_chart(rng);
        const ReducedCoefficients rc = reduced_coefficients(warped.bundle, q);
        warped_seen = warped_seen
            || rc.volume_drift.cwiseAbs().maxCoeff() > 1e-2;
    }
    CHECK(warped_seen);
}

TEST_CASE("volume blind drift matches its projector derivative form",
          "[bundle]") {
    // alternative display of the same coefficients: contract the horizontal
    // christoffels with the mass and add the derivative of the projector
    const Scenario sc = hopf_berger_scenario();
    const GaugeBundle& b = sc.bundle;
    const MatFun projector = [&b](const Vec& u) {
        return point_geometry(b, u).n;
    };
    GaussianStream rng(23, 0);
    for (int trial = 0; trial < 6; ++trial) {
        const Vec q = sc.sample_chart(rng);
        const PointGeometry p = point_geometry(b, q);
        const ReducedCoefficients rc = reduced_coefficients(b, p);
        const Tensor3 hg = horizontal_christoffels(b, p);
        const Tensor3 dn = matrix_derivative(projector, q, 1e-5);
        Vec alt = Vec::Zero(b.np);
        for (Index a = 0; a < b.np; ++a) {
            double curv = 0.0;
            for (Index e = 0; e < b.np; ++e)
                curv += p.n(a, e) * hg[static_cast<size_t>(e)]
                                        .cwiseProduct(p.m)
                                        .sum();
            double slip = 0.0;
            for (Index l = 0; l < b.np; ++l)
                for (Index m = 0; m < b.np; ++m)
                    slip += dn[static_cast<size_t>(m)](a, l) * p.m(l, m);
            alt[a] = -0.5 * curv + 0.5 * slip;
        }
        const Vec blind = rc.base_drift + rc.volume_drift;
        INFO("trial " << trial);
        CHECK((blind - alt).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("response projected covariance collapses to the fiber metric",
          "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(24, 0);
        for (int trial = 0; trial < 20; ++trial) {
            const Vec q = sc.sample_chart(rng);
            const PointGeometry p = point_geometry(b, q);
            const Mat gamma_bar =
                p.gamma.ldlt().solve(Mat::Identity(b.ng, b.ng));
            const Mat lhs = p.lambda * p.pi * p.g_inv * p.pi.transpose()
                * p.lambda.transpose();
            const Mat rhs =
                p.lambda * p.g_inv * p.lambda.transpose() - gamma_bar;
            INFO(sc.name << " trial " << trial);
            CHECK(max_abs(lhs - rhs) < 1e-10);
        }
    }
}

TEST_CASE("gauge response determinant is positive on the sampled charts",
          "[bundle]") {
    for (const Scenario& sc : gauge_scenarios()) {
        const GaugeBundle& b = sc.bundle;
        GaussianStream rng(25, 0);
        for (int trial = 0; trial < 20; ++trial) {
            const Vec q = sc.sample_chart(rng);
            const PointGeometry p = point_geometry(b, q);
            INFO(sc.name << " trial " << trial);
            CHECK(gauge_response_det(p) > 0.0);
        }
    }
}
