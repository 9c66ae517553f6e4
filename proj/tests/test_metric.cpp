#include <catch2/catch_amalgamated.hpp>

#include "orbitdiff/metric.hpp"
#include "orbitdiff/rng.hpp"

using namespace orbitdiff;

namespace {

// conformally flat chart metric of the round 2-sphere
MetricField sphere_chart_metric() {
    return MetricField(2, [](const Vec& u) {
        const double phi = 4.0 / std::pow(1.0 + u.squaredNorm(), 2);
        return Mat(phi * Mat::Identity(2, 2));
    });
}

Vec random_point(GaussianStream& rng, Index n, double scale) {
    Vec x(n);
    for (Index i = 0; i < n; ++i) x[i] = scale * (2.0 * rng.uniform() - 1.0);
    return x;
}

}  // namespace

TEST_CASE("flat metric has no curvature data", "[metric]") {
    MetricField flat(3, [](const Vec&) { return Mat(Mat::Identity(3, 3)); });
    Vec q(3);
    q << 0.2, -0.5, 1.0;
    const Tensor3 gam = flat.christoffels(q);
    for (const Mat& g : gam) CHECK(g.cwiseAbs().maxCoeff() < 1e-9);
    CHECK(flat.bm_drift(q).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(flat.bm_drift_divergence_form(q).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("christoffels of a conformally flat metric", "[metric]") {
    const MetricField mf = sphere_chart_metric();
    GaussianStream rng(5, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec u = random_point(rng, 2, 0.9);
        const double r2 = u.squaredNorm();
        // log-derivative of the conformal factor 4 / (1 + r^2)^2
        const Vec dphi = -4.0 * u / (1.0 + r2);
        const Tensor3 gam = mf.christoffels(u);
        for (Index a = 0; a < 2; ++a)
            for (Index b = 0; b < 2; ++b)
                for (Index c = 0; c < 2; ++c) {
                    const double expect = 0.5
                        * ((a == b ? dphi[c] : 0.0) + (a == c ? dphi[b] : 0.0)
                           - (b == c ? dphi[a] : 0.0));
                    CHECK(std::abs(gam[static_cast<size_t>(a)](b, c) - expect)
                          < 1e-7);
                }
    }
}

TEST_CASE("both drift forms agree on a curved metric", "[metric]") {
    const MetricField mf = sphere_chart_metric();
    GaussianStream rng(6, 0);
    for (int trial = 0; trial < 25; ++trial) {
        const Vec u = random_point(rng, 2, 0.9);
        const Vec a = mf.bm_drift(u);
        const Vec b = mf.bm_drift_divergence_form(u);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("noise factor squares to the inverse metric", "[metric]") {
    const MetricField mf = sphere_chart_metric();
    Vec u(2);
    u << 0.4, -0.7;
    const Mat x = mf.noise_factor(u);
    CHECK((x * x.transpose() - mf.inverse(u)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("singular metric is rejected", "[metric]") {
    MetricField bad(2, [](const Vec&) {
        Mat g(2, 2);
        g << 1, 1, 1, 1;
        return g;
    });
    CHECK_THROWS_AS(bad.inverse(Vec::Zero(2)), SingularMetricError);
}

TEST_CASE("self-transport of a linear field on flat space", "[metric]") {
    MetricField flat(2, [](const Vec&) { return Mat(Mat::Identity(2, 2)); });
    const VecFun field = [](const Vec& x) {
        Vec v(2);
        v << x[1], -x[0];
        return v;
    };
    Vec q(2);
    q << 0.3, 0.8;
    // flat connection: (D_V V)^a = (dV^a/dx^b) V^b
    Vec expect(2);
    expect << -q[0], -q[1];
    CHECK((flat.self_covariant_derivative(field, q) - expect)
              .cwiseAbs()
              .maxCoeff()
          < 1e-7);
}
