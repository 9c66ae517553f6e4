#include <catch2/catch_amalgamated.hpp>

#include "orbitdiff/numdiff.hpp"
#include "orbitdiff/rng.hpp"
#include "orbitdiff/types.hpp"

using namespace orbitdiff;

TEST_CASE("nonnegative clamp", "[numerics]") {
    CHECK(clamp_nonneg(-3.0) == 0.0);
    CHECK(clamp_nonneg(0.0) == 0.0);
    CHECK(clamp_nonneg(2.5) == 2.5);
}

TEST_CASE("pseudo-inverse on a rank-deficient matrix", "[numerics]") {
    Mat a(3, 3);
    a << 2, 0, 0, 0, 5, 0, 0, 0, 0;
    const Mat ai = pseudo_inverse(a);
    Mat expect = Mat::Zero(3, 3);
    expect(0, 0) = 0.5;
    expect(1, 1) = 0.2;
    CHECK((ai - expect).cwiseAbs().maxCoeff() < 1e-14);

    // Moore-Penrose identities on a random rank-2 rectangular matrix
    Mat b(4, 3);
    b << 1, 2, 3, 2, 4, 6, 0, 1, -1, 1, 3, 2;
    const Mat bi = pseudo_inverse(b);
    CHECK((b * bi * b - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((bi * b * bi - bi).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((b * bi - (b * bi).transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("symmetric square root", "[numerics]") {
    Mat s(2, 2);
    s << 2, 1, 1, 3;
    const Mat a = s * s;
    const Mat r = spd_sqrt(a);
    CHECK((r * r - a).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r - r.transpose()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("pseudo-determinant keeps the leading spectrum", "[numerics]") {
    Mat a = Mat::Zero(3, 3);
    a(0, 0) = 3.0;
    a(1, 1) = 4.0;
    a(2, 2) = 1e-15;
    CHECK(pseudo_det(a, 2) == Catch::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("projector pseudo-determinant ignores the kernel", "[numerics]") {
    // oblique projector with eigenvalues 1, 1, 0
    Vec v(3), w(3);
    v << 1, 2, -1;
    w << 0.5, -0.2, 0.3;
    const Mat p = Mat::Identity(3, 3) - v * w.transpose() / w.dot(v);
    CHECK(projector_pseudo_det(p) == Catch::Approx(1.0).epsilon(1e-10));
    CHECK(projector_pseudo_det(Mat::Identity(4, 4)) == Catch::Approx(1.0));
}

TEST_CASE("jacobian against a closed form", "[numerics]") {
    const VecFun f = [](const Vec& x) {
        Vec y(2);
        y << std::sin(x[0]) * x[1], x[0] * x[0] - x[1];
        return y;
    };
    Vec x(2);
    x << 0.7, -1.3;
    Mat expect(2, 2);
    expect << std::cos(x[0]) * x[1], std::sin(x[0]), 2 * x[0], -1;
    CHECK((jacobian(f, x) - expect).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("gradient and matrix derivative against closed forms", "[numerics]") {
    const ScalarFun g = [](const Vec& x) { return x[0] * x[0] * std::exp(x[1]); };
    Vec x(2);
    x << 1.1, 0.4;
    Vec expect(2);
    expect << 2 * x[0] * std::exp(x[1]), x[0] * x[0] * std::exp(x[1]);
    CHECK((gradient(g, x) - expect).cwiseAbs().maxCoeff() < 1e-7);

    const MatFun m = [](const Vec& x) {
        Mat a(2, 2);
        a << x[0] * x[1], std::sin(x[0]), 0.0, x[1] * x[1];
        return a;
    };
    const Tensor3 dm = matrix_derivative(m, x);
    Mat d0(2, 2), d1(2, 2);
    d0 << x[1], std::cos(x[0]), 0, 0;
    d1 << x[0], 0, 0, 2 * x[1];
    CHECK((dm[0] - d0).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((dm[1] - d1).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("hessian and its extrapolated variant", "[numerics]") {
    const VecFun f = [](const Vec& x) {
        return Vec::Constant(1, std::sin(x[0]) * std::cos(x[1]));
    };
    Vec x(2);
    x << 0.3, 0.9;
    Mat expect(2, 2);
    expect << -std::sin(x[0]) * std::cos(x[1]), -std::cos(x[0]) * std::sin(x[1]),
        -std::cos(x[0]) * std::sin(x[1]), -std::sin(x[0]) * std::cos(x[1]);
    CHECK((hessian(f, x)[0] - expect).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((hessian_richardson(f, x)[0] - expect).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gaussian stream is keyed by seed and path", "[numerics]") {
    GaussianStream a(42, 7), b(42, 7), c(42, 8);
    bool same = true, differ = false;
    for (int i = 0; i < 50; ++i) {
        const double xa = a.normal();
        same = same && xa == b.normal();
        differ = differ || xa != c.normal();
    }
    CHECK(same);
    CHECK(differ);
}

TEST_CASE("gaussian moments", "[numerics]") {
    GaussianStream rng(11, 0);
    const long n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (long i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sum2 += x * x;
    }
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 5.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform draws live in the unit interval", "[numerics]") {
    GaussianStream rng(3, 1);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u > 0.0);
        CHECK(u <= 1.0);
    }
}

TEST_CASE("batch partition is contiguous and balanced", "[numerics]") {
    const long n_paths = 96;
    const int n_batches = 32;
    std::vector<long> counts(n_batches, 0);
    for (long pid = 0; pid < n_paths; ++pid) {
        const int b = batch_of(static_cast<std::uint64_t>(pid), n_paths, n_batches);
        REQUIRE(b >= 0);
        REQUIRE(b < n_batches);
        ++counts[static_cast<size_t>(b)];
    }
    for (long c : counts) CHECK(c == n_paths / n_batches);
    CHECK(batch_of(0, 96, 32) == 0);
    CHECK(batch_of(95, 96, 32) == 31);
}

TEST_CASE("simulation scales", "[numerics]") {
    SimulationParams p;
    p.mu2 = 2.0;
    p.kappa = 3.0;
    CHECK(drift_scale(p) == Catch::Approx(6.0));
    CHECK(noise_scale(p) == Catch::Approx(std::sqrt(6.0)));
}

TEST_CASE("error types carry their messages", "[numerics]") {
    CHECK_THROWS_AS(throw ConfigError("x"), ConfigError);
    CHECK_THROWS_AS(throw SingularMetricError("x"), NumericalError);
    CHECK_THROWS_AS(throw DomainExitError("x"), NumericalError);
    CHECK_THROWS_AS(throw ConstraintBlowupError("x"), NumericalError);
    CHECK_THROWS_WITH(throw ConvergenceError("newton stalled"), "newton stalled");
}
