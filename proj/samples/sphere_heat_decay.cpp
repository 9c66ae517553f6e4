#include <orbitdiff/driver.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

using namespace orbitdiff;

// heat decay of the first two axial spherical harmonics under Brownian
// motion on the unit sphere, simulated once with the ambient description
// and once in stereographic chart coordinates
int main() {
    const Scenario s = sphere_ambient_scenario();
    const std::vector<ScalarFun> obs = {
        [](const Vec& q) { return axial_harmonic_l1(q[0]); },
        [](const Vec& q) { return axial_harmonic_l2(q[0]); }};

    std::printf("%6s  %2s  %9s  %22s  %22s\n", "T", "l", "exact", "ambient",
                "chart");
    for (const double horizon : {0.25, 0.5, 1.0}) {
        EnsembleConfig ec;
        ec.n_paths = 20000;
        ec.h = 1e-3;
        ec.horizon = horizon;
        ec.seed = 7;
        EnsembleConfig ei = ec;
        ei.seed = companion_seed(ec.seed);

        const ObservableStats ambient =
            sde_observable_stats(s.closed_ambient, s.ambient_start, ec, obs);
        const ObservableStats chart = sde_observable_stats(
            s.intrinsic, s.base_start, ei, obs,
            [](const Vec& st) { return sphere_chart_point(st); });

        for (int l = 1; l <= 2; ++l) {
            const size_t i = static_cast<size_t>(l - 1);
            const double start =
                l == 1 ? axial_harmonic_l1(1.0) : axial_harmonic_l2(1.0);
            const double exact = std::exp(-0.5 * l * (l + 1) * horizon) * start;
            std::printf("%6g  %2d  %9.5f  %12.5f +- %-7.5f  %12.5f +- %-7.5f\n",
                        horizon, l, exact, ambient.mean[i], ambient.se[i],
                        chart.mean[i], chart.se[i]);
        }
    }
    return 0;
}
