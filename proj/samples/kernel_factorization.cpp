#include <orbitdiff/driver.hpp>

#include <cstdio>
#include <vector>

using namespace orbitdiff;

// the group average of the ambient transition kernel against an irrep equals
// the gauge-fixed reduced kernel carrying the matching fiber transport; this
// compares the two estimates cell by cell on the Hopf fibration
int main() {
    const json cfg{{"scenario", "hopf-round"}, {"n_paths", 20000},
                   {"h", 0.002},              {"horizon", 0.1},
                   {"seed", 7},               {"labels", {0, 1}}};
    const ResolvedRun run = resolve_run(parse_run_config(cfg));
    const KernelComparison cmp = verify_identity_run(run);

    for (size_t l = 0; l < cmp.reduced.size(); ++l) {
        const KernelEstimate& red = cmp.reduced[l];
        const KernelEstimate& avg = cmp.ambient[l];
        std::printf("label %d (%ld of %ld paths binned)\n", red.label,
                    red.n_paths - red.n_excluded, red.n_paths);
        for (size_t c = 0; c < red.mean.size(); ++c) {
            if (avg.count[c] < 500) continue;
            const Vec x = red.cell_centers[c];
            std::printf("  cell (% .3f, % .3f)  averaged % .4f%+.4fi"
                        "  reduced % .4f%+.4fi\n",
                        x[0], x[1], avg.mean[c](0, 0).real(),
                        avg.mean[c](0, 0).imag(), red.mean[c](0, 0).real(),
                        red.mean[c](0, 0).imag());
        }
    }
    for (const Verdict& v : cmp.aggregates)
        std::printf("%-24s %s  (worst z %.2f)\n", v.id.c_str(),
                    v.pass ? "pass" : "FAIL", v.z);
    return 0;
}
