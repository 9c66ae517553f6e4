#pragma once
#include <cmath>
#include <cstdint>
#include <random>

#include "types.hpp"

namespace orbitdiff {

// splitmix64 step, used to derive independent per-path seeds from (seed, path id)
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Gaussian stream with its own generator state; every path owns one, seeded
// from (global seed, path id), so results do not depend on scheduling order
class GaussianStream {
public:
    GaussianStream(std::uint64_t seed, std::uint64_t path_id) {
        std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (path_id + 1));
        const std::uint64_t a = splitmix64(s), b = splitmix64(s);
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        gen_.seed(seq);
    }

    double uniform() {
        // uniform in (0, 1]
        return (static_cast<double>(gen_()) + 1.0) * 0x1p-64;
    }

    double normal() {
        // Box-Muller pair, one value cached
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = uniform(), u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Vec normal_vec(Index n) {
        Vec v(n);
        for (Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// fixed path -> batch assignment used by every estimator, independent of
// execution order; batch means then reduce in batch index order
inline int batch_of(std::uint64_t path_id, std::uint64_t n_paths, int n_batches) {
    const std::uint64_t per = (n_paths + static_cast<std::uint64_t>(n_batches) - 1)
                              / static_cast<std::uint64_t>(n_batches);
    const std::uint64_t b = path_id / per;
    return static_cast<int>(b >= static_cast<std::uint64_t>(n_batches)
                                ? static_cast<std::uint64_t>(n_batches) - 1 : b);
}

} // namespace orbitdiff
