#pragma once

#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace mf::nn {

/// Row-major dense matrix; rows are samples, columns are features.
/// Parameters hold float32-representable values (see quantize) while all
/// arithmetic runs in double.
using Tensor2D = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Mode { train, eval };

inline bool all_finite(const Tensor2D& t) { return t.allFinite(); }

/// Round every value to the nearest float32 so checkpoints (f32 blocks)
/// reload bit-exactly.
inline void quantize(Tensor2D& t) {
    for (Eigen::Index i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<double>(static_cast<float>(t.data()[i]));
}

/// Deterministic generator with a portable output sequence. std::mt19937_64
/// is fully specified; the standard distributions are not, so they are
/// avoided.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    void reseed(std::uint64_t seed) { engine_.seed(seed); }
    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

private:
    std::mt19937_64 engine_;
};

}  // namespace mf::nn
