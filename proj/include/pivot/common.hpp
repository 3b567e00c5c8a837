#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace pivot {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct NonPositiveDepth : Error { using Error::Error; };
struct MissingCamera : Error { using Error::Error; };
struct EmptyCandidateSet : Error { using Error::Error; };
struct OutOfRangeDepth : Error { using Error::Error; };
struct EmptySelection : Error { using Error::Error; };
struct MissingExemplars : Error { using Error::Error; };
struct Unparseable : Error { using Error::Error; };
struct EmptyAfterFilter : Error { using Error::Error; };
struct ScriptExhausted : Error { using Error::Error; };
struct TransportError : Error { using Error::Error; };
struct RateLimited : Error { using Error::Error; };
struct BudgetExhausted : Error { using Error::Error; };
struct TargetOutOfView : Error { using Error::Error; };
struct ZeroVector : Error { using Error::Error; };

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Mixes a stream index into a base seed so derived generators are independent.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    return splitmix64(base ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Seeded generator with a portable Gaussian (Box-Muller over mt19937_64),
/// so identical seeds reproduce identical draws on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    double uniform() {  // [0, 1)
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    uint64_t uniform_int(uint64_t n) {  // [0, n)
        return n == 0 ? 0 : engine_() % n;
    }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double mag = std::sqrt(-2.0 * std::log(u1));
        const double ang = 2.0 * M_PI * u2;
        spare_ = mag * std::sin(ang);
        has_spare_ = true;
        return mag * std::cos(ang);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline double lerp(double a, double b, double t) { return a + (b - a) * t; }

}  // namespace pivot
