#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pottsglass {

// All randomness in the library derives from a single 64-bit master seed via
// named sub-streams, e.g. stream(seed, "disorder", 17).  Results are therefore
// stable across refactors and independent of how work is split over threads.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name,
                                    std::uint64_t index = 0) {
    std::uint64_t h = splitmix64(master ^ fnv1a64(name));
    return splitmix64(h ^ splitmix64(index + 0x51ed2700a1b3c269ULL));
}

// A seeded generator plus convenience draws.  A fresh normal_distribution is
// used per stream so no hidden Box-Muller state leaks between streams.
class RngStream {
  public:
    RngStream(std::uint64_t master, std::string_view name, std::uint64_t index = 0)
        : engine_(substream_seed(master, name, index)) {}

    explicit RngStream(std::uint64_t raw_seed) : engine_(raw_seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double exponential() { return exponential_(engine_); }

    std::uint64_t uint64() { return engine_(); }

    // Uniform index in [0, n).
    std::size_t index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> dist(0, n - 1);
        return dist(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::exponential_distribution<double> exponential_{1.0};
};

}  // namespace pottsglass
