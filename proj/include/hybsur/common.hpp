#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace hybsur {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

} // namespace detail

/// SplitMix64 step; used to derive independent sub-seeds from a base seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic sub-seed for stream `stream` of a run seeded with `base`.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    return splitmix64(splitmix64(base) ^ splitmix64(stream * 0x9E3779B97F4A7C15ULL + 1));
}

inline int env_thread_cap() {
    if (const char* s = std::getenv("HYBRID_SURROGATE_THREADS")) {
        try {
            int v = std::stoi(s);
            if (v >= 1) return v;
        } catch (...) {
        }
    }
    return 0; // unset / invalid: no cap
}

} // namespace hybsur
