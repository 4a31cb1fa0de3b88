#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace topoattack {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error taxonomy shared by the whole pipeline. The CLI maps these onto
// exit codes, so new failure modes should reuse one of the kinds below.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t line_no)
        : Error(msg + " (line " + std::to_string(line_no) + ")"), line(line_no) {}
    std::size_t line;
};

struct DegenerateInput : Error {
    explicit DegenerateInput(const std::string& msg) : Error(msg) {}
};

struct DegenerateNeighborhood : Error {
    explicit DegenerateNeighborhood(const std::string& msg) : Error(msg) {}
};

struct DegenerateSimplex : Error {
    explicit DegenerateSimplex(const std::string& msg) : Error(msg) {}
};

struct EmptyCohort : Error {
    explicit EmptyCohort(const std::string& msg) : Error(msg) {}
};

inline double sq(double x) { return x * x; }

// Deterministic RNG. mt19937_64 has a pinned algorithm, but the standard
// distributions do not, so uniform/normal draws are generated by hand to
// keep outputs identical across compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // unbiased integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller; the spare value is cached so draws stay sequential.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    Vec3 normal3() {
        const double x = normal();
        const double y = normal();
        const double z = normal();
        return Vec3(x, y, z);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace topoattack
