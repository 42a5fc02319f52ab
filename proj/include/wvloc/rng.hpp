#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace wvloc {

/// splitmix64 finalizer; good enough to decorrelate derived stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Purpose tags for derived substreams. Each (seed, kind, index) triple names
/// one independent stream, so generation order never affects results.
enum class StreamKind : std::uint64_t {
    kWifiSurvey = 1,
    kImageSurvey = 2,
    kFineInit = 3,
    kFineShuffle = 4,
    kQueryLocation = 5,
    kQueryRssi = 6,
    kQueryImage = 7,
    kSelectionRssi = 8,
    kSceneBasis = 9,
    kInjectivityCheck = 10,
    kBench = 11,
    kTest = 12,
};

/// Deterministic random stream. All distributions are implemented by hand on
/// top of mt19937_64 so the produced sequence is identical on every platform
/// (std::normal_distribution and std::shuffle are implementation-defined).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, StreamKind kind = StreamKind::kTest,
                       std::uint64_t index = 0)
        : engine_(mix64(seed ^ mix64(static_cast<std::uint64_t>(kind) + mix64(index)))) {}

    /// Uniform double in the open interval (0, 1).
    double uniform() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. Draws exactly two uniforms per call so
    /// the consumed sequence does not depend on call history.
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    /// Uniform integer in [0, n). Modulo bias is irrelevant at 2^64.
    std::uint64_t uniform_below(std::uint64_t n) { return engine_() % n; }

    /// Deterministic Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace wvloc
