#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "wvloc/config.hpp"
#include "wvloc/errors.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/matrix.hpp"
#include "wvloc/rng.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

/// Fixed smooth feature map standing in for a camera: mixes n_basis sinusoids
/// of (x, y, z) into an F-dimensional vector,
///   phi_f(L) = sum_b A(f, b) * sin(omega_b . L + psi_b).
/// All parameters are drawn once from the scene seed, so the map is a pure
/// deterministic function of location afterwards.
class SceneBasis {
  public:
    SceneBasis(const SceneParams& params, const Box& floor)
        : params_(params),
          mixing_(static_cast<std::size_t>(params.feature_dim),
                  static_cast<std::size_t>(params.n_basis)) {
        params_.validate();
        floor.validate();
        RngStream gen(params_.seed, StreamKind::kSceneBasis, 0);
        frequencies_.reserve(static_cast<std::size_t>(params_.n_basis));
        phases_.reserve(static_cast<std::size_t>(params_.n_basis));
        for (int b = 0; b < params_.n_basis; ++b) {
            Location w;
            w.x = gen.uniform(-params_.frequency_scale, params_.frequency_scale);
            w.y = gen.uniform(-params_.frequency_scale, params_.frequency_scale);
            w.z = gen.uniform(-params_.frequency_scale, params_.frequency_scale);
            frequencies_.push_back(w);
            phases_.push_back(gen.uniform(0.0, 2.0 * std::numbers::pi));
        }
        const double col_scale = 1.0 / std::sqrt(static_cast<double>(params_.n_basis));
        for (std::size_t f = 0; f < mixing_.rows(); ++f) {
            for (std::size_t b = 0; b < mixing_.cols(); ++b) {
                mixing_(f, b) = gen.normal(0.0, col_scale);
            }
        }
        check_injectivity(floor);
    }

    int feature_dim() const { return params_.feature_dim; }
    int n_basis() const { return params_.n_basis; }
    const Matrix& mixing() const { return mixing_; }
    const std::vector<Location>& frequencies() const { return frequencies_; }
    const std::vector<double>& phases() const { return phases_; }

    /// Noise-free feature vector phi(loc).
    std::vector<double> phi(const Location& loc) const {
        std::vector<double> s(frequencies_.size());
        for (std::size_t b = 0; b < frequencies_.size(); ++b) {
            s[b] = std::sin(frequencies_[b].x * loc.x + frequencies_[b].y * loc.y +
                            frequencies_[b].z * loc.z + phases_[b]);
        }
        std::vector<double> out(static_cast<std::size_t>(params_.feature_dim), 0.0);
        for (std::size_t f = 0; f < mixing_.rows(); ++f) {
            double acc = 0.0;
            const double* row = mixing_.row(f);
            for (std::size_t b = 0; b < s.size(); ++b) {
                acc += row[b] * s[b];
            }
            out[f] = acc;
        }
        return out;
    }

    /// Global Lipschitz constant of phi: since |sin u - sin v| <= |u - v|,
    ///   |phi_f(a) - phi_f(b)| <= sum_b |A(f,b)| * |omega_b| * |a - b|,
    /// so K = sqrt(sum_f (sum_b |A(f,b)| |omega_b|)^2) bounds the map.
    double lipschitz_bound() const {
        double total = 0.0;
        for (std::size_t f = 0; f < mixing_.rows(); ++f) {
            double kf = 0.0;
            const double* row = mixing_.row(f);
            for (std::size_t b = 0; b < frequencies_.size(); ++b) {
                const Location& w = frequencies_[b];
                const double wn = std::sqrt(w.x * w.x + w.y * w.y + w.z * w.z);
                kf += std::abs(row[b]) * wn;
            }
            total += kf * kf;
        }
        return std::sqrt(total);
    }

  private:
    /// Injectivity cannot be proven by sampling, but a degenerate basis is
    /// caught: distinct sampled locations must map to distinct features.
    void check_injectivity(const Box& floor) const {
        RngStream probe(params_.seed, StreamKind::kInjectivityCheck, 0);
        constexpr int kPairs = 256;
        for (int i = 0; i < kPairs; ++i) {
            Location a{probe.uniform(floor.min.x, floor.max.x),
                       probe.uniform(floor.min.y, floor.max.y),
                       probe.uniform(floor.min.z, floor.max.z)};
            Location b{probe.uniform(floor.min.x, floor.max.x),
                       probe.uniform(floor.min.y, floor.max.y),
                       probe.uniform(floor.min.z, floor.max.z)};
            if (distance(a, b) < 1e-6) {
                continue;
            }
            const std::vector<double> fa = phi(a);
            const std::vector<double> fb = phi(b);
            double diff = 0.0;
            for (std::size_t f = 0; f < fa.size(); ++f) {
                diff += (fa[f] - fb[f]) * (fa[f] - fb[f]);
            }
            if (!(std::sqrt(diff) > 1e-9)) {
                throw ConfigError(
                    "scene basis failed the injectivity sampling check; "
                    "increase n_basis or change the scene seed");
            }
        }
    }

    SceneParams params_;
    Matrix mixing_;  // F x n_basis
    std::vector<Location> frequencies_;
    std::vector<double> phases_;
};

/// Draw an N_p x F image-feature observation at `loc`: every row is
/// phi(loc) + per-entry Gaussian noise, rows generated in order.
inline ImageFeatures synth_features(const SceneBasis& basis, const ImageFeatureSpec& spec,
                                    double noise_sigma, const Location& loc,
                                    RngStream& stream) {
    const std::vector<double> base = basis.phi(loc);
    Matrix m(static_cast<std::size_t>(spec.n_p), base.size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            m(r, c) = base[c] + (noise_sigma > 0.0 ? stream.normal(0.0, noise_sigma) : 0.0);
        }
    }
    return ImageFeatures(std::move(m), spec);
}

}  // namespace wvloc
