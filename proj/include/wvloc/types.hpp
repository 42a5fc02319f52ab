#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wvloc/errors.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/matrix.hpp"

namespace wvloc {

constexpr double kRssiFloorDbm = -120.0;
constexpr double kRssiCeilDbm = 0.0;
constexpr double kSimplexTolerance = 1e-9;

/// Shape metadata for one visual observation. Pixel dimensions are carried as
/// configuration only; the pipeline consumes the abstracted feature rows.
struct ImageFeatureSpec {
    int n_p = 104;        // images per observation
    int n_w = 752;        // pixel width
    int n_l = 780;        // pixel height
    int n_rgb = 1;        // color channels
    int feature_dim = 16; // F, per-image feature vector length

    void validate() const {
        if (n_p <= 0 || n_w <= 0 || n_l <= 0 || n_rgb <= 0 || feature_dim <= 0) {
            throw ConfigError("image feature spec fields must be positive");
        }
    }

    friend bool operator==(const ImageFeatureSpec&, const ImageFeatureSpec&) = default;
};

/// One wireless observation: N_s RSSI sample rows over N_AP access points.
class RssiObservation {
public:
    RssiObservation() = default;

    explicit RssiObservation(Matrix samples) : samples_(std::move(samples)) {
        if (samples_.rows() == 0 || samples_.cols() == 0) {
            throw ConfigError("RSSI observation must have at least one row and column");
        }
        for (double v : samples_.data()) {
            if (!std::isfinite(v) || v < kRssiFloorDbm || v > kRssiCeilDbm) {
                throw ConfigError("RSSI entries must be finite and within [-120, 0] dBm");
            }
        }
    }

    const Matrix& samples() const noexcept { return samples_; }
    std::size_t n_samples() const noexcept { return samples_.rows(); }
    std::size_t n_ap() const noexcept { return samples_.cols(); }

    friend bool operator==(const RssiObservation&, const RssiObservation&) = default;

private:
    Matrix samples_;
};

/// One visual observation: N_p rows of F-dimensional per-image features.
class ImageFeatures {
public:
    ImageFeatures() = default;

    ImageFeatures(Matrix features, ImageFeatureSpec spec)
        : features_(std::move(features)), spec_(spec) {
        spec_.validate();
        if (features_.rows() != static_cast<std::size_t>(spec_.n_p)) {
            throw ConfigError("image features must have exactly n_p rows");
        }
        if (features_.cols() != static_cast<std::size_t>(spec_.feature_dim)) {
            throw ConfigError("image feature rows must have length feature_dim");
        }
        if (!features_.all_finite()) {
            throw ConfigError("image feature entries must be finite");
        }
    }

    const Matrix& features() const noexcept { return features_; }
    const ImageFeatureSpec& spec() const noexcept { return spec_; }

    friend bool operator==(const ImageFeatures&, const ImageFeatures&) = default;

private:
    Matrix features_;
    ImageFeatureSpec spec_;
};

/// A surveyed location whose fingerprint enters the wireless database.
struct ReferencePoint {
    int index = 0;
    Location location;

    friend bool operator==(const ReferencePoint&, const ReferencePoint&) = default;
};

/// Probability simplex over reference points or areas.
class LikelihoodVector {
public:
    LikelihoodVector() = default;

    /// Validating constructor: entries must be nonnegative and sum to 1
    /// within kSimplexTolerance. Never renormalizes silently.
    explicit LikelihoodVector(std::vector<double> probs) : probs_(std::move(probs)) {
        if (probs_.empty()) {
            throw ConfigError("likelihood vector must be non-empty");
        }
        double sum = 0.0;
        for (double p : probs_) {
            if (!std::isfinite(p)) {
                throw ConfigError("likelihood entries must be finite");
            }
            if (p < 0.0) {
                throw ConfigError("likelihood entries must be nonnegative");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kSimplexTolerance) {
            throw ConfigError("likelihood entries must sum to 1 within 1e-9 (got " +
                              std::to_string(sum) + ")");
        }
    }

    /// Explicit renormalization entry point for callers holding raw
    /// nonnegative weights.
    static LikelihoodVector normalized(std::vector<double> weights) {
        if (weights.empty()) {
            throw ConfigError("likelihood vector must be non-empty");
        }
        double sum = 0.0;
        for (double w : weights) {
            if (!std::isfinite(w) || w < 0.0) {
                throw ConfigError("weights must be finite and nonnegative");
            }
            sum += w;
        }
        if (sum <= 0.0) {
            throw ConfigError("cannot normalize an all-zero weight vector");
        }
        for (double& w : weights) {
            w /= sum;
        }
        return LikelihoodVector(std::move(weights));
    }

    const std::vector<double>& probs() const noexcept { return probs_; }
    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }

    friend bool operator==(const LikelihoodVector&, const LikelihoodVector&) = default;

private:
    std::vector<double> probs_;
};

/// Output of the coarse stage: the J* retained area indices with their area
/// likelihoods, aligned and sorted by descending probability (ties broken by
/// lower area index).
struct CandidateSelection {
    std::vector<int> area_indices;
    std::vector<double> probs;

    std::size_t size() const noexcept { return area_indices.size(); }

    double max_prob() const {
        // Alignment contract: probs[0] is the largest retained probability.
        return probs.front();
    }

    friend bool operator==(const CandidateSelection&, const CandidateSelection&) = default;
};

}  // namespace wvloc
