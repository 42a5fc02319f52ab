#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wvloc/errors.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/hashing.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

using json = nlohmann::json;

/// Log-distance path-loss channel with Gaussian shadowing (in dB).
struct ChannelParams {
    double tx_power_dbm = -40.0;      // P0, mean RSSI at the reference distance
    double reference_distance = 1.0;  // d0, meters
    double path_loss_exponent = 2.2;  // n
    double shadowing_sigma = 2.0;     // dB
    std::uint64_t seed = 11;

    void validate() const {
        if (!(reference_distance > 0.0)) {
            throw ConfigError("channel reference distance must be positive");
        }
        if (path_loss_exponent < 1.0 || path_loss_exponent > 6.0) {
            throw ConfigError("path loss exponent must lie in [1, 6]");
        }
        if (shadowing_sigma < 0.0) {
            throw ConfigError("shadowing sigma must be nonnegative");
        }
    }

    friend bool operator==(const ChannelParams&, const ChannelParams&) = default;
};

/// Sinusoidal feature scene standing in for camera imagery: a fixed smooth
/// injective map from location to an F-dimensional feature vector.
struct SceneParams {
    int feature_dim = 16;       // F
    int n_basis = 24;           // sinusoids mixed into the features
    double frequency_scale = 0.9;  // max |omega| per axis, rad/m
    double noise_sigma = 0.05;  // per-entry observation noise
    std::uint64_t seed = 7;

    void validate() const {
        if (feature_dim <= 0 || n_basis <= 0) {
            throw ConfigError("scene feature_dim and n_basis must be positive");
        }
        if (!(frequency_scale > 0.0)) {
            throw ConfigError("scene frequency scale must be positive");
        }
        if (noise_sigma < 0.0) {
            throw ConfigError("scene noise sigma must be nonnegative");
        }
    }

    friend bool operator==(const SceneParams&, const SceneParams&) = default;
};

/// Full-batch gradient-descent settings for the coarse RP classifier.
struct CoarseTrainParams {
    double learning_rate = 0.05;
    double l2 = 1e-3;
    int max_iterations = 5000;
    double grad_tolerance = 1e-6;
    int checkpoint_every = 100;

    void validate() const {
        if (!(learning_rate > 0.0) || l2 < 0.0 || max_iterations <= 0 ||
            !(grad_tolerance > 0.0) || checkpoint_every <= 0) {
            throw ConfigError("invalid coarse training parameters");
        }
    }

    friend bool operator==(const CoarseTrainParams&, const CoarseTrainParams&) = default;
};

/// Mini-batch ADAM settings for the fine regressor.
struct FineTrainParams {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 32;
    int epochs = 8000;
    int hidden1 = 64;
    int hidden2 = 64;
    double init_scale = 0.1;  // weight init std = init_scale / sqrt(fan_in)
    bool drop_missed_areas = false;

    void validate() const {
        if (learning_rate < 0.0 || batch_size <= 0 || epochs < 0 || hidden1 <= 0 ||
            hidden2 <= 0 || !(init_scale > 0.0) || !(epsilon > 0.0) || beta1 < 0.0 ||
            beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
            throw ConfigError("invalid fine training parameters");
        }
    }

    friend bool operator==(const FineTrainParams&, const FineTrainParams&) = default;
};

namespace detail {

/// Count of RP grid positions along one axis: cells of exactly `spacing`
/// meters, centered in the available span.
inline int grid_count_1d(double span, double spacing) {
    const int n = static_cast<int>(std::floor(span / spacing));
    return n < 1 ? 1 : n;
}

}  // namespace detail

/// Everything one experiment run needs. The default values mirror the
/// desk-scale reference setup: a 12 m x 4.5 m floor with a thin 0.1 m z slab,
/// a 1.5 m RP
/// grid (8x3 = 24 RPs), 5x3 = 15 areas, 5 access points, and J* = 4. The thin
/// slab keeps the weakly-observable z axis from dominating position error.
struct ExperimentConfig {
    Box floor{{0.0, 0.0, 0.0}, {12.0, 4.5, 0.1}};
    std::vector<Location> ap_positions{{0.0, 0.0, 2.0},
                                       {12.0, 0.0, 2.0},
                                       {0.0, 4.5, 2.0},
                                       {12.0, 4.5, 2.0},
                                       {6.0, 2.25, 2.0}};
    int n_samples = 50;  // N_s rows per RSSI observation
    ImageFeatureSpec image_spec{};
    double rp_spacing = 1.5;
    int n_rp = 24;
    int n_areas_x = 5;
    int n_areas_y = 3;
    int n_wifi_rounds = 2;   // N_W
    int n_image_rounds = 2;  // N_I
    int j_star = 4;
    ChannelParams channel{};
    SceneParams scene{};
    CoarseTrainParams coarse_training{};
    FineTrainParams fine_training{};
    std::uint64_t seed = 1;
    int n_tasks = 100;  // M evaluation queries

    int n_ap() const { return static_cast<int>(ap_positions.size()); }
    int n_areas() const { return n_areas_x * n_areas_y; }

    int rp_cols() const { return detail::grid_count_1d(floor.extent_x(), rp_spacing); }
    int rp_rows() const { return detail::grid_count_1d(floor.extent_y(), rp_spacing); }

    void validate() const {
        floor.validate();
        if (ap_positions.empty()) {
            throw ConfigError("at least one access point is required");
        }
        for (const Location& ap : ap_positions) {
            if (!ap.is_finite()) {
                throw ConfigError("AP positions must be finite");
            }
        }
        if (n_samples <= 0 || n_wifi_rounds <= 0 || n_image_rounds <= 0 || n_tasks <= 0) {
            throw ConfigError("sample, round, and task counts must be positive");
        }
        image_spec.validate();
        if (!(rp_spacing > 0.0)) {
            throw ConfigError("rp spacing must be positive");
        }
        if (n_areas_x <= 0 || n_areas_y <= 0) {
            throw ConfigError("area grid dimensions must be positive");
        }
        if (j_star < 1 || j_star > n_areas()) {
            throw ConfigError("j_star must lie in [1, n_areas]");
        }
        if (n_rp < n_areas()) {
            throw ConfigError("n_rp must be at least n_areas");
        }
        if (n_rp != rp_cols() * rp_rows()) {
            throw ConfigError("n_rp (" + std::to_string(n_rp) +
                              ") does not match the RP grid derived from floor size and "
                              "spacing (" +
                              std::to_string(rp_cols() * rp_rows()) + ")");
        }
        channel.validate();
        scene.validate();
        if (scene.feature_dim != image_spec.feature_dim) {
            throw ConfigError("scene.feature_dim must equal image_spec.feature_dim");
        }
        coarse_training.validate();
        fine_training.validate();
    }

    json to_json() const;
    static ExperimentConfig from_json(const json& j);

    /// Hash of the canonical JSON form; persisted artifacts embed it so
    /// mismatched databases and models are refused.
    std::string hash() const { return fnv1a64_hex(to_json().dump()); }

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline json location_to_json(const Location& l) { return json::array({l.x, l.y, l.z}); }

inline Location location_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) {
        throw ConfigError("a location must be an array of three numbers");
    }
    return Location{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <typename T>
T get_field(const json& j, const char* key) {
    if (!j.contains(key)) {
        throw ConfigError(std::string("missing config field: ") + key);
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field has wrong type: ") + key);
    }
}

}  // namespace detail

inline json ExperimentConfig::to_json() const {
    json aps = json::array();
    for (const Location& ap : ap_positions) {
        aps.push_back(detail::location_to_json(ap));
    }
    return json{
        {"floor",
         {{"min", detail::location_to_json(floor.min)},
          {"max", detail::location_to_json(floor.max)}}},
        {"ap_positions", aps},
        {"n_samples", n_samples},
        {"image_spec",
         {{"n_p", image_spec.n_p},
          {"n_w", image_spec.n_w},
          {"n_l", image_spec.n_l},
          {"n_rgb", image_spec.n_rgb},
          {"feature_dim", image_spec.feature_dim}}},
        {"rp_spacing", rp_spacing},
        {"n_rp", n_rp},
        {"n_areas_x", n_areas_x},
        {"n_areas_y", n_areas_y},
        {"n_wifi_rounds", n_wifi_rounds},
        {"n_image_rounds", n_image_rounds},
        {"j_star", j_star},
        {"channel",
         {{"tx_power_dbm", channel.tx_power_dbm},
          {"reference_distance", channel.reference_distance},
          {"path_loss_exponent", channel.path_loss_exponent},
          {"shadowing_sigma", channel.shadowing_sigma},
          {"seed", channel.seed}}},
        {"scene",
         {{"feature_dim", scene.feature_dim},
          {"n_basis", scene.n_basis},
          {"frequency_scale", scene.frequency_scale},
          {"noise_sigma", scene.noise_sigma},
          {"seed", scene.seed}}},
        {"coarse_training",
         {{"learning_rate", coarse_training.learning_rate},
          {"l2", coarse_training.l2},
          {"max_iterations", coarse_training.max_iterations},
          {"grad_tolerance", coarse_training.grad_tolerance},
          {"checkpoint_every", coarse_training.checkpoint_every}}},
        {"fine_training",
         {{"learning_rate", fine_training.learning_rate},
          {"beta1", fine_training.beta1},
          {"beta2", fine_training.beta2},
          {"epsilon", fine_training.epsilon},
          {"batch_size", fine_training.batch_size},
          {"epochs", fine_training.epochs},
          {"hidden1", fine_training.hidden1},
          {"hidden2", fine_training.hidden2},
          {"init_scale", fine_training.init_scale},
          {"drop_missed_areas", fine_training.drop_missed_areas}}},
        {"seed", seed},
        {"n_tasks", n_tasks}};
}

inline ExperimentConfig ExperimentConfig::from_json(const json& j) {
    using detail::get_field;
    ExperimentConfig cfg;
    const json jf = get_field<json>(j, "floor");
    cfg.floor.min = detail::location_from_json(get_field<json>(jf, "min"));
    cfg.floor.max = detail::location_from_json(get_field<json>(jf, "max"));
    cfg.ap_positions.clear();
    for (const json& ap : get_field<json>(j, "ap_positions")) {
        cfg.ap_positions.push_back(detail::location_from_json(ap));
    }
    cfg.n_samples = get_field<int>(j, "n_samples");
    const json ji = get_field<json>(j, "image_spec");
    cfg.image_spec.n_p = get_field<int>(ji, "n_p");
    cfg.image_spec.n_w = get_field<int>(ji, "n_w");
    cfg.image_spec.n_l = get_field<int>(ji, "n_l");
    cfg.image_spec.n_rgb = get_field<int>(ji, "n_rgb");
    cfg.image_spec.feature_dim = get_field<int>(ji, "feature_dim");
    cfg.rp_spacing = get_field<double>(j, "rp_spacing");
    cfg.n_rp = get_field<int>(j, "n_rp");
    cfg.n_areas_x = get_field<int>(j, "n_areas_x");
    cfg.n_areas_y = get_field<int>(j, "n_areas_y");
    cfg.n_wifi_rounds = get_field<int>(j, "n_wifi_rounds");
    cfg.n_image_rounds = get_field<int>(j, "n_image_rounds");
    cfg.j_star = get_field<int>(j, "j_star");
    const json jc = get_field<json>(j, "channel");
    cfg.channel.tx_power_dbm = get_field<double>(jc, "tx_power_dbm");
    cfg.channel.reference_distance = get_field<double>(jc, "reference_distance");
    cfg.channel.path_loss_exponent = get_field<double>(jc, "path_loss_exponent");
    cfg.channel.shadowing_sigma = get_field<double>(jc, "shadowing_sigma");
    cfg.channel.seed = get_field<std::uint64_t>(jc, "seed");
    const json js = get_field<json>(j, "scene");
    cfg.scene.feature_dim = get_field<int>(js, "feature_dim");
    cfg.scene.n_basis = get_field<int>(js, "n_basis");
    cfg.scene.frequency_scale = get_field<double>(js, "frequency_scale");
    cfg.scene.noise_sigma = get_field<double>(js, "noise_sigma");
    cfg.scene.seed = get_field<std::uint64_t>(js, "seed");
    const json jct = get_field<json>(j, "coarse_training");
    cfg.coarse_training.learning_rate = get_field<double>(jct, "learning_rate");
    cfg.coarse_training.l2 = get_field<double>(jct, "l2");
    cfg.coarse_training.max_iterations = get_field<int>(jct, "max_iterations");
    cfg.coarse_training.grad_tolerance = get_field<double>(jct, "grad_tolerance");
    cfg.coarse_training.checkpoint_every = get_field<int>(jct, "checkpoint_every");
    const json jft = get_field<json>(j, "fine_training");
    cfg.fine_training.learning_rate = get_field<double>(jft, "learning_rate");
    cfg.fine_training.beta1 = get_field<double>(jft, "beta1");
    cfg.fine_training.beta2 = get_field<double>(jft, "beta2");
    cfg.fine_training.epsilon = get_field<double>(jft, "epsilon");
    cfg.fine_training.batch_size = get_field<int>(jft, "batch_size");
    cfg.fine_training.epochs = get_field<int>(jft, "epochs");
    cfg.fine_training.hidden1 = get_field<int>(jft, "hidden1");
    cfg.fine_training.hidden2 = get_field<int>(jft, "hidden2");
    cfg.fine_training.init_scale = get_field<double>(jft, "init_scale");
    cfg.fine_training.drop_missed_areas = get_field<bool>(jft, "drop_missed_areas");
    cfg.seed = get_field<std::uint64_t>(j, "seed");
    cfg.n_tasks = get_field<int>(j, "n_tasks");
    cfg.validate();
    return cfg;
}

}  // namespace wvloc
