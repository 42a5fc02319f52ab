#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wvloc/config.hpp"
#include "wvloc/errors.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/matrix.hpp"
#include "wvloc/partition.hpp"
#include "wvloc/rng.hpp"
#include "wvloc/serialization.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

/// Reduces the N_p x F query block to the regressor input: per-column mean.
inline std::vector<double> pool_features(const ImageFeatures& img) {
    const Matrix& m = img.features();
    std::vector<double> pooled(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            pooled[c] += row[c];
        }
    }
    for (double& v : pooled) {
        v /= static_cast<double>(m.rows());
    }
    return pooled;
}

namespace detail {

inline double max_retained_prob(const CandidateSelection& sel) {
    if (sel.probs.empty()) {
        throw ConfigError("candidate selection must be non-empty");
    }
    double hi = 0.0;
    for (double p : sel.probs) {
        if (!(p > 0.0)) {
            throw ConfigError("every retained area probability must be positive");
        }
        hi = std::max(hi, p);
    }
    return hi;
}

}  // namespace detail

/// The likelihood-weighted loss: min over retained areas of
/// ||pred - truth||^2 / p_A^j, which is analytically the squared error
/// divided by the largest retained probability.
inline double joint_loss(const Location& pred, const Location& truth,
                         const CandidateSelection& selection) {
    return squared_distance(pred, truth) / detail::max_retained_prob(selection);
}

/// Gradient of joint_loss in pred; the coarse probabilities are constants.
inline std::array<double, 3> loss_gradient(const Location& pred, const Location& truth,
                                           const CandidateSelection& selection) {
    const double w = 2.0 / detail::max_retained_prob(selection);
    return {w * (pred.x - truth.x), w * (pred.y - truth.y), w * (pred.z - truth.z)};
}

/// One supervised example for the fine stage: pooled query features, the
/// ground-truth location, and the coarse selection computed from RSSI
/// measured at that same location.
struct TrainingSample {
    std::vector<double> pooled;
    Location truth;
    CandidateSelection selection;
    double weight = 0.0;  // cached 1 / max retained probability

    TrainingSample(std::vector<double> pooled_in, const Location& truth_in,
                   CandidateSelection selection_in)
        : pooled(std::move(pooled_in)),
          truth(truth_in),
          selection(std::move(selection_in)),
          weight(1.0 / detail::max_retained_prob(selection)) {
        if (pooled.empty()) {
            throw ConfigError("training sample has no features");
        }
    }
};

/// MLP F -> H1 -> H2 -> 3 with tanh hidden layers and a linear head, followed
/// by a fixed (non-trainable) affine map onto the floor box:
/// pred = center + half_extent * u. Parameters are plain data; only training
/// code mutates them.
struct RegressorModel {
    Matrix w1, w2, w3;
    std::vector<double> b1, b2, b3;
    Location out_center;
    Location out_scale;
    int epochs_trained = 0;
    double final_mean_loss = 0.0;
    std::string config_hash;

    static RegressorModel init(int input_dim, const FineTrainParams& params, const Box& floor,
                               RngStream& rng) {
        params.validate();
        floor.validate();
        if (input_dim <= 0) {
            throw ConfigError("regressor input dimension must be positive");
        }
        RegressorModel m;
        m.w1 = random_layer(static_cast<std::size_t>(params.hidden1),
                            static_cast<std::size_t>(input_dim), params.init_scale, rng);
        m.b1.assign(static_cast<std::size_t>(params.hidden1), 0.0);
        m.w2 = random_layer(static_cast<std::size_t>(params.hidden2),
                            static_cast<std::size_t>(params.hidden1), params.init_scale, rng);
        m.b2.assign(static_cast<std::size_t>(params.hidden2), 0.0);
        m.w3 = random_layer(3, static_cast<std::size_t>(params.hidden2), params.init_scale, rng);
        m.b3.assign(3, 0.0);
        m.out_center = floor.center();
        m.out_scale = Location{0.5 * floor.extent_x(), 0.5 * floor.extent_y(),
                               0.5 * floor.extent_z()};
        return m;
    }

    int input_dim() const { return static_cast<int>(w1.cols()); }
    int hidden1() const { return static_cast<int>(w1.rows()); }
    int hidden2() const { return static_cast<int>(w2.rows()); }

    Location predict(const std::vector<double>& pooled) const {
        return forward(pooled).pred;
    }

    std::size_t n_params() const {
        return w1.data().size() + b1.size() + w2.data().size() + b2.size() + w3.data().size() +
               b3.size();
    }

    std::vector<double> flatten() const {
        std::vector<double> flat;
        flat.reserve(n_params());
        for (const auto* block : {&w1.data(), &b1, &w2.data(), &b2, &w3.data(), &b3}) {
            flat.insert(flat.end(), block->begin(), block->end());
        }
        return flat;
    }

    void unflatten(const std::vector<double>& flat) {
        if (flat.size() != n_params()) {
            throw ConfigError("parameter vector length mismatch");
        }
        auto it = flat.begin();
        for (auto* block : {&w1.data(), &b1, &w2.data(), &b2, &w3.data(), &b3}) {
            std::copy(it, it + static_cast<std::ptrdiff_t>(block->size()), block->begin());
            it += static_cast<std::ptrdiff_t>(block->size());
        }
    }

    /// Mean joint_loss over the indexed samples.
    double mean_loss(const std::vector<TrainingSample>& samples,
                     const std::vector<std::size_t>& indices) const {
        double total = 0.0;
        for (std::size_t i : indices) {
            total += joint_loss(predict(samples[i].pooled), samples[i].truth,
                                samples[i].selection);
        }
        return total / static_cast<double>(indices.size());
    }

    double mean_loss(const std::vector<TrainingSample>& samples) const {
        std::vector<std::size_t> all(samples.size());
        std::iota(all.begin(), all.end(), 0);
        return mean_loss(samples, all);
    }

    /// Mean joint_loss over the indexed samples and its gradient w.r.t.
    /// every trainable parameter, flattened in flatten() order. Exposed so
    /// tests can verify the backpropagation against finite differences.
    std::pair<double, std::vector<double>> loss_and_gradient(
        const std::vector<TrainingSample>& samples,
        const std::vector<std::size_t>& indices) const {
        if (indices.empty()) {
            throw ConfigError("gradient needs at least one sample");
        }
        Matrix gw1(w1.rows(), w1.cols());
        Matrix gw2(w2.rows(), w2.cols());
        Matrix gw3(w3.rows(), w3.cols());
        std::vector<double> gb1(b1.size(), 0.0);
        std::vector<double> gb2(b2.size(), 0.0);
        std::vector<double> gb3(b3.size(), 0.0);
        const double inv_n = 1.0 / static_cast<double>(indices.size());
        double total = 0.0;
        for (std::size_t i : indices) {
            const TrainingSample& s = samples[i];
            const Activations act = forward(s.pooled);
            total += squared_distance(act.pred, s.truth) * s.weight;

            // dL/dpred for the mean loss, then back through the affine head.
            const std::array<double, 3> dpred{
                2.0 * inv_n * s.weight * (act.pred.x - s.truth.x),
                2.0 * inv_n * s.weight * (act.pred.y - s.truth.y),
                2.0 * inv_n * s.weight * (act.pred.z - s.truth.z)};
            const std::array<double, 3> du{dpred[0] * out_scale.x, dpred[1] * out_scale.y,
                                           dpred[2] * out_scale.z};

            std::vector<double> da2(b2.size(), 0.0);
            for (std::size_t r = 0; r < 3; ++r) {
                const double* w = w3.row(r);
                double* g = gw3.row(r);
                gb3[r] += du[r];
                for (std::size_t c = 0; c < da2.size(); ++c) {
                    g[c] += du[r] * act.a2[c];
                    da2[c] += w[c] * du[r];
                }
            }
            std::vector<double> da1(b1.size(), 0.0);
            for (std::size_t r = 0; r < da2.size(); ++r) {
                const double dz = da2[r] * (1.0 - act.a2[r] * act.a2[r]);
                const double* w = w2.row(r);
                double* g = gw2.row(r);
                gb2[r] += dz;
                for (std::size_t c = 0; c < da1.size(); ++c) {
                    g[c] += dz * act.a1[c];
                    da1[c] += w[c] * dz;
                }
            }
            for (std::size_t r = 0; r < da1.size(); ++r) {
                const double dz = da1[r] * (1.0 - act.a1[r] * act.a1[r]);
                double* g = gw1.row(r);
                gb1[r] += dz;
                for (std::size_t c = 0; c < s.pooled.size(); ++c) {
                    g[c] += dz * s.pooled[c];
                }
            }
        }
        std::vector<double> grad;
        grad.reserve(n_params());
        for (const auto* block : {&gw1.data(), &gb1, &gw2.data(), &gb2, &gw3.data(), &gb3}) {
            grad.insert(grad.end(), block->begin(), block->end());
        }
        return {total * inv_n, std::move(grad)};
    }

    struct Activations {
        std::vector<double> a1;
        std::vector<double> a2;
        Location pred;
    };

    static Matrix random_layer(std::size_t rows, std::size_t cols, double init_scale,
                               RngStream& rng) {
        Matrix m(rows, cols);
        const double sigma = init_scale / std::sqrt(static_cast<double>(cols));
        for (double& v : m.data()) {
            v = rng.normal(0.0, sigma);
        }
        return m;
    }

    Activations forward(const std::vector<double>& x) const {
        if (x.size() != w1.cols()) {
            throw ConfigError("feature dimension does not match the regressor input");
        }
        Activations act;
        act.a1.resize(b1.size());
        for (std::size_t r = 0; r < b1.size(); ++r) {
            const double* w = w1.row(r);
            double acc = b1[r];
            for (std::size_t c = 0; c < x.size(); ++c) {
                acc += w[c] * x[c];
            }
            act.a1[r] = std::tanh(acc);
        }
        act.a2.resize(b2.size());
        for (std::size_t r = 0; r < b2.size(); ++r) {
            const double* w = w2.row(r);
            double acc = b2[r];
            for (std::size_t c = 0; c < act.a1.size(); ++c) {
                acc += w[c] * act.a1[c];
            }
            act.a2[r] = std::tanh(acc);
        }
        std::array<double, 3> u{};
        for (std::size_t r = 0; r < 3; ++r) {
            const double* w = w3.row(r);
            double acc = b3[r];
            for (std::size_t c = 0; c < act.a2.size(); ++c) {
                acc += w[c] * act.a2[c];
            }
            u[r] = acc;
        }
        act.pred = Location{out_center.x + out_scale.x * u[0], out_center.y + out_scale.y * u[1],
                            out_center.z + out_scale.z * u[2]};
        return act;
    }

    friend bool operator==(const RegressorModel&, const RegressorModel&) = default;
};

/// Training output: the model plus the per-epoch mean training loss curve.
struct FineTrainResult {
    RegressorModel model;
    std::vector<double> epoch_losses;
};

/// Mini-batch ADAM on the mean joint_loss. Deterministic given the seed:
/// initialization and per-epoch shuffles come from dedicated substreams and
/// accumulation order is fixed.
inline FineTrainResult train_fine(const std::vector<TrainingSample>& samples,
                                  const FineTrainParams& params, const Box& floor,
                                  std::uint64_t seed, const std::string& config_hash) {
    params.validate();
    if (samples.size() < 10) {
        throw ConfigError("fine training needs at least 10 samples");
    }
    const std::size_t input_dim = samples.front().pooled.size();
    for (const TrainingSample& s : samples) {
        if (s.pooled.size() != input_dim) {
            throw ConfigError("training samples disagree on feature dimension");
        }
    }

    RngStream init_stream(seed, StreamKind::kFineInit, 0);
    FineTrainResult out;
    out.model = RegressorModel::init(static_cast<int>(input_dim), params, floor, init_stream);

    std::vector<double> theta = out.model.flatten();
    std::vector<double> m(theta.size(), 0.0);
    std::vector<double> v(theta.size(), 0.0);
    long step = 0;
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < params.epochs; ++epoch) {
        RngStream shuffle_stream(seed, StreamKind::kFineShuffle,
                                 static_cast<std::uint64_t>(epoch));
        std::iota(order.begin(), order.end(), 0);
        shuffle_stream.shuffle(order);

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(params.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(params.batch_size));
            const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                 order.begin() + static_cast<std::ptrdiff_t>(stop));
            auto [loss, grad] = out.model.loss_and_gradient(samples, batch);
            if (!std::isfinite(loss)) {
                throw DivergenceError("non-finite fine training loss (epoch " +
                                          std::to_string(epoch) + ", batch " +
                                          std::to_string(start / params.batch_size) + ")",
                                      step);
            }
            loss_sum += loss * static_cast<double>(batch.size());
            ++step;
            const double bc1 = 1.0 - std::pow(params.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(params.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = params.beta1 * m[i] + (1.0 - params.beta1) * grad[i];
                v[i] = params.beta2 * v[i] + (1.0 - params.beta2) * grad[i] * grad[i];
                theta[i] -= params.learning_rate * (m[i] / bc1) /
                            (std::sqrt(v[i] / bc2) + params.epsilon);
            }
            out.model.unflatten(theta);
        }
        out.epoch_losses.push_back(loss_sum / static_cast<double>(samples.size()));
    }

    out.model.epochs_trained = params.epochs;
    out.model.final_mean_loss = out.model.mean_loss(samples);
    out.model.config_hash = config_hash;
    return out;
}

/// Enforces the membership constraint: pred unchanged when already inside a
/// selected area, otherwise the Euclidean-nearest point on the union of the
/// selected boxes (ties by lower area index).
inline Location project_to_area(const Location& pred, const CandidateSelection& selection,
                                const AreaPartition& partition) {
    if (selection.area_indices.empty()) {
        throw ConfigError("candidate selection must be non-empty");
    }
    Location best{};
    double best_d = -1.0;
    int best_area = -1;
    for (int area : selection.area_indices) {
        if (area < 0 || area >= partition.n_areas()) {
            throw ConfigError("selection references unknown area " + std::to_string(area));
        }
        const Location candidate = partition.area(area).bounds.clamp(pred);
        const double d = squared_distance(pred, candidate);
        if (best_d < 0.0 || d < best_d || (d == best_d && area < best_area)) {
            best = candidate;
            best_d = d;
            best_area = area;
        }
    }
    return best;
}

/// The whole fine stage g(.): pool, regress, project into A*.
inline Location fine_localize(const ImageFeatures& img, const RegressorModel& model,
                              const CandidateSelection& selection,
                              const AreaPartition& partition) {
    return project_to_area(model.predict(pool_features(img)), selection, partition);
}

// ---- persistence ----

inline void save_fine_model(const RegressorModel& model, const std::string& path,
                            std::uint64_t seed) {
    const json record{{"input_dim", model.input_dim()},
                      {"hidden1", model.hidden1()},
                      {"hidden2", model.hidden2()},
                      {"w1", model.w1.data()},
                      {"b1", model.b1},
                      {"w2", model.w2.data()},
                      {"b2", model.b2},
                      {"w3", model.w3.data()},
                      {"b3", model.b3},
                      {"output_center", detail::location_obj(model.out_center)},
                      {"output_scale", detail::location_obj(model.out_scale)},
                      {"epochs", model.epochs_trained},
                      {"final_loss", model.final_mean_loss}};
    write_jsonl(path, EnvelopeHeader{kSchemaVersion, "fine_model", model.config_hash, seed},
                {record});
}

inline std::pair<RegressorModel, EnvelopeHeader> load_fine_model(
    const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt) {
    auto [header, records] = read_jsonl(path, "fine_model", expected_hash);
    if (records.size() != 1) {
        throw MalformedLineError("fine model file must hold exactly one record",
                                 records.size() + 1);
    }
    const json& r = records.front();
    const auto input_dim = detail::record_field<std::size_t>(r, "input_dim", 2);
    const auto h1 = detail::record_field<std::size_t>(r, "hidden1", 2);
    const auto h2 = detail::record_field<std::size_t>(r, "hidden2", 2);
    RegressorModel model;
    model.w1 = detail::matrix_from_flat(detail::record_field<std::vector<double>>(r, "w1", 2), h1,
                                        input_dim, 2);
    model.b1 = detail::record_field<std::vector<double>>(r, "b1", 2);
    model.w2 = detail::matrix_from_flat(detail::record_field<std::vector<double>>(r, "w2", 2), h2,
                                        h1, 2);
    model.b2 = detail::record_field<std::vector<double>>(r, "b2", 2);
    model.w3 = detail::matrix_from_flat(detail::record_field<std::vector<double>>(r, "w3", 2), 3,
                                        h2, 2);
    model.b3 = detail::record_field<std::vector<double>>(r, "b3", 2);
    if (model.b1.size() != h1 || model.b2.size() != h2 || model.b3.size() != 3) {
        throw MalformedLineError("bias lengths do not match the declared layer sizes", 2);
    }
    model.out_center =
        detail::location_from_obj(detail::record_field<json>(r, "output_center", 2), 2);
    model.out_scale =
        detail::location_from_obj(detail::record_field<json>(r, "output_scale", 2), 2);
    if (!model.w1.all_finite() || !model.w2.all_finite() || !model.w3.all_finite()) {
        throw MalformedLineError("model weights must be finite", 2);
    }
    model.epochs_trained = detail::record_field<int>(r, "epochs", 2);
    model.final_mean_loss = detail::record_field<double>(r, "final_loss", 2);
    model.config_hash = header.config_hash;
    return {model, header};
}

}  // namespace wvloc
