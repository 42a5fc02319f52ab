#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wvloc/config.hpp"
#include "wvloc/database.hpp"
#include "wvloc/errors.hpp"
#include "wvloc/matrix.hpp"
#include "wvloc/partition.hpp"
#include "wvloc/serialization.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

/// Reduces the N_s x N_AP sample block to the classifier input: per-AP mean
/// RSSI followed by a constant 1 for the bias weight.
inline std::vector<double> featurize(const RssiObservation& obs) {
    std::vector<double> feat(obs.n_ap() + 1, 0.0);
    const Matrix& m = obs.samples();
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            feat[c] += row[c];
        }
    }
    for (std::size_t c = 0; c < m.cols(); ++c) {
        feat[c] /= static_cast<double>(m.rows());
    }
    feat.back() = 1.0;
    return feat;
}

/// Multinomial logistic model over mean-RSSI features: linear scores
/// W (N_RP x (N_AP+1)) against [mean RSSI..., 1], softmaxed into Eq. (1)
/// likelihoods.
struct RpClassifierModel {
    Matrix weights;
    int iterations = 0;
    double final_loss = 0.0;
    std::string config_hash;

    int n_rp() const { return static_cast<int>(weights.rows()); }
    int n_ap() const { return static_cast<int>(weights.cols()) - 1; }

    friend bool operator==(const RpClassifierModel&, const RpClassifierModel&) = default;
};

namespace detail {

inline std::vector<double> softmax(std::vector<double> scores) {
    const double hi = *std::max_element(scores.begin(), scores.end());
    double sum = 0.0;
    for (double& s : scores) {
        s = std::exp(s - hi);
        sum += s;
    }
    for (double& s : scores) {
        s /= sum;
    }
    return scores;
}

}  // namespace detail

/// Mean cross-entropy over (features, labels) plus (l2/2)*||W||^2 with the
/// bias column excluded, and its gradient in W. Exposed so tests can check
/// the gradient against finite differences.
struct CeLossGrad {
    double loss = 0.0;
    Matrix grad;
};

inline CeLossGrad ce_loss_and_gradient(const Matrix& weights, const Matrix& features,
                                       const std::vector<int>& labels, double l2) {
    if (features.rows() != labels.size() || features.cols() != weights.cols()) {
        throw ConfigError("feature/label/weight dimensions disagree");
    }
    const std::size_t n = features.rows();
    const std::size_t k = weights.rows();
    const std::size_t d = weights.cols();
    CeLossGrad out;
    out.grad = Matrix(k, d);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = features.row(i);
        std::vector<double> scores(k, 0.0);
        for (std::size_t c = 0; c < k; ++c) {
            const double* w = weights.row(c);
            double acc = 0.0;
            for (std::size_t f = 0; f < d; ++f) {
                acc += w[f] * x[f];
            }
            scores[c] = acc;
        }
        const std::vector<double> p = detail::softmax(std::move(scores));
        const auto label = static_cast<std::size_t>(labels[i]);
        out.loss -= std::log(std::max(p[label], 1e-300));
        for (std::size_t c = 0; c < k; ++c) {
            const double coeff = p[c] - (c == label ? 1.0 : 0.0);
            double* g = out.grad.row(c);
            for (std::size_t f = 0; f < d; ++f) {
                g[f] += coeff * x[f];
            }
        }
    }
    out.loss /= static_cast<double>(n);
    for (double& g : out.grad.data()) {
        g /= static_cast<double>(n);
    }
    for (std::size_t c = 0; c < k; ++c) {
        const double* w = weights.row(c);
        double* g = out.grad.row(c);
        for (std::size_t f = 0; f + 1 < d; ++f) {  // bias column unregularized
            out.loss += 0.5 * l2 * w[f] * w[f];
            g[f] += l2 * w[f];
        }
    }
    return out;
}

/// Trains the RP classifier by full-batch fixed-step gradient descent.
/// Features are standardized internally for conditioning and the learned
/// weights are folded back to raw dBm space, so the stored model scores
/// featurize() output directly. Deterministic; no randomness is consumed.
inline RpClassifierModel train_classifier(const WifiDb& db, const CoarseTrainParams& params,
                                          const std::string& config_hash,
                                          std::vector<double>* checkpoint_losses = nullptr) {
    params.validate();
    if (db.n_rp() < 2) {
        throw ConfigError("training needs at least two reference points");
    }
    const std::size_t d = static_cast<std::size_t>(db.n_ap()) + 1;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    for (const WifiDbEntry& e : db.entries) {
        for (const RssiObservation& o : e.observations) {
            rows.push_back(featurize(o));
            labels.push_back(e.rp.index);
        }
    }
    Matrix x = Matrix::from_rows(rows);

    // Standardize the RSSI columns (not the bias) so one fixed step suits
    // every AP scale.
    std::vector<double> mean(d - 1, 0.0);
    std::vector<double> stddev(d - 1, 1.0);
    for (std::size_t c = 0; c + 1 < d; ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            m += x(r, c);
        }
        m /= static_cast<double>(x.rows());
        double var = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            var += (x(r, c) - m) * (x(r, c) - m);
        }
        var /= static_cast<double>(x.rows());
        mean[c] = m;
        stddev[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            x(r, c) = (x(r, c) - mean[c]) / stddev[c];
        }
    }

    Matrix w(static_cast<std::size_t>(db.n_rp()), d);
    int iterations = 0;
    double loss = 0.0;
    for (int it = 0; it < params.max_iterations; ++it) {
        CeLossGrad lg = ce_loss_and_gradient(w, x, labels, params.l2);
        loss = lg.loss;
        if (!std::isfinite(loss)) {
            throw DivergenceError("non-finite coarse training loss", it);
        }
        if (checkpoint_losses && it % params.checkpoint_every == 0) {
            checkpoint_losses->push_back(loss);
        }
        double grad_norm_sq = 0.0;
        for (double g : lg.grad.data()) {
            grad_norm_sq += g * g;
        }
        if (std::sqrt(grad_norm_sq) < params.grad_tolerance) {
            break;
        }
        for (std::size_t i = 0; i < w.data().size(); ++i) {
            w.data()[i] -= params.learning_rate * lg.grad.data()[i];
        }
        iterations = it + 1;
    }
    loss = ce_loss_and_gradient(w, x, labels, params.l2).loss;
    if (checkpoint_losses) {
        checkpoint_losses->push_back(loss);
    }

    // Fold the standardization into the weights: W_raw[:, c] = W[:, c]/sigma_c,
    // bias_raw = bias - sum_c W[:, c]*mu_c/sigma_c, so raw scores equal
    // standardized scores for every input.
    RpClassifierModel model;
    model.weights = Matrix(w.rows(), d);
    for (std::size_t k = 0; k < w.rows(); ++k) {
        double bias = w(k, d - 1);
        for (std::size_t c = 0; c + 1 < d; ++c) {
            model.weights(k, c) = w(k, c) / stddev[c];
            bias -= w(k, c) * mean[c] / stddev[c];
        }
        model.weights(k, d - 1) = bias;
    }
    model.iterations = iterations;
    model.final_loss = loss;
    model.config_hash = config_hash;
    return model;
}

/// Eq. (1): likelihood over reference points for one observation.
inline LikelihoodVector rp_likelihoods(const RssiObservation& obs,
                                       const RpClassifierModel& model) {
    if (static_cast<int>(obs.n_ap()) != model.n_ap()) {
        throw ConfigError("observation has " + std::to_string(obs.n_ap()) +
                          " APs, model expects " + std::to_string(model.n_ap()));
    }
    const std::vector<double> feat = featurize(obs);
    std::vector<double> scores(model.weights.rows(), 0.0);
    for (std::size_t k = 0; k < model.weights.rows(); ++k) {
        const double* w = model.weights.row(k);
        double acc = 0.0;
        for (std::size_t c = 0; c < feat.size(); ++c) {
            acc += w[c] * feat[c];
        }
        scores[k] = acc;
    }
    return LikelihoodVector(detail::softmax(std::move(scores)));
}

/// Eq. (2): area likelihood = sum of member-RP likelihoods.
inline LikelihoodVector area_likelihoods(const LikelihoodVector& p_rp,
                                         const AreaPartition& partition) {
    if (p_rp.size() != partition.rp_membership().size()) {
        throw ConfigError("likelihood length does not match the partition's RP count");
    }
    std::vector<double> p_a(static_cast<std::size_t>(partition.n_areas()), 0.0);
    for (std::size_t i = 0; i < p_rp.size(); ++i) {
        p_a[static_cast<std::size_t>(partition.area_of_rp(static_cast<int>(i)))] += p_rp[i];
    }
    return LikelihoodVector(std::move(p_a));
}

/// Eq. (3)-(4): retain the j_star most likely areas, descending by
/// probability with ties broken by lower area index.
inline CandidateSelection select_candidate_areas(const LikelihoodVector& p_a, int j_star) {
    if (j_star < 1 || j_star > static_cast<int>(p_a.size())) {
        throw ConfigError("j_star must lie in [1, " + std::to_string(p_a.size()) + "]");
    }
    std::vector<int> order(p_a.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double pa = p_a[static_cast<std::size_t>(a)];
        const double pb = p_a[static_cast<std::size_t>(b)];
        if (pa != pb) return pa > pb;
        return a < b;
    });
    CandidateSelection sel;
    for (int j = 0; j < j_star; ++j) {
        sel.area_indices.push_back(order[static_cast<std::size_t>(j)]);
        sel.probs.push_back(p_a[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])]);
    }
    return sel;
}

/// The whole coarse stage f(.): Eq. (1) -> Eq. (2) -> Eq. (3)-(4).
inline CandidateSelection coarse_localize(const RssiObservation& obs,
                                          const RpClassifierModel& model,
                                          const AreaPartition& partition, int j_star) {
    return select_candidate_areas(area_likelihoods(rp_likelihoods(obs, model), partition),
                                  j_star);
}

/// Baseline 1, WiFi-only localization: the likelihood-weighted centroid of
/// the RP locations (or the argmax RP's location when use_argmax is set).
inline Location baseline_wifi_only(const RssiObservation& obs, const RpClassifierModel& model,
                                   const std::vector<ReferencePoint>& rps,
                                   bool use_argmax = false) {
    const LikelihoodVector p = rp_likelihoods(obs, model);
    if (p.size() != rps.size()) {
        throw ConfigError("model RP count does not match the reference point list");
    }
    if (use_argmax) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < p.size(); ++i) {
            if (p[i] > p[best]) best = i;  // ties keep the lower index
        }
        for (const ReferencePoint& rp : rps) {
            if (static_cast<std::size_t>(rp.index) == best) return rp.location;
        }
        throw ConfigError("reference point list is missing index " + std::to_string(best));
    }
    Location out{0.0, 0.0, 0.0};
    for (const ReferencePoint& rp : rps) {
        out = out + p[static_cast<std::size_t>(rp.index)] * rp.location;
    }
    return out;
}

// ---- persistence ----

inline void save_coarse_model(const RpClassifierModel& model, const std::string& path,
                              std::uint64_t seed) {
    const json record{{"n_rp", model.n_rp()},
                      {"n_ap", model.n_ap()},
                      {"weights", model.weights.data()},
                      {"iterations", model.iterations},
                      {"final_loss", model.final_loss}};
    write_jsonl(path, EnvelopeHeader{kSchemaVersion, "coarse_model", model.config_hash, seed},
                {record});
}

inline std::pair<RpClassifierModel, EnvelopeHeader> load_coarse_model(
    const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt) {
    auto [header, records] = read_jsonl(path, "coarse_model", expected_hash);
    if (records.size() != 1) {
        throw MalformedLineError("coarse model file must hold exactly one record",
                                 records.size() + 1);
    }
    const json& r = records.front();
    const auto n_rp = detail::record_field<std::size_t>(r, "n_rp", 2);
    const auto n_ap = detail::record_field<std::size_t>(r, "n_ap", 2);
    RpClassifierModel model;
    model.weights = detail::matrix_from_flat(
        detail::record_field<std::vector<double>>(r, "weights", 2), n_rp, n_ap + 1, 2);
    if (!model.weights.all_finite()) {
        throw MalformedLineError("model weights must be finite", 2);
    }
    model.iterations = detail::record_field<int>(r, "iterations", 2);
    model.final_loss = detail::record_field<double>(r, "final_loss", 2);
    model.config_hash = header.config_hash;
    return {model, header};
}

}  // namespace wvloc
