// coarse-locator: featurization, classifier training, the Eq. (1)-(4) chain,
// and the WiFi-only baseline.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "wvloc/wvloc.hpp"

using namespace wvloc;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

RssiObservation const_obs(std::size_t n_s, std::size_t n_ap, double v) {
    return RssiObservation(Matrix(n_s, n_ap, v));
}

// A model with explicit weights (bypassing training) for pure-math tests.
RpClassifierModel model_with(Matrix w) {
    RpClassifierModel m;
    m.weights = std::move(w);
    return m;
}

// Reference gradient-descent loop, written independently of the library:
// same hyperparameters, same standardization contract, plain exponentials.
Matrix reference_train(const std::vector<std::vector<double>>& feats,
                       const std::vector<int>& labels, int n_classes,
                       const CoarseTrainParams& hp) {
    const std::size_t n = feats.size();
    const std::size_t d = feats.front().size();
    // Standardize all but the last (bias) column, population variance.
    std::vector<double> mu(d - 1, 0.0), sigma(d - 1, 1.0);
    std::vector<std::vector<double>> x = feats;
    for (std::size_t c = 0; c + 1 < d; ++c) {
        double m = 0.0;
        for (std::size_t r = 0; r < n; ++r) m += x[r][c];
        m /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t r = 0; r < n; ++r) var += (x[r][c] - m) * (x[r][c] - m);
        var /= static_cast<double>(n);
        mu[c] = m;
        sigma[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
        for (std::size_t r = 0; r < n; ++r) x[r][c] = (x[r][c] - mu[c]) / sigma[c];
    }

    std::vector<std::vector<double>> w(static_cast<std::size_t>(n_classes),
                                       std::vector<double>(d, 0.0));
    auto loss_grad = [&](std::vector<std::vector<double>>& grad) {
        for (auto& row : grad) std::fill(row.begin(), row.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> p(w.size());
            double z = 0.0;
            for (std::size_t k = 0; k < w.size(); ++k) {
                double s = 0.0;
                for (std::size_t f = 0; f < d; ++f) s += w[k][f] * x[i][f];
                p[k] = std::exp(s);
                z += p[k];
            }
            for (double& v : p) v /= z;
            for (std::size_t k = 0; k < w.size(); ++k) {
                const double coeff =
                    p[k] - (static_cast<int>(k) == labels[i] ? 1.0 : 0.0);
                for (std::size_t f = 0; f < d; ++f) grad[k][f] += coeff * x[i][f];
            }
        }
        for (auto& row : grad) {
            for (double& g : row) g /= static_cast<double>(n);
        }
        for (std::size_t k = 0; k < w.size(); ++k) {
            for (std::size_t f = 0; f + 1 < d; ++f) grad[k][f] += hp.l2 * w[k][f];
        }
    };

    std::vector<std::vector<double>> grad = w;
    for (int it = 0; it < hp.max_iterations; ++it) {
        loss_grad(grad);
        double norm2 = 0.0;
        for (const auto& row : grad) {
            for (double g : row) norm2 += g * g;
        }
        if (std::sqrt(norm2) < hp.grad_tolerance) break;
        for (std::size_t k = 0; k < w.size(); ++k) {
            for (std::size_t f = 0; f < d; ++f) w[k][f] -= hp.learning_rate * grad[k][f];
        }
    }

    // Fold the standardization back into raw-space weights.
    Matrix raw(static_cast<std::size_t>(n_classes), d);
    for (std::size_t k = 0; k < w.size(); ++k) {
        double bias = w[k][d - 1];
        for (std::size_t c = 0; c + 1 < d; ++c) {
            raw(k, c) = w[k][c] / sigma[c];
            bias -= w[k][c] * mu[c] / sigma[c];
        }
        raw(k, d - 1) = bias;
    }
    return raw;
}

}  // namespace

TEST_CASE("featurize: constant matrix gives constant means plus bias", "[coarse]") {
    const std::vector<double> f = featurize(const_obs(50, 5, -50.0));
    REQUIRE(f.size() == 6);
    for (int c = 0; c < 5; ++c) {
        CHECK_THAT(f[static_cast<std::size_t>(c)], WithinAbs(-50.0, 1e-12));
    }
    CHECK_THAT(f[5], WithinAbs(1.0, 1e-12));
}

TEST_CASE("featurize: single sample passes through", "[coarse]") {
    Matrix m(1, 3);
    m(0, 0) = -40.0;
    m(0, 1) = -55.5;
    m(0, 2) = -70.25;
    const std::vector<double> f = featurize(RssiObservation(m));
    CHECK(f == std::vector<double>{-40.0, -55.5, -70.25, 1.0});
}

TEST_CASE("featurize: random matrix matches per-column average oracle", "[coarse][oracle]") {
    oracle::TestRng rng(301);
    Matrix m(50, 5);
    for (std::size_t r = 0; r < 50; ++r) {
        for (std::size_t c = 0; c < 5; ++c) m(r, c) = oracle::uniform(rng, -110.0, -10.0);
    }
    const std::vector<double> f = featurize(RssiObservation(m));
    const std::vector<double> expected = oracle::column_means(m);
    REQUIRE(f.size() == 6);
    for (std::size_t c = 0; c < 5; ++c) {
        CHECK_THAT(f[c], WithinRel(expected[c], 1e-12));
    }
    CHECK(f[5] == 1.0);
}

TEST_CASE("train_classifier: two separable RPs reach training accuracy 1", "[coarse]") {
    ChannelParams ch;
    ch.shadowing_sigma = 0.0;
    const std::vector<Location> aps{{0, 0, 0}, {10, 0, 0}};
    RngStream s(1);
    std::vector<WifiDbEntry> entries;
    entries.push_back({{0, {1, 0, 0}}, {synth_rssi(ch, aps, {1, 0, 0}, 5, s)}});
    entries.push_back({{1, {9, 0, 0}}, {synth_rssi(ch, aps, {9, 0, 0}, 5, s)}});
    const WifiDb db = build_wifi_db(std::move(entries));
    const RpClassifierModel model = train_classifier(db, CoarseTrainParams{}, "h");
    for (const WifiDbEntry& e : db.entries) {
        const LikelihoodVector p = rp_likelihoods(e.observations.front(), model);
        const auto argmax = static_cast<int>(
            std::max_element(p.probs().begin(), p.probs().end()) - p.probs().begin());
        CHECK(argmax == e.rp.index);
    }
}

TEST_CASE("train_classifier: default config yields 24 x 6 weights", "[coarse]") {
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    std::vector<double> checkpoints;
    const RpClassifierModel model =
        train_classifier(sr.wifi, cfg.coarse_training, cfg.hash(), &checkpoints);
    CHECK(model.weights.rows() == 24);
    CHECK(model.weights.cols() == 6);
    CHECK(model.config_hash == cfg.hash());
    // Checkpointed losses are monotone non-increasing.
    REQUIRE(checkpoints.size() >= 2);
    for (std::size_t i = 1; i < checkpoints.size(); ++i) {
        CHECK(checkpoints[i] <= checkpoints[i - 1] + 1e-12);
    }
}

TEST_CASE("train_classifier: tiny case matches the reference loop within 1e-4",
          "[coarse][oracle]") {
    // 3 RPs, 2 APs (2-D features + bias), one observation each.
    oracle::TestRng rng(302);
    std::vector<WifiDbEntry> entries;
    std::vector<std::vector<double>> feats;
    std::vector<int> labels;
    const double sig[3][2] = {{-35.0, -80.0}, {-60.0, -60.0}, {-85.0, -30.0}};
    for (int i = 0; i < 3; ++i) {
        Matrix m(1, 2);
        m(0, 0) = sig[i][0] + oracle::uniform(rng, -1.0, 1.0);
        m(0, 1) = sig[i][1] + oracle::uniform(rng, -1.0, 1.0);
        entries.push_back({{i, {static_cast<double>(i), 0, 0}}, {RssiObservation(m)}});
        feats.push_back({m(0, 0), m(0, 1), 1.0});
        labels.push_back(i);
    }
    CoarseTrainParams hp;
    hp.max_iterations = 500;  // keep the oracle loop cheap
    const WifiDb db = build_wifi_db(std::move(entries));
    const RpClassifierModel model = train_classifier(db, hp, "h");
    const Matrix expected = reference_train(feats, labels, 3, hp);
    REQUIRE(model.weights.rows() == expected.rows());
    REQUIRE(model.weights.cols() == expected.cols());
    for (std::size_t k = 0; k < expected.rows(); ++k) {
        for (std::size_t c = 0; c < expected.cols(); ++c) {
            CHECK_THAT(model.weights(k, c), WithinAbs(expected(k, c), 1e-4));
        }
    }
}

TEST_CASE("train_classifier: single RP rejected; huge step diverges", "[coarse]") {
    oracle::TestRng rng(303);
    Matrix m(2, 2, -50.0);
    const WifiDb one = build_wifi_db({{{0, {0, 0, 0}}, {RssiObservation(m)}}});
    CHECK_THROWS_AS(train_classifier(one, CoarseTrainParams{}, "h"), ConfigError);

    std::vector<WifiDbEntry> entries;
    for (int i = 0; i < 3; ++i) {
        Matrix mi(1, 2);
        mi(0, 0) = -30.0 - 20.0 * i + oracle::uniform(rng, -0.5, 0.5);
        mi(0, 1) = -70.0 + 20.0 * i + oracle::uniform(rng, -0.5, 0.5);
        entries.push_back({{i, {static_cast<double>(i), 0, 0}}, {RssiObservation(mi)}});
    }
    const WifiDb db = build_wifi_db(std::move(entries));
    CoarseTrainParams wild;
    wild.learning_rate = 1e155;  // overflows the scores within a few steps
    CHECK_THROWS_AS(train_classifier(db, wild, "h"), DivergenceError);
}

TEST_CASE("ce gradient matches finite differences on 10 random models", "[coarse][oracle]") {
    oracle::TestRng rng(304);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t k = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 4));
        const std::size_t d = static_cast<std::size_t>(oracle::uniform_int(rng, 2, 4));
        const std::size_t n = static_cast<std::size_t>(oracle::uniform_int(rng, 3, 8));
        Matrix w(k, d), x(n, d);
        std::vector<int> labels(n);
        for (double& v : w.data()) v = oracle::uniform(rng, -1.0, 1.0);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) x(r, c) = oracle::uniform(rng, -1.0, 1.0);
            labels[r] = oracle::uniform_int(rng, 0, static_cast<int>(k) - 1);
        }
        const double l2 = 1e-3;
        const CeLossGrad lg = ce_loss_and_gradient(w, x, labels, l2);
        const double h = 1e-6;
        for (std::size_t k2 = 0; k2 < k; ++k2) {
            for (std::size_t c = 0; c < d; ++c) {
                Matrix wp = w, wm = w;
                wp(k2, c) += h;
                wm(k2, c) -= h;
                const double fd = (ce_loss_and_gradient(wp, x, labels, l2).loss -
                                   ce_loss_and_gradient(wm, x, labels, l2).loss) /
                                  (2.0 * h);
                const double scale = std::max({1.0, std::abs(fd), std::abs(lg.grad(k2, c))});
                CHECK_THAT(lg.grad(k2, c), WithinAbs(fd, 1e-5 * scale));
            }
        }
    }
}

TEST_CASE("rp_likelihoods: zero weights give the uniform distribution", "[coarse]") {
    const RpClassifierModel model = model_with(Matrix(24, 6, 0.0));
    const LikelihoodVector p = rp_likelihoods(const_obs(5, 5, -60.0), model);
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK_THAT(p[i], WithinRel(1.0 / 24.0, 1e-12));
    }
}

TEST_CASE("rp_likelihoods: noise-free fingerprint maps back to its RP", "[coarse]") {
    ExperimentConfig cfg;
    cfg.channel.shadowing_sigma = 0.0;
    const SurveyResult sr = run_survey(cfg);
    const RpClassifierModel model = train_classifier(sr.wifi, cfg.coarse_training, cfg.hash());
    for (const WifiDbEntry& e : sr.wifi.entries) {
        const LikelihoodVector p = rp_likelihoods(e.observations.front(), model);
        const auto argmax = static_cast<int>(
            std::max_element(p.probs().begin(), p.probs().end()) - p.probs().begin());
        CHECK(argmax == e.rp.index);
    }
}

TEST_CASE("rp_likelihoods: 1000 random inputs stay on the simplex", "[coarse]") {
    oracle::TestRng rng(305);
    Matrix w(24, 6);
    for (double& v : w.data()) v = oracle::uniform(rng, -0.5, 0.5);
    const RpClassifierModel model = model_with(std::move(w));
    for (int i = 0; i < 1000; ++i) {
        Matrix m(3, 5);
        for (double& v : m.data()) v = oracle::uniform(rng, -110.0, -10.0);
        const LikelihoodVector p = rp_likelihoods(RssiObservation(m), model);
        double sum = 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            CHECK(p[j] >= 0.0);
            sum += p[j];
        }
        CHECK_THAT(sum, WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("rp_likelihoods: dimension mismatch rejected", "[coarse]") {
    const RpClassifierModel model = model_with(Matrix(4, 6, 0.0));  // expects 5 APs
    CHECK_THROWS_AS(rp_likelihoods(const_obs(2, 3, -60.0), model), ConfigError);
}

TEST_CASE("area_likelihoods: uniform over 4 RPs in 2 areas halves", "[coarse]") {
    const Box floor{{0, 0, 0}, {4, 1, 1}};
    std::vector<ReferencePoint> rps{{0, {0.5, 0.5, 0.5}},
                                    {1, {1.5, 0.5, 0.5}},
                                    {2, {2.5, 0.5, 0.5}},
                                    {3, {3.5, 0.5, 0.5}}};
    const AreaPartition part = make_grid_partition(floor, 2, 1, rps);
    const LikelihoodVector p_a =
        area_likelihoods(LikelihoodVector{{0.25, 0.25, 0.25, 0.25}}, part);
    REQUIRE(p_a.size() == 2);
    CHECK_THAT(p_a[0], WithinAbs(0.5, 1e-12));
    CHECK_THAT(p_a[1], WithinAbs(0.5, 1e-12));
}

TEST_CASE("area_likelihoods: point mass lands on the member area", "[coarse]") {
    const Box floor{{0, 0, 0}, {4, 1, 1}};
    std::vector<ReferencePoint> rps{{0, {0.5, 0.5, 0.5}},
                                    {1, {1.5, 0.5, 0.5}},
                                    {2, {2.5, 0.5, 0.5}},
                                    {3, {3.5, 0.5, 0.5}}};
    const AreaPartition part = make_grid_partition(floor, 4, 1, rps);
    const LikelihoodVector p_a = area_likelihoods(LikelihoodVector{{0, 0, 1, 0}}, part);
    CHECK_THAT(p_a[2], WithinAbs(1.0, 1e-12));
}

TEST_CASE("area_likelihoods: random simplex matches the double-loop oracle",
          "[coarse][oracle]") {
    oracle::TestRng rng(306);
    const ExperimentConfig cfg;
    const AreaPartition part =
        make_grid_partition(cfg.floor, cfg.n_areas_x, cfg.n_areas_y, rp_grid(cfg));
    for (int trial = 0; trial < 200; ++trial) {
        const std::vector<double> p = oracle::random_simplex(rng, 24);
        const LikelihoodVector p_a = area_likelihoods(LikelihoodVector{p}, part);
        const std::vector<double> expected =
            oracle::area_aggregate(p, part.rp_membership(), 15);
        double sum = 0.0;
        for (std::size_t j = 0; j < 15; ++j) {
            CHECK_THAT(p_a[j], WithinAbs(expected[j], 1e-12));
            sum += p_a[j];
        }
        CHECK_THAT(sum, WithinAbs(1.0, 1e-9));  // simplex preserved
    }
}

TEST_CASE("select_candidate_areas: hand-checkable example", "[coarse]") {
    const LikelihoodVector p{{0.1, 0.4, 0.3, 0.2}};
    const CandidateSelection sel = select_candidate_areas(p, 2);
    CHECK(sel.area_indices == std::vector<int>{1, 2});
    REQUIRE(sel.probs.size() == 2);
    CHECK_THAT(sel.probs[0], WithinAbs(0.4, 1e-12));
    CHECK_THAT(sel.probs[1], WithinAbs(0.3, 1e-12));
}

TEST_CASE("select_candidate_areas: j_star = N_A selects everything", "[coarse]") {
    const LikelihoodVector p{{0.1, 0.4, 0.3, 0.2}};
    const CandidateSelection sel = select_candidate_areas(p, 4);
    CHECK(sel.size() == 4);
    CHECK(sel.area_indices == std::vector<int>{1, 2, 3, 0});
}

TEST_CASE("select_candidate_areas: bounds checked", "[coarse]") {
    const LikelihoodVector p{{0.5, 0.5}};
    CHECK_THROWS_AS(select_candidate_areas(p, 0), ConfigError);
    CHECK_THROWS_AS(select_candidate_areas(p, 3), ConfigError);
}

TEST_CASE("select_candidate_areas: 1000 random vectors match the sort oracle",
          "[coarse][oracle]") {
    oracle::TestRng rng(307);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = static_cast<std::size_t>(oracle::uniform_int(rng, 4, 16));
        std::vector<double> p = oracle::random_simplex(rng, n);
        // A third of the cases get duplicated values to exercise ties.
        if (trial % 3 == 0 && n >= 4) {
            p[1] = p[0];
            p[3] = p[2];
            double sum = 0.0;
            for (double v : p) sum += v;
            for (double& v : p) v /= sum;
        }
        const int j_star = oracle::uniform_int(rng, 1, static_cast<int>(n));
        const CandidateSelection sel = select_candidate_areas(LikelihoodVector{p}, j_star);
        const auto [oidx, oprobs] = oracle::top_k(p, j_star);
        CHECK(sel.area_indices == oidx);
        for (std::size_t i = 0; i < oprobs.size(); ++i) {
            CHECK_THAT(sel.probs[i], WithinAbs(oprobs[i], 1e-15));
        }
        // Retained minimum >= discarded maximum.
        double discarded_max = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (std::find(oidx.begin(), oidx.end(), static_cast<int>(i)) == oidx.end()) {
                discarded_max = std::max(discarded_max, p[i]);
            }
        }
        CHECK(sel.probs.back() >= discarded_max - 1e-15);
    }
}

TEST_CASE("coarse_localize equals the manual three-stage composition", "[coarse]") {
    oracle::TestRng rng(308);
    const ExperimentConfig cfg;
    const AreaPartition part =
        make_grid_partition(cfg.floor, cfg.n_areas_x, cfg.n_areas_y, rp_grid(cfg));
    Matrix w(24, 6);
    for (double& v : w.data()) v = oracle::uniform(rng, -0.5, 0.5);
    const RpClassifierModel model = model_with(std::move(w));
    for (int i = 0; i < 100; ++i) {
        Matrix m(5, 5);
        for (double& v : m.data()) v = oracle::uniform(rng, -110.0, -10.0);
        const RssiObservation obs(m);
        const CandidateSelection composed = coarse_localize(obs, model, part, cfg.j_star);
        const CandidateSelection manual = select_candidate_areas(
            area_likelihoods(rp_likelihoods(obs, model), part), cfg.j_star);
        CHECK(composed == manual);
    }
}

TEST_CASE("coarse_localize: noise-free query at an RP selects its area", "[coarse]") {
    ExperimentConfig cfg;
    cfg.channel.shadowing_sigma = 0.0;
    const SurveyResult sr = run_survey(cfg);
    const RpClassifierModel model = train_classifier(sr.wifi, cfg.coarse_training, cfg.hash());
    for (const WifiDbEntry& e : sr.wifi.entries) {
        const CandidateSelection sel =
            coarse_localize(e.observations.front(), model, sr.partition, cfg.j_star);
        const int truth = sr.partition.area_of_rp(e.rp.index);
        CHECK(std::find(sel.area_indices.begin(), sel.area_indices.end(), truth) !=
              sel.area_indices.end());
    }
}

TEST_CASE("coarse_localize: uniform model selects the first j_star areas", "[coarse]") {
    const ExperimentConfig cfg;
    const AreaPartition part =
        make_grid_partition(cfg.floor, cfg.n_areas_x, cfg.n_areas_y, rp_grid(cfg));
    const RpClassifierModel model = model_with(Matrix(24, 6, 0.0));
    const CandidateSelection sel =
        coarse_localize(const_obs(3, 5, -60.0), model, part, cfg.j_star);
    // Uniform RP likelihoods make p_A proportional to per-area RP counts;
    // equal counts then fall back to the lower-index tie-break. The sort
    // oracle encodes exactly that contract.
    const LikelihoodVector p_a =
        area_likelihoods(rp_likelihoods(const_obs(3, 5, -60.0), model), part);
    const auto [oidx, oprobs] = oracle::top_k(p_a.probs(), cfg.j_star);
    CHECK(sel.area_indices == oidx);
}

TEST_CASE("baseline_wifi_only: point mass returns that RP location", "[coarse]") {
    const ExperimentConfig cfg;
    const auto rps = rp_grid(cfg);
    // Build weights that force a near-one-hot posterior at RP 7: a huge bias
    // on class 7 only.
    Matrix w(24, 6, 0.0);
    w(7, 5) = 200.0;
    const RpClassifierModel model = model_with(std::move(w));
    const Location est = baseline_wifi_only(const_obs(2, 5, -60.0), model, rps);
    CHECK_THAT(distance(est, rps[7].location), WithinAbs(0.0, 1e-9));
}

TEST_CASE("baseline_wifi_only: uniform posterior gives the RP centroid", "[coarse]") {
    const ExperimentConfig cfg;
    const auto rps = rp_grid(cfg);
    const RpClassifierModel model = model_with(Matrix(24, 6, 0.0));
    const Location est = baseline_wifi_only(const_obs(2, 5, -60.0), model, rps);
    Location centroid{0, 0, 0};
    for (const ReferencePoint& rp : rps) centroid = centroid + rp.location;
    centroid = (1.0 / 24.0) * centroid;
    CHECK_THAT(distance(est, centroid), WithinAbs(0.0, 1e-9));
}

TEST_CASE("baseline_wifi_only: argmax flag snaps to the best RP", "[coarse]") {
    const ExperimentConfig cfg;
    const auto rps = rp_grid(cfg);
    Matrix w(24, 6, 0.0);
    w(3, 5) = 5.0;  // clear but not overwhelming favorite
    const RpClassifierModel model = model_with(std::move(w));
    const Location est = baseline_wifi_only(const_obs(2, 5, -60.0), model, rps, true);
    CHECK(est == rps[3].location);
}

TEST_CASE("coarse model persistence round-trips and checks hashes", "[coarse]") {
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    const RpClassifierModel model = train_classifier(sr.wifi, cfg.coarse_training, cfg.hash());
    const std::string dir = (std::filesystem::temp_directory_path() / "wvloc_test_coarse").string();
    std::filesystem::create_directories(dir);
    save_coarse_model(model, dir + "/m.jsonl", cfg.seed);
    const auto [back, header] = load_coarse_model(dir + "/m.jsonl", cfg.hash());
    CHECK(back == model);
    CHECK_THROWS_AS(load_coarse_model(dir + "/m.jsonl", std::string("0000000000000000")),
                    HashMismatchError);
    std::filesystem::remove_all(dir);
}
