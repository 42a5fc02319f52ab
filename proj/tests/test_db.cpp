// fingerprint-db: construction, partitioning, views, JSON-Lines persistence.
#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "wvloc/wvloc.hpp"

using namespace wvloc;

namespace {

const std::string kDir = (std::filesystem::temp_directory_path() / "wvloc_test_db").string();

struct DirGuard {
    DirGuard() { std::filesystem::create_directories(kDir); }
    ~DirGuard() { std::filesystem::remove_all(kDir); }
};

std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void spit(const std::string& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

RssiObservation make_obs(oracle::TestRng& rng, std::size_t n_s, std::size_t n_ap) {
    Matrix m(n_s, n_ap);
    for (std::size_t r = 0; r < n_s; ++r) {
        for (std::size_t c = 0; c < n_ap; ++c) {
            m(r, c) = oracle::uniform(rng, -100.0, -20.0);
        }
    }
    return RssiObservation(m);
}

ImageFeatures make_feat(oracle::TestRng& rng, const ImageFeatureSpec& spec) {
    Matrix m(static_cast<std::size_t>(spec.n_p), static_cast<std::size_t>(spec.feature_dim));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            m(r, c) = oracle::uniform(rng, -2.0, 2.0);
        }
    }
    return ImageFeatures(m, spec);
}

}  // namespace

TEST_CASE("build_wifi_db: default survey shape 24 x 2", "[db]") {
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    CHECK(sr.wifi.entries.size() == 24);
    for (std::size_t i = 0; i < sr.wifi.entries.size(); ++i) {
        CHECK(sr.wifi.entries[i].rp.index == static_cast<int>(i));
        CHECK(sr.wifi.entries[i].observations.size() == 2);
    }
}

TEST_CASE("build_wifi_db: rejects vacuous and duplicate inputs", "[db]") {
    CHECK_THROWS_AS(build_wifi_db({}), ConfigError);
    oracle::TestRng rng(1);
    WifiDbEntry a{{0, {0.5, 0.5, 0}}, {make_obs(rng, 3, 2)}};
    WifiDbEntry dup{{0, {1.5, 0.5, 0}}, {make_obs(rng, 3, 2)}};
    CHECK_THROWS_AS(build_wifi_db({a, dup}), ConfigError);
    // Gap in indices (0 then 2) also rejected: indices must be contiguous.
    WifiDbEntry gap{{2, {1.5, 0.5, 0}}, {make_obs(rng, 3, 2)}};
    CHECK_THROWS_AS(build_wifi_db({a, gap}), ConfigError);
}

TEST_CASE("build_wifi_db: shuffled input canonicalizes to identical bytes", "[db]") {
    DirGuard guard;
    oracle::TestRng rng(2);
    std::vector<WifiDbEntry> entries;
    for (int i = 0; i < 6; ++i) {
        entries.push_back({{i, {0.5 + i, 0.5, 0}}, {make_obs(rng, 4, 3)}});
    }
    std::vector<WifiDbEntry> shuffled = entries;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const WifiDb a = build_wifi_db(entries);
    const WifiDb b = build_wifi_db(shuffled);
    save_wifi_db(a, kDir + "/a.jsonl", "h", 0);
    save_wifi_db(b, kDir + "/b.jsonl", "h", 0);
    CHECK(slurp(kDir + "/a.jsonl") == slurp(kDir + "/b.jsonl"));
}

TEST_CASE("partition_image_db: entries at RP locations follow rp_membership", "[db][oracle]") {
    const ExperimentConfig cfg;
    const auto rps = rp_grid(cfg);
    const AreaPartition part =
        make_grid_partition(cfg.floor, cfg.n_areas_x, cfg.n_areas_y, rps);
    oracle::TestRng rng(3);
    std::vector<ImageDbEntry> entries;
    for (const ReferencePoint& rp : rps) {
        entries.push_back({rp.location, {make_feat(rng, cfg.image_spec)}});
    }
    const ImageDb db = partition_image_db(build_image_db(entries), part);
    REQUIRE(db.partitioned());
    for (std::size_t e = 0; e < db.entries.size(); ++e) {
        // Find which area list holds entry e.
        int found = -1;
        for (std::size_t j = 0; j < db.area_index.size(); ++j) {
            for (std::size_t k : db.area_index[j]) {
                if (k == e) found = static_cast<int>(j);
            }
        }
        const int expected =
            oracle::first_containing_area(part.areas(), db.entries[e].location);
        CHECK(found == expected);
    }
}

TEST_CASE("partition_image_db: single area holds everything", "[db]") {
    const Box floor{{0, 0, 0}, {4, 4, 1}};
    const AreaPartition part = make_grid_partition(floor, 1, 1, {{0, {2, 2, 0.5}}});
    oracle::TestRng rng(4);
    const ImageFeatureSpec spec{2, 8, 8, 1, 3};
    std::vector<ImageDbEntry> entries;
    for (int i = 0; i < 9; ++i) {
        entries.push_back({oracle::random_point(rng, floor), {make_feat(rng, spec)}});
    }
    const ImageDb db = partition_image_db(build_image_db(entries), part);
    REQUIRE(db.area_index.size() == 1);
    CHECK(db.area_index[0].size() == 9);
}

TEST_CASE("partition_image_db: default survey lists sum to DB size", "[db]") {
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    REQUIRE(sr.image.area_index.size() == 15);
    std::size_t total = 0;
    std::vector<bool> seen(sr.image.entries.size(), false);
    for (const auto& list : sr.image.area_index) {
        total += list.size();
        for (std::size_t k : list) {
            CHECK_FALSE(seen[k]);  // disjoint
            seen[k] = true;
        }
    }
    CHECK(total == sr.image.entries.size());  // covering
}

TEST_CASE("partition_image_db: entry outside the floor is named in the error", "[db]") {
    const Box floor{{0, 0, 0}, {2, 2, 1}};
    const AreaPartition part = make_grid_partition(floor, 1, 1, {{0, {1, 1, 0.5}}});
    oracle::TestRng rng(5);
    const ImageFeatureSpec spec{1, 8, 8, 1, 2};
    ImageDb db = build_image_db({{{0.5, 0.5, 0.5}, {make_feat(rng, spec)}},
                                 {{5.0, 0.5, 0.5}, {make_feat(rng, spec)}}});
    try {
        partition_image_db(db, part);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        // The error must identify the offending entry.
        CHECK(std::string(e.what()).find("entry") != std::string::npos);
    }
}

TEST_CASE("restrict_image_db: all areas reproduces the full database", "[db]") {
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    std::vector<int> all(15);
    std::iota(all.begin(), all.end(), 0);
    const CandidateSelection sel{all, std::vector<double>(15, 1.0 / 15.0)};
    const ImageDbView view = restrict_image_db(sr.image, sel);
    CHECK(view.size() == sr.image.entries.size());
}

TEST_CASE("restrict_image_db: single area view equals that area's list", "[db]") {
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    const CandidateSelection sel{{7}, {1.0}};
    const ImageDbView view = restrict_image_db(sr.image, sel);
    std::vector<std::size_t> expected = sr.image.area_index[7];
    std::sort(expected.begin(), expected.end());
    CHECK(view.entry_indices() == expected);
}

TEST_CASE("restrict_image_db: J*=4 view equals brute-force location filter", "[db][oracle]") {
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    oracle::TestRng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        // Pick 4 distinct random areas.
        std::vector<int> areas(15);
        std::iota(areas.begin(), areas.end(), 0);
        std::shuffle(areas.begin(), areas.end(), rng);
        areas.resize(4);
        const CandidateSelection sel{areas, std::vector<double>(4, 0.25)};
        const ImageDbView view = restrict_image_db(sr.image, sel);

        std::size_t expected = 0;
        for (const ImageDbEntry& e : sr.image.entries) {
            const int j = oracle::first_containing_area(sr.partition.areas(), e.location);
            if (std::find(areas.begin(), areas.end(), j) != areas.end()) ++expected;
        }
        CHECK(view.size() == expected);
        // And every viewed entry really lies in a selected area.
        for (std::size_t k = 0; k < view.size(); ++k) {
            const int j =
                oracle::first_containing_area(sr.partition.areas(), view.entry(k).location);
            CHECK(std::find(areas.begin(), areas.end(), j) != areas.end());
        }
    }
}

TEST_CASE("restrict_image_db: unknown area and unpartitioned db rejected", "[db]") {
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    CHECK_THROWS_AS(restrict_image_db(sr.image, CandidateSelection{{99}, {1.0}}), ConfigError);
    oracle::TestRng rng(7);
    const ImageFeatureSpec spec{1, 8, 8, 1, 2};
    const ImageDb bare = build_image_db({{{0.5, 0.5, 0.05}, {make_feat(rng, spec)}}});
    CHECK_THROWS_AS(restrict_image_db(bare, CandidateSelection{{0}, {1.0}}), ConfigError);
}

TEST_CASE("save/load: wifi round-trip is structural identity", "[db]") {
    DirGuard guard;
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    save_wifi_db(sr.wifi, kDir + "/w.jsonl", cfg.hash(), cfg.seed);
    const auto [back, header] = load_wifi_db(kDir + "/w.jsonl", cfg.hash());
    CHECK(header.config_hash == cfg.hash());
    CHECK(header.seed == cfg.seed);
    REQUIRE(back.entries.size() == sr.wifi.entries.size());
    for (std::size_t i = 0; i < back.entries.size(); ++i) {
        CHECK(back.entries[i].rp == sr.wifi.entries[i].rp);
        CHECK(back.entries[i].observations == sr.wifi.entries[i].observations);
    }
}

TEST_CASE("save/load: image round-trip preserves the area index", "[db]") {
    DirGuard guard;
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    save_image_db(sr.image, kDir + "/i.jsonl", cfg.hash(), cfg.seed);
    const auto [back, header] = load_image_db(kDir + "/i.jsonl", cfg.hash());
    REQUIRE(back.entries.size() == sr.image.entries.size());
    for (std::size_t i = 0; i < back.entries.size(); ++i) {
        CHECK(back.entries[i].location == sr.image.entries[i].location);
        CHECK(back.entries[i].observations == sr.image.entries[i].observations);
    }
    CHECK(back.area_index == sr.image.area_index);
}

TEST_CASE("save/load: truncated file reports the line number", "[db]") {
    DirGuard guard;
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    const std::string path = kDir + "/w.jsonl";
    save_wifi_db(sr.wifi, path, cfg.hash(), cfg.seed);
    std::string bytes = slurp(path);
    // Cut the file mid-way through the last record.
    bytes.resize(bytes.size() - 40);
    spit(path, bytes);
    try {
        load_wifi_db(path);
        FAIL("expected MalformedLineError");
    } catch (const MalformedLineError& e) {
        CHECK(e.line() == 1 + sr.wifi.entries.size());  // header + entries
    }
}

TEST_CASE("save/load: unknown schema version rejected", "[db]") {
    DirGuard guard;
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    const std::string path = kDir + "/w.jsonl";
    save_wifi_db(sr.wifi, path, cfg.hash(), cfg.seed);
    std::string bytes = slurp(path);
    const std::string needle = "\"schema_version\":1";
    const auto pos = bytes.find(needle);
    REQUIRE(pos != std::string::npos);
    bytes.replace(pos, needle.size(), "\"schema_version\":0");
    spit(path, bytes);
    CHECK_THROWS_AS(load_wifi_db(path), VersionMismatchError);
}

TEST_CASE("save/load: hash and kind mismatches are distinct errors", "[db]") {
    DirGuard guard;
    const ExperimentConfig cfg;
    const SurveyResult sr = run_survey(cfg);
    save_wifi_db(sr.wifi, kDir + "/w.jsonl", cfg.hash(), cfg.seed);
    CHECK_THROWS_AS(load_wifi_db(kDir + "/w.jsonl", std::string("deadbeefdeadbeef")),
                    HashMismatchError);
    // A wifi file is not an image database.
    CHECK_THROWS_AS(load_image_db(kDir + "/w.jsonl"), IoError);
    // Missing file is an IoError.
    CHECK_THROWS_AS(load_wifi_db(kDir + "/nope.jsonl"), IoError);
}

TEST_CASE("save/load: 100 random small databases round-trip", "[db][oracle]") {
    DirGuard guard;
    oracle::TestRng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const int n_rp = oracle::uniform_int(rng, 1, 6);
        const std::size_t n_s = static_cast<std::size_t>(oracle::uniform_int(rng, 1, 5));
        const std::size_t n_ap = static_cast<std::size_t>(oracle::uniform_int(rng, 1, 4));
        const int rounds = oracle::uniform_int(rng, 1, 3);
        std::vector<WifiDbEntry> wentries;
        for (int i = 0; i < n_rp; ++i) {
            std::vector<RssiObservation> obs;
            for (int w = 0; w < rounds; ++w) obs.push_back(make_obs(rng, n_s, n_ap));
            wentries.push_back({{i, {0.5 + i, 0.5, 0.25}}, std::move(obs)});
        }
        const WifiDb wdb = build_wifi_db(std::move(wentries));
        save_wifi_db(wdb, kDir + "/rt.jsonl", "cafe", static_cast<std::uint64_t>(trial));
        const auto [wback, wh] = load_wifi_db(kDir + "/rt.jsonl");
        CHECK(wback.entries == wdb.entries);

        const ImageFeatureSpec spec{oracle::uniform_int(rng, 1, 4), 8, 8, 1,
                                    oracle::uniform_int(rng, 1, 5)};
        std::vector<ImageDbEntry> ientries;
        const int n_img = oracle::uniform_int(rng, 1, 8);
        for (int i = 0; i < n_img; ++i) {
            ientries.push_back({{oracle::uniform(rng, 0.0, 9.0), oracle::uniform(rng, 0.0, 3.0),
                                 oracle::uniform(rng, 0.0, 1.0)},
                                {make_feat(rng, spec)}});
        }
        const ImageDb idb = build_image_db(std::move(ientries));
        save_image_db(idb, kDir + "/rti.jsonl", "cafe", static_cast<std::uint64_t>(trial));
        const auto [iback, ih] = load_image_db(kDir + "/rti.jsonl");
        CHECK(iback.entries == idb.entries);
        CHECK(iback.area_index == idb.area_index);
    }
}

TEST_CASE("queries round-trip with optional ground truth", "[db]") {
    DirGuard guard;
    oracle::TestRng rng(9);
    const ImageFeatureSpec spec{2, 8, 8, 1, 3};
    std::vector<LocalizationQuery> qs;
    qs.push_back({make_obs(rng, 3, 2), make_feat(rng, spec), Location{1, 2, 0.5}});
    qs.push_back({make_obs(rng, 3, 2), make_feat(rng, spec), std::nullopt});
    save_queries(qs, kDir + "/q.jsonl", "cafe", 5);
    const auto [back, header] = load_queries(kDir + "/q.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].rssi == qs[0].rssi);
    CHECK(back[0].features == qs[0].features);
    REQUIRE(back[0].truth.has_value());
    CHECK(*back[0].truth == *qs[0].truth);
    CHECK_FALSE(back[1].truth.has_value());
}
