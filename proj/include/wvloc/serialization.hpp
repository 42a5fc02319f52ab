#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "wvloc/database.hpp"
#include "wvloc/errors.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/matrix.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

constexpr int kSchemaVersion = 1;

/// First line of every persisted artifact. Binds the file to the experiment
/// config so downstream stages can refuse mismatched inputs.
struct EnvelopeHeader {
    int schema_version = kSchemaVersion;
    std::string kind;
    std::string config_hash;
    std::uint64_t seed = 0;
};

namespace detail {

inline json header_to_json(const EnvelopeHeader& h) {
    return json{{"schema_version", h.schema_version},
                {"kind", h.kind},
                {"config_hash", h.config_hash},
                {"seed", h.seed}};
}

inline json parse_line(const std::string& line, std::size_t line_no) {
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
        throw MalformedLineError("record is not a JSON object", line_no);
    }
    return j;
}

template <typename T>
T record_field(const json& j, const char* key, std::size_t line_no) {
    if (!j.contains(key)) {
        throw MalformedLineError(std::string("missing field '") + key + "'", line_no);
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw MalformedLineError(std::string("field '") + key + "' has the wrong type",
                                 line_no);
    }
}

inline json location_obj(const Location& l) {
    return json{{"x", l.x}, {"y", l.y}, {"z", l.z}};
}

inline Location location_from_obj(const json& j, std::size_t line_no) {
    return Location{record_field<double>(j, "x", line_no),
                    record_field<double>(j, "y", line_no),
                    record_field<double>(j, "z", line_no)};
}

inline Matrix matrix_from_flat(const std::vector<double>& flat, std::size_t rows,
                               std::size_t cols, std::size_t line_no) {
    if (flat.size() != rows * cols) {
        throw MalformedLineError("payload length does not match the declared shape", line_no);
    }
    Matrix m(rows, cols);
    m.data() = flat;
    return m;
}

}  // namespace detail

/// Writes header + records as UTF-8 JSON Lines. Keys serialize in sorted
/// order and doubles with full round-trip precision, so equal values yield
/// byte-identical files.
inline void write_jsonl(const std::string& path, const EnvelopeHeader& header,
                        const std::vector<json>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    out << detail::header_to_json(header).dump() << '\n';
    for (const json& r : records) {
        out << r.dump() << '\n';
    }
    out.flush();
    if (!out) {
        throw IoError("failed while writing '" + path + "'");
    }
}

/// Reads and checks the envelope: schema version must be known, kind must be
/// the expected one, and (when given) the embedded config hash must match.
inline std::pair<EnvelopeHeader, std::vector<json>> read_jsonl(
    const std::string& path, const std::string& expected_kind,
    const std::optional<std::string>& expected_hash = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    std::string line;
    if (!std::getline(in, line) || line.empty()) {
        throw MalformedLineError("missing envelope header", 1);
    }
    const json jh = detail::parse_line(line, 1);
    EnvelopeHeader header;
    header.schema_version = detail::record_field<int>(jh, "schema_version", 1);
    header.kind = detail::record_field<std::string>(jh, "kind", 1);
    header.config_hash = detail::record_field<std::string>(jh, "config_hash", 1);
    header.seed = detail::record_field<std::uint64_t>(jh, "seed", 1);
    if (header.schema_version != kSchemaVersion) {
        throw VersionMismatchError("file declares schema_version " +
                                   std::to_string(header.schema_version) + ", this build reads " +
                                   std::to_string(kSchemaVersion));
    }
    if (header.kind != expected_kind) {
        throw IoError("expected a '" + expected_kind + "' artifact, found '" + header.kind + "'");
    }
    if (expected_hash && header.config_hash != *expected_hash) {
        throw HashMismatchError("artifact was built under config " + header.config_hash +
                                ", expected " + *expected_hash);
    }
    std::vector<json> records;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;  // tolerate a trailing blank line
        }
        records.push_back(detail::parse_line(line, line_no));
    }
    return {header, std::move(records)};
}

// ---- databases ----

inline void save_wifi_db(const WifiDb& db, const std::string& path,
                         const std::string& config_hash, std::uint64_t seed) {
    std::vector<json> records;
    records.reserve(db.entries.size());
    for (const WifiDbEntry& e : db.entries) {
        json obs = json::array();
        for (const RssiObservation& o : e.observations) {
            obs.push_back(o.samples().data());
        }
        records.push_back(json{{"index", e.rp.index},
                               {"location", detail::location_obj(e.rp.location)},
                               {"n_samples", e.observations.front().n_samples()},
                               {"n_ap", e.observations.front().n_ap()},
                               {"observations", obs}});
    }
    write_jsonl(path, EnvelopeHeader{kSchemaVersion, "wifi", config_hash, seed}, records);
}

inline std::pair<WifiDb, EnvelopeHeader> load_wifi_db(
    const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt) {
    auto [header, records] = read_jsonl(path, "wifi", expected_hash);
    if (records.empty()) {
        throw MalformedLineError("wifi database has no entries", 1);
    }
    std::vector<WifiDbEntry> entries;
    std::size_t line_no = 1;
    for (const json& r : records) {
        ++line_no;
        WifiDbEntry e;
        e.rp.index = detail::record_field<int>(r, "index", line_no);
        e.rp.location =
            detail::location_from_obj(detail::record_field<json>(r, "location", line_no), line_no);
        const auto n_samples = detail::record_field<std::size_t>(r, "n_samples", line_no);
        const auto n_ap = detail::record_field<std::size_t>(r, "n_ap", line_no);
        for (const auto& flat :
             detail::record_field<std::vector<std::vector<double>>>(r, "observations", line_no)) {
            try {
                e.observations.push_back(RssiObservation(
                    detail::matrix_from_flat(flat, n_samples, n_ap, line_no)));
            } catch (const ConfigError& err) {
                throw MalformedLineError(err.what(), line_no);
            }
        }
        entries.push_back(std::move(e));
    }
    try {
        return {build_wifi_db(std::move(entries)), header};
    } catch (const ConfigError& err) {
        throw MalformedLineError(err.what(), line_no);
    }
}

inline void save_image_db(const ImageDb& db, const std::string& path,
                          const std::string& config_hash, std::uint64_t seed) {
    // Per-entry area labels persist the offline partitioning (-1 = none).
    std::vector<int> area_of(db.entries.size(), -1);
    for (std::size_t a = 0; a < db.area_index.size(); ++a) {
        for (std::size_t i : db.area_index[a]) {
            area_of[i] = static_cast<int>(a);
        }
    }
    std::vector<json> records;
    records.reserve(db.entries.size());
    for (std::size_t i = 0; i < db.entries.size(); ++i) {
        const ImageDbEntry& e = db.entries[i];
        const ImageFeatureSpec& spec = e.observations.front().spec();
        json obs = json::array();
        for (const ImageFeatures& f : e.observations) {
            obs.push_back(f.features().data());
        }
        records.push_back(json{{"location", detail::location_obj(e.location)},
                               {"area", area_of[i]},
                               {"spec",
                                {{"n_p", spec.n_p},
                                 {"n_w", spec.n_w},
                                 {"n_l", spec.n_l},
                                 {"n_rgb", spec.n_rgb},
                                 {"feature_dim", spec.feature_dim}}},
                               {"observations", obs}});
    }
    write_jsonl(path, EnvelopeHeader{kSchemaVersion, "image", config_hash, seed}, records);
}

inline std::pair<ImageDb, EnvelopeHeader> load_image_db(
    const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt) {
    auto [header, records] = read_jsonl(path, "image", expected_hash);
    if (records.empty()) {
        throw MalformedLineError("image database has no entries", 1);
    }
    std::vector<ImageDbEntry> entries;
    std::vector<int> areas;
    int max_area = -1;
    std::size_t line_no = 1;
    for (const json& r : records) {
        ++line_no;
        ImageDbEntry e;
        e.location =
            detail::location_from_obj(detail::record_field<json>(r, "location", line_no), line_no);
        const json js = detail::record_field<json>(r, "spec", line_no);
        ImageFeatureSpec spec;
        spec.n_p = detail::record_field<int>(js, "n_p", line_no);
        spec.n_w = detail::record_field<int>(js, "n_w", line_no);
        spec.n_l = detail::record_field<int>(js, "n_l", line_no);
        spec.n_rgb = detail::record_field<int>(js, "n_rgb", line_no);
        spec.feature_dim = detail::record_field<int>(js, "feature_dim", line_no);
        for (const auto& flat :
             detail::record_field<std::vector<std::vector<double>>>(r, "observations", line_no)) {
            try {
                e.observations.push_back(ImageFeatures(
                    detail::matrix_from_flat(flat, static_cast<std::size_t>(spec.n_p),
                                             static_cast<std::size_t>(spec.feature_dim), line_no),
                    spec));
            } catch (const ConfigError& err) {
                throw MalformedLineError(err.what(), line_no);
            }
        }
        const int area = detail::record_field<int>(r, "area", line_no);
        if (area < -1) {
            throw MalformedLineError("negative area label", line_no);
        }
        max_area = std::max(max_area, area);
        areas.push_back(area);
        entries.push_back(std::move(e));
    }
    ImageDb db;
    try {
        db = build_image_db(std::move(entries));
    } catch (const ConfigError& err) {
        throw MalformedLineError(err.what(), line_no);
    }
    // build_image_db sorts identically to the canonical on-disk order, so the
    // stored area labels still line up with the entries.
    if (max_area >= 0) {
        db.area_index.assign(static_cast<std::size_t>(max_area) + 1, {});
        for (std::size_t i = 0; i < areas.size(); ++i) {
            if (areas[i] < 0) {
                throw MalformedLineError("entry is missing an area label while others have one",
                                         i + 2);
            }
            db.area_index[static_cast<std::size_t>(areas[i])].push_back(i);
        }
    }
    return {db, header};
}

// ---- localization queries ----

/// One online query: synchronized RSSI and image features, with optional
/// ground truth for error reporting.
struct LocalizationQuery {
    RssiObservation rssi;
    ImageFeatures features;
    std::optional<Location> truth;
};

inline void save_queries(const std::vector<LocalizationQuery>& queries, const std::string& path,
                         const std::string& config_hash, std::uint64_t seed) {
    std::vector<json> records;
    records.reserve(queries.size());
    for (const LocalizationQuery& q : queries) {
        const ImageFeatureSpec& spec = q.features.spec();
        json r{{"rssi",
                {{"n_samples", q.rssi.n_samples()},
                 {"n_ap", q.rssi.n_ap()},
                 {"data", q.rssi.samples().data()}}},
               {"features",
                {{"spec",
                  {{"n_p", spec.n_p},
                   {"n_w", spec.n_w},
                   {"n_l", spec.n_l},
                   {"n_rgb", spec.n_rgb},
                   {"feature_dim", spec.feature_dim}}},
                 {"data", q.features.features().data()}}}};
        if (q.truth) {
            r["truth"] = detail::location_obj(*q.truth);
        }
        records.push_back(std::move(r));
    }
    write_jsonl(path, EnvelopeHeader{kSchemaVersion, "queries", config_hash, seed}, records);
}

inline std::pair<std::vector<LocalizationQuery>, EnvelopeHeader> load_queries(
    const std::string& path, const std::optional<std::string>& expected_hash = std::nullopt) {
    auto [header, records] = read_jsonl(path, "queries", expected_hash);
    std::vector<LocalizationQuery> queries;
    std::size_t line_no = 1;
    for (const json& r : records) {
        ++line_no;
        const json jr = detail::record_field<json>(r, "rssi", line_no);
        const auto n_samples = detail::record_field<std::size_t>(jr, "n_samples", line_no);
        const auto n_ap = detail::record_field<std::size_t>(jr, "n_ap", line_no);
        const json jf = detail::record_field<json>(r, "features", line_no);
        const json js = detail::record_field<json>(jf, "spec", line_no);
        ImageFeatureSpec spec;
        spec.n_p = detail::record_field<int>(js, "n_p", line_no);
        spec.n_w = detail::record_field<int>(js, "n_w", line_no);
        spec.n_l = detail::record_field<int>(js, "n_l", line_no);
        spec.n_rgb = detail::record_field<int>(js, "n_rgb", line_no);
        spec.feature_dim = detail::record_field<int>(js, "feature_dim", line_no);
        LocalizationQuery q;
        try {
            q.rssi = RssiObservation(detail::matrix_from_flat(
                detail::record_field<std::vector<double>>(jr, "data", line_no), n_samples, n_ap,
                line_no));
            q.features = ImageFeatures(
                detail::matrix_from_flat(
                    detail::record_field<std::vector<double>>(jf, "data", line_no),
                    static_cast<std::size_t>(spec.n_p),
                    static_cast<std::size_t>(spec.feature_dim), line_no),
                spec);
        } catch (const ConfigError& err) {
            throw MalformedLineError(err.what(), line_no);
        }
        if (r.contains("truth")) {
            q.truth = detail::location_from_obj(r.at("truth"), line_no);
        }
        queries.push_back(std::move(q));
    }
    return {queries, header};
}

}  // namespace wvloc
