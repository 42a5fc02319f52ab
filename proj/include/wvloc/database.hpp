#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wvloc/errors.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/partition.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

/// One WiFi fingerprint: a reference point and its N_W survey rounds.
struct WifiDbEntry {
    ReferencePoint rp;
    std::vector<RssiObservation> observations;

    friend bool operator==(const WifiDbEntry&, const WifiDbEntry&) = default;
};

/// The wireless fingerprint database DB_W: one entry per RP, sorted by RP
/// index. Immutable after build.
struct WifiDb {
    std::vector<WifiDbEntry> entries;

    int n_rp() const { return static_cast<int>(entries.size()); }
    int n_rounds() const {
        return entries.empty() ? 0 : static_cast<int>(entries.front().observations.size());
    }
    int n_ap() const {
        return entries.empty() ? 0
                               : static_cast<int>(entries.front().observations.front().n_ap());
    }

    std::vector<ReferencePoint> reference_points() const {
        std::vector<ReferencePoint> rps;
        rps.reserve(entries.size());
        for (const WifiDbEntry& e : entries) {
            rps.push_back(e.rp);
        }
        return rps;
    }

    friend bool operator==(const WifiDb&, const WifiDb&) = default;
};

/// Canonicalizes and validates survey output into a WifiDb: entries sorted by
/// RP index, indices unique and contiguous from zero, every entry carrying
/// the same number of equally shaped observations.
inline WifiDb build_wifi_db(std::vector<WifiDbEntry> entries) {
    if (entries.empty()) {
        throw ConfigError("wifi survey produced no entries");
    }
    std::sort(entries.begin(), entries.end(),
              [](const WifiDbEntry& a, const WifiDbEntry& b) { return a.rp.index < b.rp.index; });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (i > 0 && entries[i].rp.index == entries[i - 1].rp.index) {
            throw ConfigError("duplicate RP index " + std::to_string(entries[i].rp.index));
        }
        if (entries[i].rp.index != static_cast<int>(i)) {
            throw ConfigError("RP indices must be contiguous from zero");
        }
        if (!entries[i].rp.location.is_finite()) {
            throw ConfigError("RP locations must be finite");
        }
        if (entries[i].observations.empty()) {
            throw ConfigError("RP " + std::to_string(i) + " has no observations");
        }
    }
    const std::size_t rounds = entries.front().observations.size();
    const std::size_t n_ap = entries.front().observations.front().n_ap();
    const std::size_t n_samples = entries.front().observations.front().n_samples();
    for (const WifiDbEntry& e : entries) {
        if (e.observations.size() != rounds) {
            throw ConfigError("every RP must have the same number of survey rounds");
        }
        for (const RssiObservation& o : e.observations) {
            if (o.n_ap() != n_ap || o.n_samples() != n_samples) {
                throw ConfigError("all observations must share one N_s x N_AP shape");
            }
        }
    }
    return WifiDb{std::move(entries)};
}

/// One image fingerprint: a survey location and its N_I feature observations.
struct ImageDbEntry {
    Location location;
    std::vector<ImageFeatures> observations;

    friend bool operator==(const ImageDbEntry&, const ImageDbEntry&) = default;
};

inline bool lexicographic_less(const Location& a, const Location& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.z < b.z;
}

/// The image database DB_I: entries sorted lexicographically by location.
/// area_index (area index -> entry indices) is empty until
/// partition_image_db populates it.
struct ImageDb {
    std::vector<ImageDbEntry> entries;
    std::vector<std::vector<std::size_t>> area_index;

    std::size_t size() const { return entries.size(); }
    bool partitioned() const { return !area_index.empty(); }

    friend bool operator==(const ImageDb&, const ImageDb&) = default;
};

/// Canonicalizes and validates survey output into an ImageDb (no area index
/// yet): entries sorted by location, duplicate locations rejected, every
/// entry carrying the same number of equally shaped observations.
inline ImageDb build_image_db(std::vector<ImageDbEntry> entries) {
    if (entries.empty()) {
        throw ConfigError("image survey produced no entries");
    }
    std::sort(entries.begin(), entries.end(), [](const ImageDbEntry& a, const ImageDbEntry& b) {
        return lexicographic_less(a.location, b.location);
    });
    const std::size_t rounds = entries.front().observations.size();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const ImageDbEntry& e = entries[i];
        if (!e.location.is_finite()) {
            throw ConfigError("image survey locations must be finite");
        }
        if (i > 0 && entries[i - 1].location == e.location) {
            throw ConfigError("duplicate image survey location");
        }
        if (e.observations.empty() || e.observations.size() != rounds) {
            throw ConfigError("every image entry must have the same number of rounds");
        }
        for (const ImageFeatures& f : e.observations) {
            if (!(f.spec() == entries.front().observations.front().spec())) {
                throw ConfigError("all image observations must share one feature spec");
            }
        }
    }
    return ImageDb{std::move(entries), {}};
}

/// Assigns every entry to the area containing its location and stores the
/// resulting index on the database. The index lists are disjoint and cover
/// all entries by construction; an entry outside every area is an error.
inline ImageDb partition_image_db(ImageDb db, const AreaPartition& partition) {
    db.area_index.assign(static_cast<std::size_t>(partition.n_areas()), {});
    for (std::size_t i = 0; i < db.entries.size(); ++i) {
        int area = -1;
        try {
            area = partition.area_containing(db.entries[i].location);
        } catch (const ConfigError&) {
            const Location& l = db.entries[i].location;
            throw ConfigError("image entry " + std::to_string(i) + " at (" +
                              std::to_string(l.x) + ", " + std::to_string(l.y) + ", " +
                              std::to_string(l.z) + ") lies outside every area");
        }
        db.area_index[static_cast<std::size_t>(area)].push_back(i);
    }
    return db;
}

/// Non-owning view of the entries owned by the selected candidate areas,
/// in ascending entry order. No feature data is copied.
class ImageDbView {
public:
    ImageDbView(const ImageDb& db, std::vector<std::size_t> entry_indices)
        : db_(&db), entry_indices_(std::move(entry_indices)) {}

    std::size_t size() const { return entry_indices_.size(); }
    const ImageDbEntry& entry(std::size_t k) const {
        return db_->entries[entry_indices_[k]];
    }
    const std::vector<std::size_t>& entry_indices() const { return entry_indices_; }

private:
    const ImageDb* db_;
    std::vector<std::size_t> entry_indices_;
};

/// DB_I(A*) = union of the per-area databases over the selected areas.
inline ImageDbView restrict_image_db(const ImageDb& db, const CandidateSelection& selection) {
    if (!db.partitioned()) {
        throw ConfigError("image database has no area index; run partition_image_db first");
    }
    std::vector<std::size_t> indices;
    for (int area : selection.area_indices) {
        if (area < 0 || area >= static_cast<int>(db.area_index.size())) {
            throw ConfigError("selection references unknown area " + std::to_string(area));
        }
        const auto& list = db.area_index[static_cast<std::size_t>(area)];
        indices.insert(indices.end(), list.begin(), list.end());
    }
    std::sort(indices.begin(), indices.end());
    return ImageDbView(db, std::move(indices));
}

}  // namespace wvloc
