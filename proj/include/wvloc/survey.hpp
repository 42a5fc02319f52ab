#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "wvloc/channel.hpp"
#include "wvloc/config.hpp"
#include "wvloc/database.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/partition.hpp"
#include "wvloc/rng.hpp"
#include "wvloc/scene.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

/// Reference points on a cell-centered grid of exactly rp_spacing meters,
/// centered in the floor, at the slab's mid height. Indexed row-major by y
/// so RP index order matches area index order.
inline std::vector<ReferencePoint> rp_grid(const ExperimentConfig& cfg) {
    const int nx = cfg.rp_cols();
    const int ny = cfg.rp_rows();
    const double ox =
        cfg.floor.min.x + 0.5 * (cfg.floor.extent_x() - nx * cfg.rp_spacing) + 0.5 * cfg.rp_spacing;
    const double oy =
        cfg.floor.min.y + 0.5 * (cfg.floor.extent_y() - ny * cfg.rp_spacing) + 0.5 * cfg.rp_spacing;
    const double z = cfg.floor.center().z;
    std::vector<ReferencePoint> rps;
    rps.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            rps.push_back(ReferencePoint{iy * nx + ix,
                                         Location{ox + ix * cfg.rp_spacing,
                                                  oy + iy * cfg.rp_spacing, z}});
        }
    }
    return rps;
}

/// Image-survey locations: the RP grid plus the midpoints of every edge
/// between horizontally or vertically adjacent RPs, each visited at two
/// heights (the z quartiles of the slab). The denser-than-WiFi coverage and
/// the height variation stand in for a robot collecting continuously along
/// sloped routes. Returned in canonical (lexicographic) order.
inline std::vector<Location> image_survey_locations(const ExperimentConfig& cfg) {
    const std::vector<ReferencePoint> rps = rp_grid(cfg);
    const int nx = cfg.rp_cols();
    const int ny = cfg.rp_rows();
    auto at = [&](int ix, int iy) { return rps[static_cast<std::size_t>(iy * nx + ix)].location; };

    std::vector<Location> planar;
    for (const ReferencePoint& rp : rps) {
        planar.push_back(rp.location);
    }
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix + 1 < nx; ++ix) {
            planar.push_back(0.5 * (at(ix, iy) + at(ix + 1, iy)));
        }
    }
    for (int iy = 0; iy + 1 < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            planar.push_back(0.5 * (at(ix, iy) + at(ix, iy + 1)));
        }
    }

    const double z_lo = cfg.floor.min.z + 0.25 * cfg.floor.extent_z();
    const double z_hi = cfg.floor.min.z + 0.75 * cfg.floor.extent_z();
    std::vector<Location> locations;
    locations.reserve(planar.size() * 2);
    for (const Location& p : planar) {
        locations.push_back(Location{p.x, p.y, z_lo});
        locations.push_back(Location{p.x, p.y, z_hi});
    }
    std::sort(locations.begin(), locations.end(), lexicographic_less);
    return locations;
}

/// Everything one survey campaign yields.
struct SurveyResult {
    WifiDb wifi;
    ImageDb image;
    AreaPartition partition;
    std::vector<std::string> warnings;
};

/// Replays the offline site survey: N_W RSSI rounds at every RP and N_I
/// image rounds at every image-survey location, all labeled with exact
/// ground truth. Deterministic given the config seeds; each (location,
/// round) pair owns its own rng substream.
inline SurveyResult run_survey(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<ReferencePoint> rps = rp_grid(cfg);
    AreaPartition partition = make_grid_partition(cfg.floor, cfg.n_areas_x, cfg.n_areas_y, rps);

    std::vector<WifiDbEntry> wifi_entries;
    wifi_entries.reserve(rps.size());
    for (const ReferencePoint& rp : rps) {
        WifiDbEntry entry{rp, {}};
        for (int w = 0; w < cfg.n_wifi_rounds; ++w) {
            RngStream stream(cfg.channel.seed, StreamKind::kWifiSurvey,
                             static_cast<std::uint64_t>(rp.index) *
                                     static_cast<std::uint64_t>(cfg.n_wifi_rounds) +
                                 static_cast<std::uint64_t>(w));
            entry.observations.push_back(
                synth_rssi(cfg.channel, cfg.ap_positions, rp.location, cfg.n_samples, stream));
        }
        wifi_entries.push_back(std::move(entry));
    }

    const SceneBasis basis(cfg.scene, cfg.floor);
    const std::vector<Location> image_locs = image_survey_locations(cfg);
    std::vector<ImageDbEntry> image_entries;
    image_entries.reserve(image_locs.size());
    for (std::size_t l = 0; l < image_locs.size(); ++l) {
        ImageDbEntry entry{image_locs[l], {}};
        for (int r = 0; r < cfg.n_image_rounds; ++r) {
            RngStream stream(cfg.scene.seed, StreamKind::kImageSurvey,
                             static_cast<std::uint64_t>(l) *
                                     static_cast<std::uint64_t>(cfg.n_image_rounds) +
                                 static_cast<std::uint64_t>(r));
            entry.observations.push_back(
                synth_features(basis, cfg.image_spec, cfg.scene.noise_sigma, entry.location,
                               stream));
        }
        image_entries.push_back(std::move(entry));
    }

    SurveyResult result{build_wifi_db(std::move(wifi_entries)),
                        partition_image_db(build_image_db(std::move(image_entries)), partition),
                        partition,
                        {}};
    result.warnings = result.partition.warnings();
    return result;
}

}  // namespace wvloc
