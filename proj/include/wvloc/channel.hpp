#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "wvloc/config.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/matrix.hpp"
#include "wvloc/rng.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

/// Mean received power at `receiver` from an AP at `ap` under the
/// log-distance path-loss model, before shadowing and clamping:
///   P(d) = P0 - 10 n log10(d / d0),  d = max(dist, d0).
inline double mean_rssi_dbm(const ChannelParams& ch, const Location& ap,
                            const Location& receiver) {
    const double d = std::max(distance(ap, receiver), ch.reference_distance);
    return ch.tx_power_dbm -
           10.0 * ch.path_loss_exponent * std::log10(d / ch.reference_distance);
}

/// Draw an n_samples x n_ap RSSI observation at `receiver`. Each entry gets
/// independent Gaussian shadowing and is clamped to [-120, 0] dBm. Samples
/// are drawn row-major (sample-by-sample, AP within sample) so the stream
/// layout is part of the on-disk contract.
inline RssiObservation synth_rssi(const ChannelParams& ch,
                                  const std::vector<Location>& aps,
                                  const Location& receiver, int n_samples,
                                  RngStream& stream) {
    Matrix m(static_cast<std::size_t>(n_samples), aps.size());
    for (int s = 0; s < n_samples; ++s) {
        for (std::size_t a = 0; a < aps.size(); ++a) {
            const double mean = mean_rssi_dbm(ch, aps[a], receiver);
            const double v = mean + stream.normal(0.0, ch.shadowing_sigma);
            m(static_cast<std::size_t>(s), a) =
                std::clamp(v, kRssiFloorDbm, kRssiCeilDbm);
        }
    }
    return RssiObservation(std::move(m));
}

}  // namespace wvloc
