#pragma once

#include <algorithm>
#include <cmath>

#include "wvloc/errors.hpp"

namespace wvloc {

/// A 3-D position in meters.
struct Location {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool is_finite() const {
        return std::isfinite(x) && std::isfinite(y) && std::isfinite(z);
    }

    friend bool operator==(const Location&, const Location&) = default;
};

inline Location operator+(const Location& a, const Location& b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
}

inline Location operator-(const Location& a, const Location& b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
}

inline Location operator*(double s, const Location& a) {
    return {s * a.x, s * a.y, s * a.z};
}

inline double squared_distance(const Location& a, const Location& b) {
    const double dx = a.x - b.x;
    const double dy = a.y - b.y;
    const double dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

inline double distance(const Location& a, const Location& b) {
    return std::sqrt(squared_distance(a, b));
}

/// Axis-aligned box with closed boundaries.
struct Box {
    Location min;
    Location max;

    bool contains(const Location& p) const {
        return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y &&
               p.z >= min.z && p.z <= max.z;
    }

    /// Euclidean-nearest point of the box to p (identity when p is inside).
    Location clamp(const Location& p) const {
        return {std::clamp(p.x, min.x, max.x), std::clamp(p.y, min.y, max.y),
                std::clamp(p.z, min.z, max.z)};
    }

    double extent_x() const { return max.x - min.x; }
    double extent_y() const { return max.y - min.y; }
    double extent_z() const { return max.z - min.z; }

    double volume() const { return extent_x() * extent_y() * extent_z(); }

    Location center() const {
        return {0.5 * (min.x + max.x), 0.5 * (min.y + max.y), 0.5 * (min.z + max.z)};
    }

    void validate() const {
        if (!min.is_finite() || !max.is_finite()) {
            throw ConfigError("box bounds must be finite");
        }
        if (extent_x() <= 0.0 || extent_y() <= 0.0 || extent_z() <= 0.0) {
            throw ConfigError("box must have positive extent on every axis");
        }
    }

    friend bool operator==(const Box&, const Box&) = default;
};

}  // namespace wvloc
