#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wvloc/errors.hpp"
#include "wvloc/geometry.hpp"
#include "wvloc/types.hpp"

namespace wvloc {

/// One cell of the floor partition. Cells span the full z slab; the grid
/// subdivides the xy plane only.
struct Area {
    int index = 0;
    Box bounds;

    friend bool operator==(const Area&, const Area&) = default;
};

/// Disjoint tiling of the floor into N_A axis-aligned cells, with each
/// reference point assigned to exactly one cell. Immutable after construction.
class AreaPartition {
public:
    AreaPartition() = default;

    AreaPartition(Box floor, int nx, int ny, std::vector<Area> areas,
                  std::vector<int> rp_membership, std::vector<std::string> warnings)
        : floor_(floor),
          nx_(nx),
          ny_(ny),
          areas_(std::move(areas)),
          rp_membership_(std::move(rp_membership)),
          warnings_(std::move(warnings)) {}

    const Box& floor() const noexcept { return floor_; }
    int cells_x() const noexcept { return nx_; }
    int cells_y() const noexcept { return ny_; }
    int n_areas() const noexcept { return static_cast<int>(areas_.size()); }
    const std::vector<Area>& areas() const noexcept { return areas_; }
    const Area& area(int j) const { return areas_[static_cast<std::size_t>(j)]; }

    /// RP index -> area index.
    const std::vector<int>& rp_membership() const noexcept { return rp_membership_; }
    int area_of_rp(int rp_index) const { return rp_membership_[static_cast<std::size_t>(rp_index)]; }

    /// Index of the area containing p; boundary points go to the lowest
    /// containing index. Throws when p is outside every cell.
    int area_containing(const Location& p) const {
        for (const Area& a : areas_) {
            if (a.bounds.contains(p)) return a.index;
        }
        throw ConfigError("location (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                          ", " + std::to_string(p.z) + ") lies outside every area");
    }

    /// Empty-cell diagnostics collected at construction.
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

    friend bool operator==(const AreaPartition&, const AreaPartition&) = default;

private:
    Box floor_;
    int nx_ = 0;
    int ny_ = 0;
    std::vector<Area> areas_;
    std::vector<int> rp_membership_;
    std::vector<std::string> warnings_;
};

/// Builds an n_cells_x by n_cells_y rectangular grid partition of the floor
/// and assigns every RP to the cell containing it. Cell edges are computed so
/// the cells tile the floor exactly; a point on a shared edge belongs to the
/// lower-index cell. Empty cells are permitted but reported in the warning
/// list. Throws when an RP lies outside the floor or RP indices are not
/// unique and contiguous from zero.
inline AreaPartition make_grid_partition(const Box& floor, int n_cells_x, int n_cells_y,
                                         const std::vector<ReferencePoint>& rps) {
    floor.validate();
    if (n_cells_x <= 0 || n_cells_y <= 0) {
        throw ConfigError("cell counts must be positive");
    }

    const int nx = n_cells_x;
    const int ny = n_cells_y;
    // Edge i is exact at both ends so the union of cells is exactly the floor.
    auto edge = [](double lo, double hi, int n, int i) {
        if (i == 0) return lo;
        if (i == n) return hi;
        return lo + (hi - lo) * (static_cast<double>(i) / n);
    };

    std::vector<Area> areas;
    areas.reserve(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            Box cell{{edge(floor.min.x, floor.max.x, nx, ix),
                      edge(floor.min.y, floor.max.y, ny, iy), floor.min.z},
                     {edge(floor.min.x, floor.max.x, nx, ix + 1),
                      edge(floor.min.y, floor.max.y, ny, iy + 1), floor.max.z}};
            areas.push_back(Area{iy * nx + ix, cell});
        }
    }

    std::vector<int> seen(rps.size(), 0);
    std::vector<int> membership(rps.size(), -1);
    for (const ReferencePoint& rp : rps) {
        if (rp.index < 0 || rp.index >= static_cast<int>(rps.size()) ||
            seen[static_cast<std::size_t>(rp.index)]) {
            throw ConfigError("RP indices must be unique and contiguous from zero");
        }
        seen[static_cast<std::size_t>(rp.index)] = 1;
        if (!floor.contains(rp.location)) {
            throw ConfigError("RP " + std::to_string(rp.index) + " lies outside the floor bounds");
        }
        // Lowest containing cell wins, which realizes the boundary tie rule.
        int assigned = -1;
        for (const Area& a : areas) {
            if (a.bounds.contains(rp.location)) {
                assigned = a.index;
                break;
            }
        }
        if (assigned < 0) {
            throw ConfigError("RP " + std::to_string(rp.index) + " not contained in any cell");
        }
        membership[static_cast<std::size_t>(rp.index)] = assigned;
    }

    std::vector<int> count(areas.size(), 0);
    for (int m : membership) {
        ++count[static_cast<std::size_t>(m)];
    }
    std::vector<std::string> warnings;
    for (const Area& a : areas) {
        if (count[static_cast<std::size_t>(a.index)] == 0) {
            warnings.push_back("area " + std::to_string(a.index) + " contains no reference points");
        }
    }

    return AreaPartition(floor, nx, ny, std::move(areas), std::move(membership),
                         std::move(warnings));
}

}  // namespace wvloc
