#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "unfurl/geometry.hpp"

namespace unfurl {

/// Exact nearest-neighbor index over a fixed point set, backed by a uniform
/// hash grid. Queries expand cell rings until the best distance found is
/// provably closer than any unvisited ring, so results match brute force
/// (ties broken by lowest point index). Falls back to brute force for small
/// sets where the grid does not pay off.
class PointGrid {
public:
    /// cell_size <= 0 picks a size from the data (2x the median spacing of a
    /// subsample). brute_force_below: point counts under this skip the grid.
    explicit PointGrid(Points points, double cell_size = 0.0,
                       std::size_t brute_force_below = 500);

    /// Index of the nearest point to q (lowest index on exact ties).
    int nearest(const Vec3& q) const;

    /// All point indices within `radius` of q, sorted ascending.
    std::vector<int> radius_query(const Vec3& q, double radius) const;

    double cell_size() const { return cell_; }
    const Points& points() const { return points_; }

private:
    struct CellKey {
        std::int64_t x, y, z;
        bool operator==(const CellKey&) const = default;
    };
    struct CellHash {
        std::size_t operator()(const CellKey& k) const {
            std::uint64_t h = 1469598103934665603ULL;
            for (std::int64_t v : {k.x, k.y, k.z}) {
                h ^= static_cast<std::uint64_t>(v);
                h *= 1099511628211ULL;
            }
            return static_cast<std::size_t>(h);
        }
    };

    CellKey key_of(const Vec3& p) const;
    int brute_nearest(const Vec3& q) const;

    Points points_;
    bool brute_ = false;
    double cell_ = 1.0;
    std::unordered_map<CellKey, std::vector<int>, CellHash> cells_;
};

}  // namespace unfurl
