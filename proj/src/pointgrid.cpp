#include "unfurl/pointgrid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace unfurl {

namespace {

// Median nearest-other-point distance of a subsample, as a cell-size guess.
double estimate_spacing(const Points& pts) {
    const std::size_t n = pts.size();
    const std::size_t sample = std::min<std::size_t>(n, 128);
    const std::size_t stride = std::max<std::size_t>(1, n / sample);
    std::vector<double> dists;
    dists.reserve(sample);
    for (std::size_t i = 0; i < n; i += stride) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            best = std::min(best, (pts[i] - pts[j]).squaredNorm());
        }
        if (std::isfinite(best)) dists.push_back(std::sqrt(best));
    }
    if (dists.empty()) return 1.0;
    auto mid = dists.begin() + dists.size() / 2;
    std::nth_element(dists.begin(), mid, dists.end());
    return std::max(*mid, 1e-9);
}

}  // namespace

PointGrid::PointGrid(Points points, double cell_size, std::size_t brute_force_below)
    : points_(std::move(points)) {
    if (points_.empty()) throw EmptyInput("PointGrid: empty point set");
    if (points_.size() < brute_force_below) {
        brute_ = true;
        return;
    }
    cell_ = cell_size > 0.0 ? cell_size : 2.0 * estimate_spacing(points_);
    cells_.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i)
        cells_[key_of(points_[i])].push_back(static_cast<int>(i));
}

PointGrid::CellKey PointGrid::key_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

int PointGrid::brute_nearest(const Vec3& q) const {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const double d2 = (points_[i] - q).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(i);
        }
    }
    return best;
}

int PointGrid::nearest(const Vec3& q) const {
    if (brute_) return brute_nearest(q);

    const CellKey qk = key_of(q);
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    // Expand rings of cells around the query. A point in ring r is at least
    // (r-1)*cell away, so once best < (r-1)*cell the search is complete.
    for (std::int64_t ring = 0;; ++ring) {
        if (best >= 0) {
            const double safe = (static_cast<double>(ring) - 1.0) * cell_;
            if (safe > 0.0 && best_d2 < safe * safe) break;
        }
        bool any_cells_left = ring < (1 << 24);  // paranoia bound
        if (!any_cells_left) break;
        for (std::int64_t dx = -ring; dx <= ring; ++dx) {
            for (std::int64_t dy = -ring; dy <= ring; ++dy) {
                for (std::int64_t dz = -ring; dz <= ring; ++dz) {
                    // ring shell only
                    if (std::max({std::llabs(dx), std::llabs(dy), std::llabs(dz)}) != ring)
                        continue;
                    auto it = cells_.find({qk.x + dx, qk.y + dy, qk.z + dz});
                    if (it == cells_.end()) continue;
                    for (int idx : it->second) {
                        const double d2 = (points_[idx] - q).squaredNorm();
                        if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
                            best_d2 = d2;
                            best = idx;
                        }
                    }
                }
            }
        }
        // If nothing found yet keep growing; the set is nonempty so this
        // terminates.
    }
    return best;
}

std::vector<int> PointGrid::radius_query(const Vec3& q, double radius) const {
    std::vector<int> out;
    const double r2 = radius * radius;
    if (brute_) {
        for (std::size_t i = 0; i < points_.size(); ++i)
            if ((points_[i] - q).squaredNorm() <= r2) out.push_back(static_cast<int>(i));
        return out;
    }
    const CellKey lo = key_of(q - Vec3::Constant(radius));
    const CellKey hi = key_of(q + Vec3::Constant(radius));
    for (std::int64_t x = lo.x; x <= hi.x; ++x)
        for (std::int64_t y = lo.y; y <= hi.y; ++y)
            for (std::int64_t z = lo.z; z <= hi.z; ++z) {
                auto it = cells_.find({x, y, z});
                if (it == cells_.end()) continue;
                for (int idx : it->second)
                    if ((points_[idx] - q).squaredNorm() <= r2) out.push_back(idx);
            }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace unfurl
