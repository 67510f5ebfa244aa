#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "unfurl/errors.hpp"

namespace unfurl {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Points = std::vector<Vec3>;

enum class EdgeKind : std::uint8_t { Stretch = 0, Shear = 1, Bend = 2 };

const char* edge_kind_name(EdgeKind kind);
EdgeKind edge_kind_from_name(const std::string& name);

struct Edge {
    int i = 0;
    int j = 0;
    double rest_length = 0.0;
    EdgeKind kind = EdgeKind::Stretch;
};

/// Cloth as a particle mesh: metric positions/velocities, spring edges with
/// rest lengths, and per-vertex canonical coordinates (the normalized flat
/// layout used for clustering and goal construction). Faces are carried for
/// rendering only.
struct ClothMesh {
    Points positions;
    Points velocities;
    Points canonical_coords;
    std::vector<Edge> edges;
    std::vector<std::array<int, 3>> faces;

    int vertex_count() const { return static_cast<int>(positions.size()); }

    /// Throws DegenerateInput if any structural invariant is violated
    /// (index out of range, self-edge, nonpositive rest length, mismatched
    /// array lengths, duplicate undirected edge of the same kind).
    void validate() const;

    /// Undirected neighbor lists restricted to stretch edges (the grid
    /// adjacency); used by smoothing and occluded-patch labeling.
    std::vector<std::vector<int>> stretch_adjacency() const;
};

/// Meters-per-canonical-unit of a mesh: median over edges of
/// rest_length / canonical distance. For garments whose canonical layout is
/// the flat pose scaled into the unit cube this recovers the bounding-box
/// diagonal of the flat pose exactly.
double canonical_scale(const ClothMesh& mesh);

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    Points apply(const Points& pts) const;

    /// True when rotation is orthonormal with det +1 within `tol`.
    bool is_proper(double tol = 1e-9) const;
};

struct AlignResult {
    RigidTransform transform;
    /// Set when the rotation was under-determined (fewer than 3 points or a
    /// collinear source cloud); the transform is still the best effort.
    bool degenerate = false;
};

/// Kabsch alignment: the proper rotation + translation minimizing mean
/// squared index-wise distance from source to target. Reflections are never
/// returned; for mirror-image inputs the residual stays positive instead.
AlignResult kabsch_align(const Points& source, const Points& target);

double rmsd(const Points& a, const Points& b);

struct ClusterResult {
    ClothMesh mesh;
    /// dense vertex index -> cluster vertex index (total)
    std::vector<int> mapping;
};

/// Voxel-grid vertex clustering in canonical space. One output vertex per
/// nonempty voxel at the member centroid (positions, velocities and canonical
/// coordinates all averaged); an output edge (u,v) per kind exists iff some
/// input edge of that kind joins the clusters, with rest length averaged over
/// contributing edges. Clustering in canonical space keeps separate cloth
/// layers from merging. Faces are dropped.
ClusterResult vertex_cluster(const ClothMesh& mesh, double voxel_size);

/// Positions averaged per cluster under a vertex_cluster mapping; used to
/// carry goal poses and estimates onto the downsampled mesh.
Points apply_clustering(const std::vector<int>& mapping, int cluster_count,
                        const Points& dense_positions);

/// Covered area when every vertex is projected to the ground plane as a disk
/// of sphere_radius: disks are rasterized onto a square grid and occupied
/// cells are counted. Grid quantization error is bounded by the disk
/// perimeter times the cell size.
double coverage(const Points& positions, double sphere_radius = 0.005,
                double grid_resolution = 0.001);

struct GoalSet {
    std::vector<Points> goals;
    int symmetry_order = 1;
    bool mirrored = false;

    int size() const { return static_cast<int>(goals.size()); }
};

/// Symmetry expansion of a canonical flattened pose: rotations by
/// 2*pi*k/symmetry_order about the vertical axis through the centroid,
/// plus reflected copies when mirrored.
GoalSet build_goal_set(const Points& canonical_flat_pose, int symmetry_order,
                       bool mirrored = false);

/// min over goals of the mean squared vertex distance (index-wise). When
/// align_first, each goal is first Kabsch-aligned onto V so rigid offsets
/// are not penalized. Units: m^2.
double canonicalization_cost(const Points& V, const GoalSet& goal_set,
                             bool align_first);

/// (cost_init - cost_cur) / cost_init. Throws ZeroBaseline when cost_init
/// is 0.
double normalized_improvement(double cost_init, double cost_cur);

/// Flattening variant: fraction of the coverage gap to the flattened pose
/// closed so far. Throws ZeroBaseline when cov_flat <= cov_init.
double normalized_improvement_coverage(double cov_init, double cov_cur,
                                       double cov_flat);

// --- serialization ---------------------------------------------------------
// Line format: `v x y z` position, `c x y z` canonical coordinate,
// `e i j rest kind` edge, `f i j k` face. 0-based indices, SI units.
// The JSON form carries the same records as arrays.

void write_mesh_text(std::ostream& out, const ClothMesh& mesh);
ClothMesh read_mesh_text(std::istream& in);
void write_mesh_json(std::ostream& out, const ClothMesh& mesh);
ClothMesh read_mesh_json(std::istream& in);

/// Dispatches on extension: ".json" JSON, anything else text.
void save_mesh(const std::string& path, const ClothMesh& mesh);
/// Dispatches on leading '{' so either container loads from any extension.
ClothMesh load_mesh(const std::string& path);

}  // namespace unfurl
