#include "unfurl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <nlohmann/json.hpp>

namespace unfurl {

using json = nlohmann::json;

const char* edge_kind_name(EdgeKind kind) {
    switch (kind) {
        case EdgeKind::Stretch: return "stretch";
        case EdgeKind::Shear: return "shear";
        case EdgeKind::Bend: return "bend";
    }
    return "stretch";
}

EdgeKind edge_kind_from_name(const std::string& name) {
    if (name == "stretch") return EdgeKind::Stretch;
    if (name == "shear") return EdgeKind::Shear;
    if (name == "bend") return EdgeKind::Bend;
    throw IoError("unknown edge kind: " + name);
}

void ClothMesh::validate() const {
    const int n = vertex_count();
    if (velocities.size() != positions.size() ||
        canonical_coords.size() != positions.size()) {
        throw DegenerateInput("mesh arrays have mismatched lengths");
    }
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(edges.size());
    for (const Edge& e : edges) {
        if (e.i < 0 || e.i >= n || e.j < 0 || e.j >= n)
            throw DegenerateInput("edge index out of range");
        if (e.i == e.j) throw DegenerateInput("self edge");
        if (!(e.rest_length > 0.0)) throw DegenerateInput("nonpositive rest length");
        const std::uint64_t a = static_cast<std::uint64_t>(std::min(e.i, e.j));
        const std::uint64_t b = static_cast<std::uint64_t>(std::max(e.i, e.j));
        const std::uint64_t key =
            (a << 34) | (b << 2) | static_cast<std::uint64_t>(e.kind);
        if (!seen.insert(key).second)
            throw DegenerateInput("duplicate undirected edge of same kind");
    }
    for (const auto& f : faces) {
        for (int idx : f) {
            if (idx < 0 || idx >= n) throw DegenerateInput("face index out of range");
        }
    }
}

std::vector<std::vector<int>> ClothMesh::stretch_adjacency() const {
    std::vector<std::vector<int>> adj(positions.size());
    for (const Edge& e : edges) {
        if (e.kind != EdgeKind::Stretch) continue;
        adj[e.i].push_back(e.j);
        adj[e.j].push_back(e.i);
    }
    return adj;
}

double canonical_scale(const ClothMesh& mesh) {
    std::vector<double> ratios;
    ratios.reserve(mesh.edges.size());
    for (const Edge& e : mesh.edges) {
        const double cd = (mesh.canonical_coords[e.i] - mesh.canonical_coords[e.j]).norm();
        if (cd > 1e-12) ratios.push_back(e.rest_length / cd);
    }
    if (ratios.empty())
        throw DegenerateInput("canonical_scale: no usable edges");
    auto mid = ratios.begin() + ratios.size() / 2;
    std::nth_element(ratios.begin(), mid, ratios.end());
    return *mid;
}

Points RigidTransform::apply(const Points& pts) const {
    Points out;
    out.reserve(pts.size());
    for (const Vec3& p : pts) out.push_back(apply(p));
    return out;
}

bool RigidTransform::is_proper(double tol) const {
    const Mat3 should_be_identity = rotation.transpose() * rotation - Mat3::Identity();
    if (should_be_identity.cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
}

namespace {

Vec3 centroid(const Points& pts) {
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : pts) c += p;
    return pts.empty() ? c : Vec3(c / static_cast<double>(pts.size()));
}

}  // namespace

AlignResult kabsch_align(const Points& source, const Points& target) {
    if (source.size() != target.size())
        throw DegenerateInput("kabsch_align: size mismatch");
    AlignResult result;
    const std::size_t n = source.size();
    if (n == 0) {
        result.degenerate = true;
        return result;
    }

    const Vec3 sc = centroid(source);
    const Vec3 tc = centroid(target);

    Mat3 cov = Mat3::Zero();      // cross-covariance target <- source
    Mat3 scatter = Mat3::Zero();  // source scatter, for degeneracy detection
    for (std::size_t k = 0; k < n; ++k) {
        const Vec3 s = source[k] - sc;
        const Vec3 t = target[k] - tc;
        cov += t * s.transpose();
        scatter += s * s.transpose();
    }

    // Collinear (or coincident) source clouds leave the rotation about the
    // line axis free; flag but still return the SVD's best effort.
    Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
    const Vec3 ev = eig.eigenvalues();  // ascending
    const double spread = std::max(ev[2], 0.0);
    if (n < 3 || ev[1] <= std::max(1e-12 * spread, 1e-24)) result.degenerate = true;

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    // Sign correction: never return a reflection.
    if ((u * v.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
    result.transform.rotation = u * d * v.transpose();
    result.transform.translation = tc - result.transform.rotation * sc;
    return result;
}

double rmsd(const Points& a, const Points& b) {
    if (a.size() != b.size()) throw DegenerateInput("rmsd: size mismatch");
    if (a.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]).squaredNorm();
    return std::sqrt(acc / static_cast<double>(a.size()));
}

namespace {

struct VoxelKey {
    std::int64_t x, y, z;
    bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::uint64_t h = 1469598103934665603ULL;
        for (std::int64_t v : {k.x, k.y, k.z}) {
            h ^= static_cast<std::uint64_t>(v);
            h *= 1099511628211ULL;
        }
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

ClusterResult vertex_cluster(const ClothMesh& mesh, double voxel_size) {
    if (!(voxel_size > 0.0)) throw DegenerateInput("vertex_cluster: voxel_size <= 0");
    const int n = mesh.vertex_count();
    if (n == 0) throw DegenerateInput("vertex_cluster: empty mesh");

    ClusterResult out;
    out.mapping.assign(n, -1);

    // Cluster ids assigned in first-visit order so output is deterministic.
    std::unordered_map<VoxelKey, int, VoxelKeyHash> voxel_to_cluster;
    voxel_to_cluster.reserve(static_cast<std::size_t>(n));
    int cluster_count = 0;
    for (int i = 0; i < n; ++i) {
        const Vec3& c = mesh.canonical_coords[i];
        const VoxelKey key{static_cast<std::int64_t>(std::floor(c.x() / voxel_size)),
                           static_cast<std::int64_t>(std::floor(c.y() / voxel_size)),
                           static_cast<std::int64_t>(std::floor(c.z() / voxel_size))};
        auto [it, inserted] = voxel_to_cluster.try_emplace(key, cluster_count);
        if (inserted) ++cluster_count;
        out.mapping[i] = it->second;
    }

    ClothMesh& cm = out.mesh;
    cm.positions.assign(cluster_count, Vec3::Zero());
    cm.velocities.assign(cluster_count, Vec3::Zero());
    cm.canonical_coords.assign(cluster_count, Vec3::Zero());
    std::vector<int> members(cluster_count, 0);
    for (int i = 0; i < n; ++i) {
        const int c = out.mapping[i];
        cm.positions[c] += mesh.positions[i];
        cm.velocities[c] += mesh.velocities[i];
        cm.canonical_coords[c] += mesh.canonical_coords[i];
        ++members[c];
    }
    for (int c = 0; c < cluster_count; ++c) {
        const double inv = 1.0 / members[c];
        cm.positions[c] *= inv;
        cm.velocities[c] *= inv;
        cm.canonical_coords[c] *= inv;
    }

    struct EdgeAgg {
        double rest_sum = 0.0;
        int count = 0;
    };
    std::map<std::tuple<int, int, int>, EdgeAgg> agg;  // (u, v, kind), u < v
    for (const Edge& e : mesh.edges) {
        int u = out.mapping[e.i];
        int v = out.mapping[e.j];
        if (u == v) continue;
        if (u > v) std::swap(u, v);
        EdgeAgg& a = agg[{u, v, static_cast<int>(e.kind)}];
        a.rest_sum += e.rest_length;
        ++a.count;
    }
    cm.edges.reserve(agg.size());
    for (const auto& [key, a] : agg) {
        const auto& [u, v, kind] = key;
        cm.edges.push_back({u, v, a.rest_sum / a.count, static_cast<EdgeKind>(kind)});
    }
    return out;
}

Points apply_clustering(const std::vector<int>& mapping, int cluster_count,
                        const Points& dense_positions) {
    if (mapping.size() != dense_positions.size())
        throw ShapeMismatch("apply_clustering: mapping/positions size mismatch");
    Points out(cluster_count, Vec3::Zero());
    std::vector<int> members(cluster_count, 0);
    for (std::size_t i = 0; i < mapping.size(); ++i) {
        out[mapping[i]] += dense_positions[i];
        ++members[mapping[i]];
    }
    for (int c = 0; c < cluster_count; ++c) {
        if (members[c] > 0) out[c] /= members[c];
    }
    return out;
}

double coverage(const Points& positions, double sphere_radius,
                double grid_resolution) {
    if (positions.empty()) return 0.0;
    if (!(sphere_radius > 0.0)) throw DegenerateInput("coverage: radius <= 0");
    if (!(grid_resolution > 0.0) || grid_resolution > sphere_radius / 2.0 + 1e-15)
        throw DegenerateInput("coverage: grid_resolution must be <= radius/2");

    double min_x = std::numeric_limits<double>::infinity();
    double min_z = std::numeric_limits<double>::infinity();
    double max_x = -min_x, max_z = -min_z;
    for (const Vec3& p : positions) {
        min_x = std::min(min_x, p.x());
        max_x = std::max(max_x, p.x());
        min_z = std::min(min_z, p.z());
        max_z = std::max(max_z, p.z());
    }
    // Grid anchored at the expanded bbox corner so the result is
    // translation-invariant up to sub-cell phase.
    const double ox = min_x - sphere_radius - grid_resolution;
    const double oz = min_z - sphere_radius - grid_resolution;
    const int nx = static_cast<int>(std::ceil((max_x + sphere_radius - ox) / grid_resolution)) + 2;
    const int nz = static_cast<int>(std::ceil((max_z + sphere_radius - oz) / grid_resolution)) + 2;

    std::vector<std::uint8_t> occupied(static_cast<std::size_t>(nx) * nz, 0);
    const double r2 = sphere_radius * sphere_radius;
    const int span = static_cast<int>(std::ceil(sphere_radius / grid_resolution)) + 1;
    for (const Vec3& p : positions) {
        const int cx = static_cast<int>(std::floor((p.x() - ox) / grid_resolution));
        const int cz = static_cast<int>(std::floor((p.z() - oz) / grid_resolution));
        for (int ix = std::max(0, cx - span); ix <= std::min(nx - 1, cx + span); ++ix) {
            const double dx = ox + (ix + 0.5) * grid_resolution - p.x();
            for (int iz = std::max(0, cz - span); iz <= std::min(nz - 1, cz + span); ++iz) {
                const double dz = oz + (iz + 0.5) * grid_resolution - p.z();
                if (dx * dx + dz * dz <= r2)
                    occupied[static_cast<std::size_t>(ix) * nz + iz] = 1;
            }
        }
    }
    std::size_t count = 0;
    for (std::uint8_t o : occupied) count += o;
    return static_cast<double>(count) * grid_resolution * grid_resolution;
}

GoalSet build_goal_set(const Points& canonical_flat_pose, int symmetry_order,
                       bool mirrored) {
    if (symmetry_order < 1) throw DegenerateInput("build_goal_set: symmetry_order < 1");
    GoalSet gs;
    gs.symmetry_order = symmetry_order;
    gs.mirrored = mirrored;
    const Vec3 c = centroid(canonical_flat_pose);
    for (int k = 0; k < symmetry_order; ++k) {
        const double angle = 2.0 * M_PI * k / symmetry_order;
        const double ca = std::cos(angle), sa = std::sin(angle);
        Mat3 rot;  // rotation about the vertical (y) axis
        rot << ca, 0.0, -sa,
               0.0, 1.0, 0.0,
               sa, 0.0, ca;
        Points g;
        g.reserve(canonical_flat_pose.size());
        for (const Vec3& p : canonical_flat_pose) g.push_back(rot * (p - c) + c);
        gs.goals.push_back(std::move(g));
    }
    if (mirrored) {
        const int base = gs.size();
        for (int k = 0; k < base; ++k) {
            Points g;
            g.reserve(gs.goals[k].size());
            for (const Vec3& p : gs.goals[k])
                g.emplace_back(2.0 * c.x() - p.x(), p.y(), p.z());
            gs.goals.push_back(std::move(g));
        }
    }
    return gs;
}

double canonicalization_cost(const Points& V, const GoalSet& goal_set,
                             bool align_first) {
    if (goal_set.goals.empty()) throw EmptyGoalSet("canonicalization_cost: no goals");
    const std::size_t n = V.size();
    double best = std::numeric_limits<double>::infinity();
    for (const Points& goal : goal_set.goals) {
        if (goal.size() != n)
            throw ShapeMismatch("canonicalization_cost: goal vertex count mismatch");
        double acc = 0.0;
        if (align_first) {
            const AlignResult a = kabsch_align(goal, V);
            for (std::size_t j = 0; j < n; ++j)
                acc += (a.transform.apply(goal[j]) - V[j]).squaredNorm();
        } else {
            for (std::size_t j = 0; j < n; ++j) acc += (goal[j] - V[j]).squaredNorm();
        }
        best = std::min(best, acc / static_cast<double>(n));
    }
    return best;
}

double normalized_improvement(double cost_init, double cost_cur) {
    if (cost_init == 0.0) throw ZeroBaseline("normalized_improvement: cost_init == 0");
    return (cost_init - cost_cur) / cost_init;
}

double normalized_improvement_coverage(double cov_init, double cov_cur,
                                       double cov_flat) {
    if (!(cov_flat > cov_init))
        throw ZeroBaseline("normalized_improvement_coverage: cov_flat <= cov_init");
    return (cov_cur - cov_init) / (cov_flat - cov_init);
}

// --- serialization ---------------------------------------------------------

void write_mesh_text(std::ostream& out, const ClothMesh& mesh) {
    out << std::setprecision(17);
    for (const Vec3& p : mesh.positions)
        out << "v " << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    for (const Vec3& c : mesh.canonical_coords)
        out << "c " << c.x() << ' ' << c.y() << ' ' << c.z() << '\n';
    for (const Edge& e : mesh.edges)
        out << "e " << e.i << ' ' << e.j << ' ' << e.rest_length << ' '
            << edge_kind_name(e.kind) << '\n';
    for (const auto& f : mesh.faces)
        out << "f " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

ClothMesh read_mesh_text(std::istream& in) {
    ClothMesh mesh;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p;
            ls >> p.x() >> p.y() >> p.z();
            if (!ls) throw IoError("bad vertex record: " + line);
            mesh.positions.push_back(p);
        } else if (tag == "c") {
            Vec3 c;
            ls >> c.x() >> c.y() >> c.z();
            if (!ls) throw IoError("bad canonical record: " + line);
            mesh.canonical_coords.push_back(c);
        } else if (tag == "e") {
            Edge e;
            std::string kind;
            ls >> e.i >> e.j >> e.rest_length >> kind;
            if (!ls) throw IoError("bad edge record: " + line);
            e.kind = edge_kind_from_name(kind);
            mesh.edges.push_back(e);
        } else if (tag == "f") {
            std::array<int, 3> f;
            ls >> f[0] >> f[1] >> f[2];
            if (!ls) throw IoError("bad face record: " + line);
            mesh.faces.push_back(f);
        } else {
            throw IoError("unknown mesh record: " + line);
        }
    }
    mesh.velocities.assign(mesh.positions.size(), Vec3::Zero());
    if (mesh.canonical_coords.empty())
        mesh.canonical_coords.assign(mesh.positions.size(), Vec3::Zero());
    mesh.validate();
    return mesh;
}

namespace {

json points_to_json(const Points& pts) {
    json arr = json::array();
    for (const Vec3& p : pts) arr.push_back({p.x(), p.y(), p.z()});
    return arr;
}

Points points_from_json(const json& arr) {
    Points pts;
    pts.reserve(arr.size());
    for (const auto& p : arr) pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    return pts;
}

}  // namespace

void write_mesh_json(std::ostream& out, const ClothMesh& mesh) {
    json j;
    j["positions"] = points_to_json(mesh.positions);
    j["canonical"] = points_to_json(mesh.canonical_coords);
    json edges = json::array();
    for (const Edge& e : mesh.edges)
        edges.push_back({e.i, e.j, e.rest_length, edge_kind_name(e.kind)});
    j["edges"] = edges;
    json faces = json::array();
    for (const auto& f : mesh.faces) faces.push_back({f[0], f[1], f[2]});
    j["faces"] = faces;
    out << j.dump(1) << '\n';
}

ClothMesh read_mesh_json(std::istream& in) {
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(std::string("bad mesh json: ") + e.what());
    }
    ClothMesh mesh;
    try {
        mesh.positions = points_from_json(j.at("positions"));
        mesh.canonical_coords = points_from_json(j.at("canonical"));
        for (const auto& e : j.at("edges")) {
            mesh.edges.push_back({e.at(0).get<int>(), e.at(1).get<int>(),
                                  e.at(2).get<double>(),
                                  edge_kind_from_name(e.at(3).get<std::string>())});
        }
        for (const auto& f : j.at("faces"))
            mesh.faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
    } catch (const json::exception& e) {
        throw IoError(std::string("bad mesh json: ") + e.what());
    }
    mesh.velocities.assign(mesh.positions.size(), Vec3::Zero());
    mesh.validate();
    return mesh;
}

void save_mesh(const std::string& path, const ClothMesh& mesh) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
        write_mesh_json(out, mesh);
    else
        write_mesh_text(out, mesh);
}

ClothMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    // Peek past whitespace: JSON documents start with '{'.
    char first = 0;
    in >> std::ws;
    first = static_cast<char>(in.peek());
    if (first == '{') return read_mesh_json(in);
    return read_mesh_text(in);
}

}  // namespace unfurl
