#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include <Eigen/Geometry>

#include "oracles.hpp"
#include "unfurl/geometry.hpp"
#include "unfurl/pointgrid.hpp"
#include "unfurl/rng.hpp"

using namespace unfurl;

namespace {

Points random_cloud(Rng& rng, int n, double extent = 1.0) {
    Points pts;
    pts.reserve(n);
    for (int i = 0; i < n; ++i)
        pts.push_back(Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                           rng.uniform(-extent, extent)));
    return pts;
}

Mat3 rotation_about(const Vec3& axis_unit, double angle) {
    return Eigen::AngleAxisd(angle, axis_unit).toRotationMatrix();
}

Mat3 random_rotation(Rng& rng) {
    return rotation_about(rng.unit_vector(), rng.uniform(0.0, 2.0 * M_PI));
}

}  // namespace

TEST_CASE("kabsch identity on equal clouds") {
    Rng rng(11);
    const Points cloud = random_cloud(rng, 12);
    const AlignResult a = kabsch_align(cloud, cloud);
    CHECK(!a.degenerate);
    CHECK((a.transform.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(a.transform.translation.norm() < 1e-12);
}

TEST_CASE("kabsch recovers a constructed rigid transform") {
    // tetrahedron, rotated 90 degrees about y and shifted
    const Points source = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    const Mat3 r90 = rotation_about(Vec3::UnitY(), M_PI / 2.0);
    const Vec3 t(0.1, 0, 0);
    Points target;
    for (const Vec3& p : source) target.push_back(r90 * p + t);

    const AlignResult a = kabsch_align(source, target);
    CHECK(!a.degenerate);
    CHECK(a.transform.is_proper(1e-9));
    CHECK(rmsd(a.transform.apply(source), target) < 1e-9);
}

TEST_CASE("kabsch rejects reflections") {
    const Points source = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    Points mirrored;
    for (const Vec3& p : source) mirrored.push_back(Vec3(-p.x(), p.y(), p.z()));
    const AlignResult a = kabsch_align(source, mirrored);
    CHECK(a.transform.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rmsd(a.transform.apply(source), mirrored) > 1e-3);
}

TEST_CASE("kabsch flags degenerate inputs") {
    const Points two = {{0, 0, 0}, {1, 0, 0}};
    CHECK(kabsch_align(two, two).degenerate);

    Points line, line_t;
    for (int i = 0; i < 6; ++i) {
        line.push_back(Vec3(0.1 * i, 0, 0));
        line_t.push_back(Vec3(0, 0.1 * i, 0));
    }
    const AlignResult a = kabsch_align(line, line_t);
    CHECK(a.degenerate);
    // best effort still maps the line onto the target line
    CHECK(rmsd(a.transform.apply(line), line_t) < 1e-9);
}

TEST_CASE("kabsch output is always a proper rigid transform") {
    Rng rng(42);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_index(20));
        const Points src = random_cloud(rng, n);
        const Mat3 rot = random_rotation(rng);
        const Vec3 t = rng.normal3(0.5);
        Points dst;
        for (const Vec3& p : src) dst.push_back(rot * p + t);
        const AlignResult a = kabsch_align(src, dst);
        CHECK(a.transform.is_proper(1e-9));
        CHECK(rmsd(a.transform.apply(src), dst) < 1e-8);
    }
}

TEST_CASE("vertex_cluster merges a single voxel to its centroid") {
    ClothMesh mesh;
    Rng rng(3);
    Vec3 sum = Vec3::Zero();
    for (int i = 0; i < 5; ++i) {
        const Vec3 c(0.4 + 0.01 * rng.uniform(), 0.2, 0.4 + 0.01 * rng.uniform());
        mesh.canonical_coords.push_back(c);
        mesh.positions.push_back(10.0 * c);
        sum += 10.0 * c;
    }
    mesh.velocities.assign(5, Vec3::Zero());
    // a couple of edges inside the voxel collapse away
    mesh.edges.push_back({0, 1, 0.01, EdgeKind::Stretch});
    mesh.edges.push_back({2, 3, 0.01, EdgeKind::Stretch});

    const ClusterResult r = vertex_cluster(mesh, 1.0);
    CHECK(r.mesh.vertex_count() == 1);
    CHECK(r.mesh.edges.empty());
    CHECK((r.mesh.positions[0] - sum / 5.0).norm() < 1e-12);
    for (int m : r.mapping) CHECK(m == 0);
}

TEST_CASE("vertex_cluster groups columns of a 2x2 grid") {
    // canonical x in {0.5, 2.0} crosses a voxel boundary at 1.5, canonical z
    // in {0.1, 1.1} stays inside one voxel: the two columns survive, rows
    // merge. Expected assignment enumerated by hand with floor(c/1.5).
    ClothMesh mesh;
    const double xs[2] = {0.5, 2.0};
    const double zs[2] = {0.1, 1.1};
    for (double x : xs)
        for (double z : zs) {
            mesh.canonical_coords.push_back(Vec3(x, 0, z));
            mesh.positions.push_back(Vec3(x, 0, z));
        }
    mesh.velocities.assign(4, Vec3::Zero());
    // one rung between the columns, one inside each column
    mesh.edges.push_back({0, 2, 1.5, EdgeKind::Stretch});
    mesh.edges.push_back({0, 1, 1.0, EdgeKind::Stretch});
    mesh.edges.push_back({2, 3, 1.0, EdgeKind::Stretch});

    const ClusterResult r = vertex_cluster(mesh, 1.5);
    CHECK(r.mesh.vertex_count() == 2);
    REQUIRE(r.mesh.edges.size() == 1);
    CHECK(r.mesh.edges[0].rest_length == doctest::Approx(1.5));
    CHECK(r.mapping[0] == r.mapping[1]);
    CHECK(r.mapping[2] == r.mapping[3]);
    CHECK(r.mapping[0] != r.mapping[2]);
}

TEST_CASE("vertex_cluster at fine voxel size is the identity on vertex count") {
    Rng rng(7);
    ClothMesh mesh;
    for (int i = 0; i < 30; ++i) {
        const Vec3 c = random_cloud(rng, 1)[0];
        mesh.canonical_coords.push_back(c);
        mesh.positions.push_back(c * 2.0);
    }
    mesh.velocities.assign(30, Vec3::Zero());
    double min_dist = 1e9;
    for (int i = 0; i < 30; ++i)
        for (int j = i + 1; j < 30; ++j)
            min_dist = std::min(min_dist,
                                (mesh.canonical_coords[i] - mesh.canonical_coords[j]).norm());
    const ClusterResult r = vertex_cluster(mesh, min_dist * 0.4);
    CHECK(r.mesh.vertex_count() == 30);
}

TEST_CASE("coverage of a single disk matches the analytic area") {
    const double r = 0.005;
    const double analytic = M_PI * r * r;
    const double got = coverage({Vec3(0.03, 0.2, -0.01)}, r, 0.001);
    CHECK(got == doctest::Approx(analytic).epsilon(0.10));
}

TEST_CASE("coverage union semantics") {
    const double r = 0.005;
    const double one = coverage({Vec3(0, 0, 0)}, r, 0.001);
    // stacked vertices add nothing
    const double stacked = coverage({Vec3(0, 0.0, 0), Vec3(0, 0.37, 0)}, r, 0.001);
    CHECK(stacked == doctest::Approx(one));
    // disjoint disks add up
    const double apart = coverage({Vec3(0, 0, 0), Vec3(1.0, 0, 0)}, r, 0.001);
    CHECK(apart == doctest::Approx(2.0 * one).epsilon(0.10));
}

TEST_CASE("coverage is invariant to vertex permutation and ground translation") {
    Rng rng(5);
    Points pts = random_cloud(rng, 40, 0.1);
    const double base = coverage(pts, 0.005, 0.001);

    std::reverse(pts.begin(), pts.end());
    CHECK(coverage(pts, 0.005, 0.001) == doctest::Approx(base));

    const Vec3 shift(0.173, 0.0, -0.061);
    for (Vec3& p : pts) p += shift;
    // one grid cell of quantization slack
    const double cell_area = 0.001 * 0.001;
    const double perimeter_cells = 40.0 * (2.0 * M_PI * 0.005 / 0.001 + 4.0);
    CHECK(std::abs(coverage(pts, 0.005, 0.001) - base) <= perimeter_cells * cell_area);
}

TEST_CASE("build_goal_set sizes and rotational structure") {
    Rng rng(9);
    const Points base = random_cloud(rng, 25, 0.2);

    const GoalSet g1 = build_goal_set(base, 1, false);
    CHECK(g1.size() == 1);
    CHECK(rmsd(g1.goals[0], base) == doctest::Approx(0.0));

    const GoalSet g2 = build_goal_set(base, 2, false);
    REQUIRE(g2.size() == 2);
    // rotating either goal by 180 degrees about the centroid axis gives the other
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : base) c += p;
    c /= static_cast<double>(base.size());
    const Mat3 r180 = rotation_about(Vec3::UnitY(), M_PI);
    Points rotated;
    for (const Vec3& p : g2.goals[1]) rotated.push_back(r180 * (p - c) + c);
    CHECK(rmsd(rotated, g2.goals[0]) < 1e-9);

    const GoalSet g12 = build_goal_set(base, 12, false);
    CHECK(g12.size() == 12);
    const GoalSet g2m = build_goal_set(base, 2, true);
    CHECK(g2m.size() == 4);
}

TEST_CASE("canonicalization_cost basics") {
    Rng rng(13);
    const Points base = random_cloud(rng, 20, 0.3);
    const GoalSet gs = build_goal_set(base, 2, false);

    CHECK(canonicalization_cost(base, gs, false) == doctest::Approx(0.0));

    // 180-degree rotated copy is in the goal set
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : base) c += p;
    c /= static_cast<double>(base.size());
    Points rotated;
    for (const Vec3& p : base)
        rotated.push_back(rotation_about(Vec3::UnitY(), M_PI) * (p - c) + c);
    CHECK(canonicalization_cost(rotated, gs, false) < 1e-9);

    // rigid offset removed by alignment
    Points shifted;
    for (const Vec3& p : base) shifted.push_back(p + Vec3(0.3, 0.0, 0.1));
    CHECK(canonicalization_cost(shifted, gs, true) < 1e-9);
    CHECK(canonicalization_cost(shifted, gs, false) > 1e-3);

    CHECK_THROWS_AS(canonicalization_cost(base, GoalSet{}, false), EmptyGoalSet);
}

TEST_CASE("canonicalization_cost invariances") {
    Rng rng(17);
    const Points base = random_cloud(rng, 15, 0.2);
    const GoalSet gs = build_goal_set(base, 4, false);
    Points v = random_cloud(rng, 15, 0.2);

    // align_first: invariant to any proper rigid motion of V
    const double c0 = canonicalization_cost(v, gs, true);
    const Mat3 rot = random_rotation(rng);
    const Vec3 t = rng.normal3(0.2);
    Points moved;
    for (const Vec3& p : v) moved.push_back(rot * p + t);
    CHECK(canonicalization_cost(moved, gs, true) == doctest::Approx(c0).epsilon(1e-6));

    // no alignment: invariant to rotation by the symmetry increment about the
    // goal axis
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : base) c += p;
    c /= static_cast<double>(base.size());
    const double d0 = canonicalization_cost(v, gs, false);
    Points sym;
    for (const Vec3& p : v)
        sym.push_back(rotation_about(Vec3::UnitY(), 2.0 * M_PI / 4.0) * (p - c) + c);
    CHECK(canonicalization_cost(sym, gs, false) == doctest::Approx(d0).epsilon(1e-6));
}

TEST_CASE("normalized_improvement") {
    CHECK(normalized_improvement(2.0, 2.0) == doctest::Approx(0.0));
    CHECK(normalized_improvement(2.0, 0.0) == doctest::Approx(1.0));
    CHECK(normalized_improvement(2.0, 1.0) == doctest::Approx(0.5));
    CHECK_THROWS_AS(normalized_improvement(0.0, 1.0), ZeroBaseline);
    // scale invariance
    CHECK(normalized_improvement(3.0, 0.6) == doctest::Approx(normalized_improvement(30.0, 6.0)));

    CHECK(normalized_improvement_coverage(0.1, 0.2, 0.3) == doctest::Approx(0.5));
    CHECK_THROWS_AS(normalized_improvement_coverage(0.3, 0.1, 0.3), ZeroBaseline);
}

TEST_CASE("mesh validate catches structural errors") {
    ClothMesh mesh;
    mesh.positions = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    mesh.velocities.assign(2, Vec3::Zero());
    mesh.canonical_coords.assign(2, Vec3::Zero());
    mesh.edges.push_back({0, 1, 1.0, EdgeKind::Stretch});
    CHECK_NOTHROW(mesh.validate());

    ClothMesh self_edge = mesh;
    self_edge.edges.push_back({1, 1, 1.0, EdgeKind::Bend});
    CHECK_THROWS_AS(self_edge.validate(), DegenerateInput);

    ClothMesh dup = mesh;
    dup.edges.push_back({1, 0, 2.0, EdgeKind::Stretch});
    CHECK_THROWS_AS(dup.validate(), DegenerateInput);

    ClothMesh bad_rest = mesh;
    bad_rest.edges[0].rest_length = 0.0;
    CHECK_THROWS_AS(bad_rest.validate(), DegenerateInput);

    ClothMesh oob = mesh;
    oob.edges.push_back({0, 5, 1.0, EdgeKind::Shear});
    CHECK_THROWS_AS(oob.validate(), DegenerateInput);
}

TEST_CASE("mesh text and json round-trips preserve geometry") {
    Rng rng(23);
    ClothMesh mesh;
    for (int i = 0; i < 9; ++i) {
        mesh.positions.push_back(random_cloud(rng, 1, 0.3)[0]);
        mesh.canonical_coords.push_back(random_cloud(rng, 1, 0.5)[0]);
    }
    mesh.velocities.assign(9, Vec3::Zero());
    mesh.edges.push_back({0, 1, 0.1, EdgeKind::Stretch});
    mesh.edges.push_back({1, 2, 0.1, EdgeKind::Shear});
    mesh.edges.push_back({2, 3, 0.2, EdgeKind::Bend});
    mesh.faces.push_back({0, 1, 2});

    std::stringstream text;
    write_mesh_text(text, mesh);
    const ClothMesh back = read_mesh_text(text);
    REQUIRE(back.vertex_count() == 9);
    CHECK(rmsd(back.positions, mesh.positions) < 1e-12);
    CHECK(rmsd(back.canonical_coords, mesh.canonical_coords) < 1e-12);
    REQUIRE(back.edges.size() == 3);
    CHECK(back.edges[1].kind == EdgeKind::Shear);
    REQUIRE(back.faces.size() == 1);

    std::stringstream js;
    write_mesh_json(js, mesh);
    const ClothMesh back2 = read_mesh_json(js);
    CHECK(rmsd(back2.positions, mesh.positions) < 1e-12);
    CHECK(back2.edges.size() == 3);
}

TEST_CASE("point grid nearest matches brute force") {
    Rng rng(31);
    // force the grid path with a low brute-force threshold
    for (int trial = 0; trial < 5; ++trial) {
        const Points pts = random_cloud(rng, 600, 0.5);
        const PointGrid grid(pts, 0.0, 8);
        for (int q = 0; q < 200; ++q) {
            const Vec3 query = random_cloud(rng, 1, 0.7)[0];
            CHECK(grid.nearest(query) == oracle::nearest_brute(pts, query));
        }
    }
}

TEST_CASE("point grid radius query matches brute force") {
    Rng rng(37);
    const Points pts = random_cloud(rng, 500, 0.5);
    const PointGrid grid(pts, 0.05, 8);
    for (int q = 0; q < 50; ++q) {
        const Vec3 query = random_cloud(rng, 1, 0.6)[0];
        const double radius = rng.uniform(0.01, 0.2);
        std::vector<int> expected;
        for (std::size_t i = 0; i < pts.size(); ++i)
            if ((pts[i] - query).norm() <= radius) expected.push_back(static_cast<int>(i));
        CHECK(grid.radius_query(query, radius) == expected);
    }
}
