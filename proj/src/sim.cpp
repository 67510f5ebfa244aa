#include "unfurl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/Geometry>
#include <nlohmann/json.hpp>

#include "unfurl/rng.hpp"

namespace unfurl {

using json = nlohmann::json;

SimState SimState::from_mesh(ClothMesh m) {
    SimState s;
    s.mesh = std::move(m);
    s.picker_position = Vec3(0.0, 0.5, 0.0);
    return s;
}

namespace {

double spring_gain(const SimConfig& cfg, EdgeKind kind) {
    switch (kind) {
        case EdgeKind::Stretch: return cfg.stiffness_gain * cfg.stiffness_stretch;
        case EdgeKind::Shear: return cfg.stiffness_gain * cfg.stiffness_shear;
        case EdgeKind::Bend: return cfg.stiffness_gain * cfg.stiffness_bend;
    }
    return 0.0;
}

}  // namespace

void step(SimState& state, const SimConfig& config, const Vec3& picker_delta) {
    ClothMesh& mesh = state.mesh;
    const int n = mesh.vertex_count();
    const double dt = config.dt;
    const double inv_mass = 1.0 / config.particle_mass;

    state.picker_position += picker_delta;

    // Spring forces, pairwise equal and opposite.
    static thread_local Points forces;
    forces.assign(n, Vec3::Zero());
    for (const Edge& e : mesh.edges) {
        const Vec3 d = mesh.positions[e.j] - mesh.positions[e.i];
        const double len = d.norm();
        if (len <= 1e-12) continue;
        const double f = spring_gain(config, e.kind) * (len - e.rest_length) / len;
        const Vec3 fv = f * d;
        forces[e.i] += fv;
        forces[e.j] -= fv;
    }

    const double decay = std::max(0.0, 1.0 - config.damping * dt);
    const Vec3 gravity(0.0, config.gravity, 0.0);
    for (int i = 0; i < n; ++i) {
        Vec3& v = mesh.velocities[i];
        Vec3& p = mesh.positions[i];
        v += dt * (forces[i] * inv_mass + gravity);
        v *= decay;

        // Ground contact resolved at the velocity level: the normal impulse
        // that lands the vertex on the plane also scales down tangential
        // velocity by the Coulomb ratio.
        const double y_next = p.y() + dt * v.y();
        if (y_next < config.ground_height) {
            const double v_y_target = (config.ground_height - p.y()) / dt;
            const double normal_dv = v_y_target - v.y();
            const double vt = std::hypot(v.x(), v.z());
            if (vt > 0.0) {
                const double scale =
                    std::max(0.0, 1.0 - config.dynamic_friction * normal_dv / vt);
                v.x() *= scale;
                v.z() *= scale;
            }
            v.y() = v_y_target;
        }
        p += dt * v;
    }

    if (state.grasped_vertex) {
        const int g = *state.grasped_vertex;
        mesh.positions[g] = state.picker_position;
        mesh.velocities[g] = picker_delta / dt;
    }

    ++state.step_count;
    for (int i = 0; i < n; ++i) {
        if (!mesh.positions[i].allFinite() ||
            mesh.positions[i].cwiseAbs().maxCoeff() > config.blowup_limit) {
            throw NumericalBlowup("simulation diverged at vertex " + std::to_string(i),
                                  state.step_count);
        }
    }
}

std::optional<int> try_grasp(const SimState& state, const SimConfig& config) {
    int best = -1;
    double best_d = config.picker_threshold;
    for (int i = 0; i < state.mesh.vertex_count(); ++i) {
        const double d = (state.mesh.positions[i] - state.picker_position).norm();
        if (d <= best_d) {
            best_d = d;
            best = i;
        }
    }
    if (best < 0) return std::nullopt;
    return best;
}

namespace {

// Moves the picker to `target` in steps of at most speed*dt, stepping the
// cloth along the way; appends the per-step deltas.
void run_picker_segment(SimState& state, const SimConfig& cfg, const Vec3& target,
                        std::vector<Vec3>& deltas) {
    const double step_len = cfg.picker_speed * cfg.dt;
    while ((target - state.picker_position).norm() > 1e-12) {
        const Vec3 to_go = target - state.picker_position;
        const double dist = to_go.norm();
        const Vec3 delta = dist <= step_len ? to_go : Vec3(to_go * (step_len / dist));
        step(state, cfg, delta);
        deltas.push_back(delta);
    }
}

void settle(SimState& state, const SimConfig& cfg, int steps, std::vector<Vec3>* deltas) {
    for (int s = 0; s < steps; ++s) {
        step(state, cfg, Vec3::Zero());
        if (deltas) deltas->push_back(Vec3::Zero());
    }
}

}  // namespace

PrimitiveResult pick_place_execute(SimState state, const SimConfig& config,
                                   const PickPlaceAction& action) {
    PrimitiveResult res;
    if (action.noop) {
        settle(state, config, config.settle_steps, &res.picker_deltas);
        res.state = std::move(state);
        return res;
    }

    const double lift = action.lift_height > 0.0 ? action.lift_height : config.lift_height;
    state.grasped_vertex.reset();
    state.picker_position = action.pick + Vec3(0.0, lift, 0.0);

    run_picker_segment(state, config, action.pick, res.picker_deltas);
    state.grasped_vertex = try_grasp(state, config);
    res.grasped = state.grasped_vertex;
    if (state.grasped_vertex) {
        // vertex snaps to the picker and rides with it from here on
        state.mesh.positions[*state.grasped_vertex] = state.picker_position;
        state.mesh.velocities[*state.grasped_vertex] = Vec3::Zero();
    }

    const Vec3 lifted = action.pick + Vec3(0.0, lift, 0.0);
    run_picker_segment(state, config, lifted, res.picker_deltas);
    const Vec3 above_place(action.place.x(), action.pick.y() + lift, action.place.z());
    run_picker_segment(state, config, above_place, res.picker_deltas);

    state.grasped_vertex.reset();
    settle(state, config, config.settle_steps, &res.picker_deltas);
    res.state = std::move(state);
    return res;
}

std::vector<Vec3> lowlevel_deltas(const PickPlaceAction& action, double dt, int horizon) {
    if (horizon < 1) throw DegenerateInput("lowlevel_deltas: horizon < 1");
    std::vector<Vec3> deltas(horizon, Vec3::Zero());
    if (action.noop) return deltas;

    const double lift = action.lift_height;
    const Vec3 up(0.0, lift, 0.0);
    const Vec3 horiz(action.place.x() - action.pick.x(), 0.0,
                     action.place.z() - action.pick.z());
    const double total = lift + horiz.norm();
    if (total <= 1e-12) return deltas;

    int lift_steps = static_cast<int>(std::lround(horizon * lift / total));
    lift_steps = std::clamp(lift_steps, lift > 1e-12 ? 1 : 0, horizon);
    const int trans_steps = horizon - lift_steps;
    for (int t = 0; t < lift_steps; ++t) deltas[t] = up / lift_steps;
    if (trans_steps > 0 && horiz.norm() > 1e-12) {
        for (int t = lift_steps; t < horizon; ++t) deltas[t] = horiz / trans_steps;
    }
    return deltas;
}

RandomizeMode choose_randomize_mode(std::uint64_t seed) {
    Rng rng(seed ^ 0x6d0d75c55a1fULL);
    return rng.uniform() < 0.5 ? RandomizeMode::Drop : RandomizeMode::RandomActions;
}

namespace {

void settle_until_quiescent(SimState& state, const SimConfig& cfg, int max_steps,
                            double tol = 1e-6) {
    Points prev = state.mesh.positions;
    for (int s = 0; s < max_steps; ++s) {
        step(state, cfg, Vec3::Zero());
        double disp = 0.0;
        for (int i = 0; i < state.mesh.vertex_count(); ++i)
            disp += (state.mesh.positions[i] - prev[i]).norm();
        disp /= std::max(1, state.mesh.vertex_count());
        if (disp < tol) return;
        prev = state.mesh.positions;
    }
}

}  // namespace

SimState randomize_config(const ClothMesh& mesh, const SimConfig& config,
                          RandomizeMode mode, std::uint64_t seed) {
    Rng rng(seed);
    SimState state = SimState::from_mesh(mesh);
    std::fill(state.mesh.velocities.begin(), state.mesh.velocities.end(), Vec3::Zero());

    if (mode == RandomizeMode::Drop) {
        Vec3 c = Vec3::Zero();
        for (const Vec3& p : state.mesh.positions) c += p;
        c /= static_cast<double>(state.mesh.vertex_count());

        const double yaw = rng.uniform(0.0, 2.0 * M_PI);
        const double tilt = rng.uniform(0.6, 1.5);
        const Vec3 tilt_axis = rng.ground_direction();
        const Mat3 rot = (Eigen::AngleAxisd(tilt, tilt_axis) *
                          Eigen::AngleAxisd(yaw, Vec3::UnitY()))
                             .toRotationMatrix();
        double min_y = std::numeric_limits<double>::infinity();
        for (Vec3& p : state.mesh.positions) {
            p = rot * (p - c) + Vec3(c.x(), 0.0, c.z());
            min_y = std::min(min_y, p.y());
        }
        const double drop_height = rng.uniform(0.08, 0.2);
        const double lift = config.ground_height + drop_height - min_y;
        for (Vec3& p : state.mesh.positions) p.y() += lift;
        settle_until_quiescent(state, config, 4000);
    } else {
        const int actions = 1 + static_cast<int>(rng.uniform_index(3));
        for (int a = 0; a < actions; ++a) {
            const int v = static_cast<int>(rng.uniform_index(state.mesh.vertex_count()));
            PickPlaceAction act;
            act.pick = state.mesh.positions[v];
            const Vec3 dir = rng.ground_direction();
            const double dist = rng.uniform(0.05, 0.2);
            act.place = act.pick + dir * dist;
            act.place.x() = std::clamp(act.place.x(), -config.workspace_half, config.workspace_half);
            act.place.z() = std::clamp(act.place.z(), -config.workspace_half, config.workspace_half);
            act.lift_height = config.lift_height;
            state = pick_place_execute(std::move(state), config, act).state;
        }
    }
    return state;
}

Points flatten_canonical(const ClothMesh& mesh, const SimConfig& config, int max_steps) {
    if (mesh.canonical_coords.size() != mesh.positions.size() || mesh.vertex_count() == 0)
        throw DegenerateInput("flatten_canonical: mesh lacks canonical coords");

    const double scale = canonical_scale(mesh);
    Vec3 mean_c = Vec3::Zero();
    for (const Vec3& c : mesh.canonical_coords) mean_c += c;
    mean_c /= static_cast<double>(mesh.vertex_count());

    SimState state = SimState::from_mesh(mesh);
    double min_y = std::numeric_limits<double>::infinity();
    for (int i = 0; i < state.mesh.vertex_count(); ++i) {
        state.mesh.positions[i] = scale * (mesh.canonical_coords[i] - mean_c);
        state.mesh.velocities[i] = Vec3::Zero();
        min_y = std::min(min_y, state.mesh.positions[i].y());
    }
    const double lift = config.ground_height + 0.5 * config.particle_radius - min_y;
    for (Vec3& p : state.mesh.positions) p.y() += lift;

    SimConfig heavy = config;
    heavy.gravity = 10.0 * config.gravity;  // flatten under 10x gravity

    Points prev = state.mesh.positions;
    double disp = std::numeric_limits<double>::infinity();
    for (int s = 0; s < max_steps; ++s) {
        step(state, heavy, Vec3::Zero());
        disp = 0.0;
        for (int i = 0; i < state.mesh.vertex_count(); ++i)
            disp += (state.mesh.positions[i] - prev[i]).norm();
        disp /= state.mesh.vertex_count();
        if (disp < 1e-6) return state.mesh.positions;
        prev = state.mesh.positions;
    }
    if (disp > 1e-4)
        throw NonConvergence("flatten_canonical: still moving after step cap");
    return state.mesh.positions;
}

namespace {

struct GridBuilder {
    int nx, nz;
    double sx, sz;
    double x0, z0;

    Vec3 pos(int ix, int iz) const { return {x0 + ix * sx, 0.0, z0 + iz * sz}; }
};

}  // namespace

ClothMesh make_garment(GarmentKind kind, const GarmentDims& dims, int resolution) {
    if (resolution < 3) throw DegenerateInput("make_garment: resolution < 3");
    const int nx = resolution, nz = resolution;
    GridBuilder g{nx, nz, dims.width / (nx - 1), dims.depth / (nz - 1),
                  -dims.width / 2.0, -dims.depth / 2.0};

    // Vertex keep-mask; trousers drop a notch between the legs below the
    // waistband.
    std::vector<int> id(static_cast<std::size_t>(nx) * nz, -1);
    auto lin = [&](int ix, int iz) { return ix * nz + iz; };
    int count = 0;
    const int waist_rows = std::max(1, static_cast<int>(std::lround(dims.waist_fraction * (nz - 1))));
    const double notch_half = dims.notch_fraction * dims.width / 2.0;
    for (int ix = 0; ix < nx; ++ix) {
        for (int iz = 0; iz < nz; ++iz) {
            bool keep = true;
            if (kind == GarmentKind::Trousers && iz > waist_rows) {
                const double x = g.pos(ix, iz).x() - (g.x0 + dims.width / 2.0);
                keep = std::abs(x) > notch_half;
            }
            if (keep) id[lin(ix, iz)] = count++;
        }
    }

    ClothMesh mesh;
    mesh.positions.reserve(count);
    for (int ix = 0; ix < nx; ++ix)
        for (int iz = 0; iz < nz; ++iz)
            if (id[lin(ix, iz)] >= 0) mesh.positions.push_back(g.pos(ix, iz));
    mesh.velocities.assign(count, Vec3::Zero());

    auto add_edge = [&](int ax, int az, int bx, int bz, EdgeKind kind_) {
        if (bx < 0 || bx >= nx || bz < 0 || bz >= nz) return;
        const int a = id[lin(ax, az)], b = id[lin(bx, bz)];
        if (a < 0 || b < 0) return;
        const double rest = (g.pos(ax, az) - g.pos(bx, bz)).norm();
        mesh.edges.push_back({a, b, rest, kind_});
    };
    for (int ix = 0; ix < nx; ++ix) {
        for (int iz = 0; iz < nz; ++iz) {
            if (id[lin(ix, iz)] < 0) continue;
            add_edge(ix, iz, ix + 1, iz, EdgeKind::Stretch);
            add_edge(ix, iz, ix, iz + 1, EdgeKind::Stretch);
            add_edge(ix, iz, ix + 1, iz + 1, EdgeKind::Shear);
            if (ix + 1 < nx && id[lin(ix + 1, iz)] >= 0)
                add_edge(ix + 1, iz, ix, iz + 1, EdgeKind::Shear);
            add_edge(ix, iz, ix + 2, iz, EdgeKind::Bend);
            add_edge(ix, iz, ix, iz + 2, EdgeKind::Bend);
        }
    }

    for (int ix = 0; ix + 1 < nx; ++ix) {
        for (int iz = 0; iz + 1 < nz; ++iz) {
            const int a = id[lin(ix, iz)], b = id[lin(ix + 1, iz)];
            const int c = id[lin(ix, iz + 1)], d = id[lin(ix + 1, iz + 1)];
            if (a >= 0 && b >= 0 && c >= 0) mesh.faces.push_back({a, b, c});
            if (b >= 0 && d >= 0 && c >= 0) mesh.faces.push_back({b, d, c});
        }
    }

    // canonical coords: flat layout scaled into the unit cube by its diagonal
    Vec3 pmin(std::numeric_limits<double>::infinity(),
              std::numeric_limits<double>::infinity(),
              std::numeric_limits<double>::infinity());
    for (const Vec3& p : mesh.positions) pmin = pmin.cwiseMin(p);
    const double diag = std::hypot(dims.width, dims.depth);
    mesh.canonical_coords.reserve(count);
    for (const Vec3& p : mesh.positions) mesh.canonical_coords.push_back((p - pmin) / diag);

    mesh.validate();
    return mesh;
}

// --- trajectory dumps -------------------------------------------------------

void save_trajectory(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for write: " + path);
    out << std::setprecision(17);
    out << "traj 1\n";
    out << "mesh\n";
    write_mesh_text(out, traj.mesh);
    out << "endmesh\n";
    for (const TrajectoryFrame& f : traj.frames) {
        out << "frame " << f.index << ' ' << f.t << ' ' << f.picked << ' '
            << f.picker_delta.x() << ' ' << f.picker_delta.y() << ' '
            << f.picker_delta.z() << '\n';
        for (const Vec3& p : f.positions)
            out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
    }
}

Trajectory load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("traj", 0) != 0)
        throw IoError("not a trajectory file: " + path);
    if (!std::getline(in, line) || line != "mesh")
        throw IoError("trajectory missing mesh section: " + path);

    std::stringstream mesh_text;
    while (std::getline(in, line) && line != "endmesh") mesh_text << line << '\n';
    Trajectory traj;
    traj.mesh = read_mesh_text(mesh_text);
    const int n = traj.mesh.vertex_count();

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag != "frame") throw IoError("expected frame record: " + line);
        TrajectoryFrame f;
        ls >> f.index >> f.t >> f.picked >> f.picker_delta.x() >> f.picker_delta.y() >>
            f.picker_delta.z();
        if (!ls) throw IoError("bad frame header: " + line);
        f.positions.reserve(n);
        for (int i = 0; i < n; ++i) {
            if (!std::getline(in, line)) throw IoError("truncated frame");
            std::istringstream ps(line);
            Vec3 p;
            ps >> p.x() >> p.y() >> p.z();
            if (!ps) throw IoError("bad frame row: " + line);
            f.positions.push_back(p);
        }
        traj.frames.push_back(std::move(f));
    }
    return traj;
}

// --- config -----------------------------------------------------------------

std::string sim_config_to_json(const SimConfig& c) {
    json j;
    j["dt"] = c.dt;
    j["gravity"] = c.gravity;
    j["damping"] = c.damping;
    j["dynamic_friction"] = c.dynamic_friction;
    j["stiffness_stretch"] = c.stiffness_stretch;
    j["stiffness_bend"] = c.stiffness_bend;
    j["stiffness_shear"] = c.stiffness_shear;
    j["particle_mass"] = c.particle_mass;
    j["particle_radius"] = c.particle_radius;
    j["picker_radius"] = c.picker_radius;
    j["picker_threshold"] = c.picker_threshold;
    j["ground_height"] = c.ground_height;
    j["stiffness_gain"] = c.stiffness_gain;
    j["picker_speed"] = c.picker_speed;
    j["settle_steps"] = c.settle_steps;
    j["lift_height"] = c.lift_height;
    j["workspace_half"] = c.workspace_half;
    j["blowup_limit"] = c.blowup_limit;
    return j.dump(1);
}

SimConfig sim_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad sim config: ") + e.what());
    }
    SimConfig c;
    const json defaults = json::parse(sim_config_to_json(c));
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) throw ConfigError("unknown sim config key: " + key);
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("dt", c.dt);
    get("gravity", c.gravity);
    get("damping", c.damping);
    get("dynamic_friction", c.dynamic_friction);
    get("stiffness_stretch", c.stiffness_stretch);
    get("stiffness_bend", c.stiffness_bend);
    get("stiffness_shear", c.stiffness_shear);
    get("particle_mass", c.particle_mass);
    get("particle_radius", c.particle_radius);
    get("picker_radius", c.picker_radius);
    get("picker_threshold", c.picker_threshold);
    get("ground_height", c.ground_height);
    get("stiffness_gain", c.stiffness_gain);
    get("picker_speed", c.picker_speed);
    get("settle_steps", c.settle_steps);
    get("lift_height", c.lift_height);
    get("workspace_half", c.workspace_half);
    get("blowup_limit", c.blowup_limit);
    if (!(c.dt > 0.0) || !(c.particle_mass > 0.0))
        throw ConfigError("sim config: dt and particle_mass must be positive");
    return c;
}

}  // namespace unfurl
