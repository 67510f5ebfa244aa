#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unfurl/geometry.hpp"

namespace unfurl {

/// Mass-spring simulator parameters. Defaults follow the softgym-style
/// hyper-parameter set this environment stands in for; fields past
/// ground_height are artifact knobs (global spring gain for explicit-Euler
/// stability, primitive pacing, settle length).
struct SimConfig {
    double dt = 0.01;                 // seconds
    double gravity = -9.8;            // m/s^2 (y axis)
    double damping = 1.0;             // per-second velocity decay
    double dynamic_friction = 1.2;
    double stiffness_stretch = 1.2;
    double stiffness_shear = 1.0;
    double stiffness_bend = 0.6;
    double particle_mass = 0.0003;    // kg
    double particle_radius = 0.005;   // m
    double picker_radius = 0.01;      // m
    double picker_threshold = 0.00625;  // m, grasp acceptance distance
    double ground_height = 0.0;       // m

    double stiffness_gain = 1.0;      // global multiplier on all spring gains
    double picker_speed = 0.2;        // m/s during primitive phases
    int settle_steps = 100;           // free steps after release
    double lift_height = 0.1;         // m, default primitive lift
    double workspace_half = 0.265;    // m, valid workspace is 0.53 x 0.53

    double blowup_limit = 1e3;        // m, position magnitude that aborts
};

struct PickPlaceAction {
    Vec3 pick = Vec3::Zero();
    Vec3 place = Vec3::Zero();
    double lift_height = 0.1;
    bool noop = false;

    static PickPlaceAction make_noop() {
        PickPlaceAction a;
        a.noop = true;
        return a;
    }
};

struct SimState {
    ClothMesh mesh;
    Vec3 picker_position = Vec3(0.0, 0.5, 0.0);
    std::optional<int> grasped_vertex;
    long step_count = 0;

    static SimState from_mesh(ClothMesh mesh);
};

/// One semi-implicit Euler step: spring forces (Hooke on rest-length
/// deviation, gain by edge kind), gravity, per-second velocity damping,
/// ground contact with Coulomb-style tangential friction, position update.
/// The picker moves by picker_delta; a grasped vertex is overridden to track
/// it exactly. Throws NumericalBlowup past config.blowup_limit.
void step(SimState& state, const SimConfig& config, const Vec3& picker_delta);

/// Grasp the nearest vertex within picker_threshold of the picker, if any.
std::optional<int> try_grasp(const SimState& state, const SimConfig& config);

struct PrimitiveResult {
    SimState state;
    std::vector<Vec3> picker_deltas;  // low-level per-step picker motion
    std::optional<int> grasped;       // vertex the primitive held, if any
};

/// Pick-and-place primitive: descend to the pick point, grasp within
/// threshold (a miss is a legal outcome), lift, translate above the place
/// point at constant speed, release, settle. The no-op sentinel just settles.
PrimitiveResult pick_place_execute(SimState state, const SimConfig& config,
                                   const PickPlaceAction& action);

/// The same primitive geometry expressed as per-step picker deltas at an
/// arbitrary timestep, for coarse-time dynamics rollouts. Covers descend-free
/// portions only (lift + translate); the caller decides what happens after.
std::vector<Vec3> lowlevel_deltas(const PickPlaceAction& action, double dt,
                                  int horizon);

enum class RandomizeMode { Drop, RandomActions };

/// Seed-split choice of randomization mode with equal probability.
RandomizeMode choose_randomize_mode(std::uint64_t seed);

/// Crumple a flattened cloth: either release it from a random height and
/// orientation, or disturb it with 1-3 random pick-and-place actions.
/// Deterministic given seed. Expects mesh.positions in the flattened pose.
SimState randomize_config(const ClothMesh& mesh, const SimConfig& config,
                          RandomizeMode mode, std::uint64_t seed);

/// Settled flat pose of the canonical layout: positions are initialized from
/// the canonical coordinates (scaled to meters), lifted slightly above the
/// ground, and simulated under 10x gravity until mean per-step displacement
/// drops below 1e-6 m. Throws NonConvergence if the step cap is reached while
/// still moving more than 1e-4 m.
Points flatten_canonical(const ClothMesh& mesh, const SimConfig& config,
                         int max_steps = 20000);

enum class GarmentKind { Rectangle, Trousers };

struct GarmentDims {
    double width = 0.25;   // m, x extent
    double depth = 0.25;   // m, z extent
    // trousers only:
    double waist_fraction = 0.35;  // fraction of depth taken by the waistband
    double notch_fraction = 0.34;  // fraction of width removed between legs
};

/// Procedural garment meshes: grid cloth with stretch (grid neighbor), shear
/// (diagonal) and bend (two-apart) springs; trousers are two rectangular legs
/// joined at a waistband. Canonical coordinates are the flat layout
/// normalized into the unit cube by its bounding-box diagonal.
ClothMesh make_garment(GarmentKind kind, const GarmentDims& dims, int resolution);

// --- trajectory dumps -------------------------------------------------------

struct TrajectoryFrame {
    long index = 0;
    double t = 0.0;  // simulated seconds
    Points positions;
    int picked = -1;            // vertex under gripper control, -1 if none
    Vec3 picker_delta = Vec3::Zero();  // gripper motion over this frame step
};

struct Trajectory {
    ClothMesh mesh;  // topology + canonical coords; positions are per-frame
    std::vector<TrajectoryFrame> frames;
};

void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);

// --- config file ------------------------------------------------------------

std::string sim_config_to_json(const SimConfig& config);
SimConfig sim_config_from_json(const std::string& text);

}  // namespace unfurl
