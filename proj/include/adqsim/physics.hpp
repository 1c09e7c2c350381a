#pragma once

#include <functional>
#include <vector>

#include "adqsim/geometry.hpp"
#include "adqsim/observation.hpp"

#include <nlohmann/json_fwd.hpp>

namespace adq::phys {

using geom::Vec3;

// Quasi-static position-based dynamics for the capsule chain. Joints are
// XPBD distance constraints, self-contact is capsule-capsule position
// correction between non-neighboring edges, and the grasp reaction force is
// read out from the accumulated constraint multipliers (force = lambda/dt^2).
struct PhysicsParams {
  int substeps_per_pull = 10;  // K
  int solver_iterations = 20;
  Vec3 gravity{0.0, 0.0, -9.81};
  double linear_density = 0.356;   // kg/m
  double joint_friction = 0.5;     // Coulomb-style stick on bend velocity
  double joint_damping = 0.5;      // relative-velocity damping at joints
  double surface_friction = 0.4;   // tangential scaling at contacts
  double contact_stiffness = 1.0;  // (0,1], scales per-iteration correction
  double contact_margin = 0.002;   // m added to 2r for detection

  // Discretization constants; exposed so the force conversion (lambda/dt^2)
  // and contact topology stay auditable in config.
  double dt = 0.01;                      // s per substep
  double edge_compliance = 1e-5;         // m/N, joint elasticity
  double contact_compliance = 1e-5;      // m/N
  int neighbor_exclusion = 2;            // |i-j| <= this never collides
  double velocity_damping = 0.02;        // global per-substep fraction
  double joint_friction_ref_speed = 0.02;  // m/s at coefficient 1
  double settle_tolerance = 1e-5;        // m max displacement to stop settle

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const PhysicsParams& p);
void from_json(const nlohmann::json& j, PhysicsParams& p);

struct SimState {
  geom::CapsuleChain chain;
  std::vector<Vec3> velocities;
  std::vector<geom::EdgePair> contact_pairs;
  Vec3 pull_target{0, 0, 0};
  Vec3 last_reaction{0, 0, 0};  // grasp reaction measured in the last substep
};

// Zeroed velocities, pull_target at the pull vertex, contacts detected.
SimState make_state(geom::CapsuleChain chain, const PhysicsParams& params);

// Closest distance between two segments (used by contact detection and the
// brute-force test oracle).
double segment_distance(const Vec3& a0, const Vec3& a1, const Vec3& b0,
                        const Vec3& b1);

// All edge pairs with |i-j| > neighbor_exclusion whose capsule surfaces come
// within `margin` of touching (centerline distance < 2*radius + margin).
std::vector<geom::EdgePair> detect_contacts(const geom::CapsuleChain& chain,
                                            double margin,
                                            int neighbor_exclusion = 2);

// Observer invoked after every substep (frame streaming, test probes).
using SubstepHook =
    std::function<void(const SimState& state, int substep, const Vec3& reaction)>;

// Relax with both grasps fixed until the max per-vertex displacement in a
// substep drops below settle_tolerance, or max_steps substeps elapse.
// Throws SolverInstabilityError on divergence.
SimState settle(SimState state, const PhysicsParams& params, int max_steps,
                const SubstepHook& hook = nullptr);

struct PullResult {
  SimState state;
  obs::ForceTrace trace;  // K+1 samples, trace.samples[0] = pre-pull reaction
  bool saturated = false;
};

// Moves pull_target by alpha*direction linearly over K substeps while the pin
// stays fixed. Once the reaction magnitude reaches force_limit the target
// stops advancing for the remainder of the pull and recorded samples are
// clamped to the limit (saturation, not penalty).
PullResult execute_pull(SimState state, const PhysicsParams& params,
                        const Vec3& direction, double alpha, double force_limit,
                        const SubstepHook& hook = nullptr);

// Kinetic energy of the current velocity field (mass model: linear density
// times adjacent half-edges).
double kinetic_energy(const SimState& state, const PhysicsParams& params);

}  // namespace adq::phys
