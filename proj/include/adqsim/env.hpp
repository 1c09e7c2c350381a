#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "adqsim/observation.hpp"
#include "adqsim/physics.hpp"
#include "adqsim/rng.hpp"

#include <nlohmann/json_fwd.hpp>

namespace adq::env {

using geom::Vec3;
using obs::FlatObs;

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const { return rng.uniform(lo, hi); }
};

// Per-episode domain randomization. force_noise_sigma > 0 switches the force
// sensor model from a per-episode uniform bias to per-sample additive
// Gaussian noise (the "shifted" preset uses this).
struct RandomizationRanges {
  Range force_scale{0.95, 1.05};
  Range force_bias{-0.6, 0.6};
  double force_noise_sigma = 0.0;
  Range pull_multiplier{0.05, 10.0};
  Range linear_density{0.267, 0.445};
  Range joint_friction{0.375, 0.625};
  Range joint_damping{0.375, 0.625};
  Range surface_friction{0.3, 0.5};
  bool randomize_yaw = true;
  bool swap_roles = true;
  double z_noise_deg = 5.0;  // per-step hand-orientation observation error
};

struct RewardWeights {
  double length = 1.0;   // w_l, free-end length change
  double writhe = 0.1;   // w_G, instantaneous entanglement metric
  double success = 10.0; // w_s, terminal bonus
};

struct KnotSpec {
  geom::KnotKind kind = geom::KnotKind::kLooseOverhand;
  int n_vertices = 48;
  double scale = 0.5;
  double radius = 0.012;
};

struct AdqParams {
  double tau_min = 0.005;
  double tau_max = 2.5;
  double tau_init = 0.15;
  double delta_max = 0.1;
  double fixed_tau = 0.5;  // threshold used by fixed-ternary modes
};

struct SimConfig {
  phys::PhysicsParams physics;
  RandomizationRanges randomization;
  double alpha = 0.03;        // m commanded per pull at |u| = 1
  double force_limit = 30.0;  // N execution-time saturation
  int horizon = 15;           // pulls per episode
  RewardWeights reward;
  double epsilon = 0.0;  // success threshold; <= 0 means one edge rest length
  KnotSpec knot;
  std::vector<int> pin_candidates;   // grasp vertex candidates, low-index end
  std::vector<int> pull_candidates;  // high-index end
  obs::ObservationMode obs_mode = obs::ObservationMode::kAdq;
  AdqParams adq;
  std::uint64_t seed = 0;
  int settle_steps = 300;

  void validate() const;  // throws ConfigError with the offending field
};

SimConfig nominal_config();
SimConfig shifted_config();
SimConfig config_from_preset(const std::string& name);

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);
SimConfig load_config(const std::string& path);

// FNV-1a over the canonical (sorted-key) JSON dump; stable across platforms.
std::uint64_t config_hash(const SimConfig& c);
std::string config_hash_hex(const SimConfig& c);

// Raw policy output: pull direction and threshold increment, both in [-1,1]^3.
struct StepAction {
  Vec3 u{0, 0, 0};
  Vec3 delta_tau{0, 0, 0};
};

struct StepRecord {
  int step = 0;
  obs::ForceTrace force_trace;        // execution-level, saturation-limited
  obs::ForceTrace sensor_trace;       // after sensor scale/bias/noise
  Vec3 delta_f{0, 0, 0};              // force difference of the sensor trace
  Vec3 force_slots{0, 0, 0};          // observation content (mode-dependent)
  Vec3 tau{0, 0, 0};
  StepAction action;
  double writhe = 0.0;                // G_t
  double free_end_length = 0.0;       // l_t
  double reward = 0.0;
  bool success = false;
};

struct EpisodeRecord {
  std::vector<StepRecord> steps;
  bool success = false;
  int step_count = 0;
  double initial_writhe = 0.0;
  double final_writhe = 0.0;
  double peak_force = 0.0;  // max |f| over all substeps of all pulls

  double writhe_reduction() const { return final_writhe - initial_writhe; }
};

void write_episode_jsonl(const EpisodeRecord& record, std::ostream& out);

// Values sampled at reset; exposed for tests and logs.
struct EpisodeSetup {
  double force_scale = 1.0;
  double force_bias = 0.0;
  double pull_multiplier = 1.0;
  double yaw = 0.0;
  bool roles_swapped = false;
  int pin_vertex = 0;
  int pull_vertex = 0;
  phys::PhysicsParams physics;
};

// One rollout worker's POMDP episode loop: knot initialization, domain
// randomization, pulls, reward, success detection.
class Environment {
 public:
  explicit Environment(SimConfig config);

  FlatObs reset(std::uint64_t episode_seed);

  struct StepOutput {
    FlatObs observation;
    double reward = 0.0;
    bool done = false;
  };
  StepOutput step(const StepAction& action);

  bool done() const { return done_; }
  int step_count() const { return static_cast<int>(record_.steps.size()); }
  const SimConfig& config() const { return config_; }
  const phys::SimState& state() const { return state_; }
  const EpisodeRecord& record() const { return record_; }
  const EpisodeSetup& setup() const { return setup_; }
  const obs::ThresholdState& thresholds() const { return thresholds_; }
  double success_epsilon() const;
  Vec3 pin_position() const;
  Vec3 pull_position() const;

  // Optional per-substep frame stream: {step, substep, vertices, force,
  // contacts} as one JSON object per line.
  void set_frame_sink(std::ostream* sink) { frame_sink_ = sink; }

 private:
  FlatObs observe(const obs::ForceTrace& sensor_trace, StepRecord* rec);
  phys::SubstepHook frame_hook(int step_index);

  SimConfig config_;
  phys::SimState state_;
  EpisodeSetup setup_;
  obs::ThresholdState thresholds_;
  obs::ObservationStack stack_;
  EpisodeRecord record_;
  Rng sensor_rng_{0};
  Rng z_noise_rng_{0};
  double prev_free_end_ = 0.0;
  bool done_ = true;
  std::ostream* frame_sink_ = nullptr;
};

// Per-step context handed to controllers alongside the stacked observation.
// Scripted baselines read the true grasp geometry from here.
struct StepContext {
  Vec3 pin{0, 0, 0};
  Vec3 pull{0, 0, 0};
  int step_index = 0;
};

class PolicyHandle {
 public:
  virtual ~PolicyHandle() = default;
  virtual StepAction act(const FlatObs& observation, const StepContext& context,
                         Rng& rng) = 0;
};

// Closed loop of reset + step until done. The policy RNG substream is derived
// from the episode seed so paired-seed evaluations share initial knots.
EpisodeRecord run_episode(PolicyHandle& policy, const SimConfig& config,
                          std::uint64_t episode_seed,
                          std::ostream* frame_sink = nullptr);

}  // namespace adq::env
