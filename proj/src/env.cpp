#include "adqsim/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "adqsim/errors.hpp"

namespace adq::env {
namespace {

using nlohmann::json;

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j) {
  return Range{j.at(0).get<double>(), j.at(1).get<double>()};
}

json trace_json(const obs::ForceTrace& t) {
  json arr = json::array();
  for (const Vec3& s : t.samples) arr.push_back(vec3_json(s));
  return arr;
}

Vec3 rotate_about_z(const Vec3& v, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

}  // namespace

void SimConfig::validate() const {
  physics.validate();
  auto check_range = [](const Range& r, const char* name) {
    if (r.lo > r.hi)
      throw ConfigError(std::string("randomization range ") + name +
                        " has min > max");
  };
  check_range(randomization.force_scale, "force_scale");
  check_range(randomization.force_bias, "force_bias");
  check_range(randomization.pull_multiplier, "pull_multiplier");
  check_range(randomization.linear_density, "linear_density");
  check_range(randomization.joint_friction, "joint_friction");
  check_range(randomization.joint_damping, "joint_damping");
  check_range(randomization.surface_friction, "surface_friction");
  if (randomization.force_noise_sigma < 0.0)
    throw ConfigError("force_noise_sigma must be >= 0");
  if (alpha <= 0.0) throw ConfigError("alpha must be > 0");
  if (force_limit <= 0.0) throw ConfigError("force_limit must be > 0");
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (reward.length <= 0.0 || reward.writhe <= 0.0 || reward.success <= 0.0)
    throw ConfigError("reward weights must be > 0");
  if (knot.n_vertices < 8) throw ConfigError("knot.n_vertices too small");
  if (knot.scale <= 0.0) throw ConfigError("knot.scale must be > 0");
  if (knot.radius <= 0.0) throw ConfigError("knot.radius must be > 0");
  if (pin_candidates.empty() || pull_candidates.empty())
    throw ConfigError("grasp candidate lists must be non-empty");
  for (int idx : pin_candidates)
    if (idx < 0 || idx >= knot.n_vertices)
      throw ConfigError("pin candidate out of range");
  for (int idx : pull_candidates)
    if (idx < 0 || idx >= knot.n_vertices)
      throw ConfigError("pull candidate out of range");
  for (int a : pin_candidates)
    for (int b : pull_candidates)
      if (a == b) throw ConfigError("pin and pull candidates overlap");
  if (adq.tau_min <= 0.0 || adq.tau_min > adq.tau_max)
    throw ConfigError("threshold bounds require 0 < tau_min <= tau_max");
  if (adq.tau_init < adq.tau_min || adq.tau_init > adq.tau_max)
    throw ConfigError("tau_init outside [tau_min, tau_max]");
  if (adq.fixed_tau <= 0.0) throw ConfigError("fixed_tau must be > 0");
  if (adq.delta_max <= 0.0) throw ConfigError("delta_max must be > 0");
  if (settle_steps < 1) throw ConfigError("settle_steps must be >= 1");
}

SimConfig nominal_config() {
  SimConfig c;
  c.pin_candidates = {2, 3, 4};
  const int n = c.knot.n_vertices;
  c.pull_candidates = {n - 3, n - 4, n - 5};
  return c;
}

SimConfig shifted_config() {
  SimConfig c = nominal_config();
  c.physics.contact_stiffness *= 0.5;
  c.physics.solver_iterations *= 2;
  c.randomization.joint_friction.lo += 0.1;
  c.randomization.joint_friction.hi += 0.1;
  c.randomization.surface_friction.lo += 0.1;
  c.randomization.surface_friction.hi += 0.1;
  c.randomization.force_bias = Range{0.0, 0.0};
  c.randomization.force_noise_sigma = 0.3;
  return c;
}

SimConfig config_from_preset(const std::string& name) {
  if (name == "nominal") return nominal_config();
  if (name == "shifted") return shifted_config();
  throw ConfigError("unknown preset: " + name + " (expected nominal|shifted)");
}

void to_json(json& j, const SimConfig& c) {
  json physics;
  phys::to_json(physics, c.physics);
  j = json{{"schema", 1},
           {"physics", physics},
           {"randomization",
            {{"force_scale", range_json(c.randomization.force_scale)},
             {"force_bias", range_json(c.randomization.force_bias)},
             {"force_noise_sigma", c.randomization.force_noise_sigma},
             {"pull_multiplier", range_json(c.randomization.pull_multiplier)},
             {"linear_density", range_json(c.randomization.linear_density)},
             {"joint_friction", range_json(c.randomization.joint_friction)},
             {"joint_damping", range_json(c.randomization.joint_damping)},
             {"surface_friction", range_json(c.randomization.surface_friction)},
             {"randomize_yaw", c.randomization.randomize_yaw},
             {"swap_roles", c.randomization.swap_roles},
             {"z_noise_deg", c.randomization.z_noise_deg}}},
           {"alpha", c.alpha},
           {"force_limit", c.force_limit},
           {"horizon", c.horizon},
           {"reward",
            {{"w_length", c.reward.length},
             {"w_writhe", c.reward.writhe},
             {"w_success", c.reward.success}}},
           {"epsilon", c.epsilon},
           {"knot",
            {{"kind", geom::to_string(c.knot.kind)},
             {"n_vertices", c.knot.n_vertices},
             {"scale", c.knot.scale},
             {"radius", c.knot.radius}}},
           {"pin_candidates", c.pin_candidates},
           {"pull_candidates", c.pull_candidates},
           {"obs_mode", obs::to_string(c.obs_mode)},
           {"adq",
            {{"tau_min", c.adq.tau_min},
             {"tau_max", c.adq.tau_max},
             {"tau_init", c.adq.tau_init},
             {"delta_max", c.adq.delta_max},
             {"fixed_tau", c.adq.fixed_tau}}},
           {"seed", c.seed},
           {"settle_steps", c.settle_steps}};
}

void from_json(const json& j, SimConfig& c) {
  c = nominal_config();
  if (j.contains("physics")) phys::from_json(j.at("physics"), c.physics);
  if (j.contains("randomization")) {
    const auto& r = j.at("randomization");
    auto& rr = c.randomization;
    if (r.contains("force_scale")) rr.force_scale = range_from(r.at("force_scale"));
    if (r.contains("force_bias")) rr.force_bias = range_from(r.at("force_bias"));
    rr.force_noise_sigma = r.value("force_noise_sigma", rr.force_noise_sigma);
    if (r.contains("pull_multiplier"))
      rr.pull_multiplier = range_from(r.at("pull_multiplier"));
    if (r.contains("linear_density"))
      rr.linear_density = range_from(r.at("linear_density"));
    if (r.contains("joint_friction"))
      rr.joint_friction = range_from(r.at("joint_friction"));
    if (r.contains("joint_damping"))
      rr.joint_damping = range_from(r.at("joint_damping"));
    if (r.contains("surface_friction"))
      rr.surface_friction = range_from(r.at("surface_friction"));
    rr.randomize_yaw = r.value("randomize_yaw", rr.randomize_yaw);
    rr.swap_roles = r.value("swap_roles", rr.swap_roles);
    rr.z_noise_deg = r.value("z_noise_deg", rr.z_noise_deg);
  }
  c.alpha = j.value("alpha", c.alpha);
  c.force_limit = j.value("force_limit", c.force_limit);
  c.horizon = j.value("horizon", c.horizon);
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    c.reward.length = r.value("w_length", c.reward.length);
    c.reward.writhe = r.value("w_writhe", c.reward.writhe);
    c.reward.success = r.value("w_success", c.reward.success);
  }
  c.epsilon = j.value("epsilon", c.epsilon);
  if (j.contains("knot")) {
    const auto& k = j.at("knot");
    if (k.contains("kind"))
      c.knot.kind = geom::knot_kind_from_string(k.at("kind").get<std::string>());
    c.knot.n_vertices = k.value("n_vertices", c.knot.n_vertices);
    c.knot.scale = k.value("scale", c.knot.scale);
    c.knot.radius = k.value("radius", c.knot.radius);
  }
  if (j.contains("pin_candidates"))
    c.pin_candidates = j.at("pin_candidates").get<std::vector<int>>();
  if (j.contains("pull_candidates"))
    c.pull_candidates = j.at("pull_candidates").get<std::vector<int>>();
  if (j.contains("obs_mode"))
    c.obs_mode = obs::mode_from_string(j.at("obs_mode").get<std::string>());
  if (j.contains("adq")) {
    const auto& a = j.at("adq");
    c.adq.tau_min = a.value("tau_min", c.adq.tau_min);
    c.adq.tau_max = a.value("tau_max", c.adq.tau_max);
    c.adq.tau_init = a.value("tau_init", c.adq.tau_init);
    c.adq.delta_max = a.value("delta_max", c.adq.delta_max);
    c.adq.fixed_tau = a.value("fixed_tau", c.adq.fixed_tau);
  }
  c.seed = j.value("seed", c.seed);
  c.settle_steps = j.value("settle_steps", c.settle_steps);
  c.validate();
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return j.get<SimConfig>();
}

std::uint64_t config_hash(const SimConfig& c) {
  json j;
  to_json(j, c);
  return fnv1a64(j.dump());  // dump() emits sorted keys: canonical
}

std::string config_hash_hex(const SimConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(config_hash(c)));
  return buf;
}

Environment::Environment(SimConfig config) : config_(std::move(config)) {
  config_.validate();
}

double Environment::success_epsilon() const {
  if (config_.epsilon > 0.0) return config_.epsilon;
  return state_.chain.rest_lengths.empty() ? 0.0 : state_.chain.rest_lengths[0];
}

Vec3 Environment::pin_position() const {
  return state_.chain.vertices[state_.chain.pin_index];
}

Vec3 Environment::pull_position() const {
  return state_.chain.vertices[state_.chain.pull_index];
}

phys::SubstepHook Environment::frame_hook(int step_index) {
  if (!frame_sink_) return nullptr;
  return [this, step_index](const phys::SimState& st, int substep, const Vec3& f) {
    json frame;
    frame["step"] = step_index;
    frame["substep"] = substep;
    auto& verts = frame["vertices"] = json::array();
    for (const Vec3& v : st.chain.vertices) verts.push_back(vec3_json(v));
    frame["force"] = vec3_json(f);
    auto& contacts = frame["contacts"] = json::array();
    for (const auto& [a, b] : st.contact_pairs) contacts.push_back({a, b});
    (*frame_sink_) << frame.dump() << "\n";
  };
}

FlatObs Environment::reset(std::uint64_t episode_seed) {
  const std::uint64_t base =
      splitmix64(splitmix64(config_.seed) ^ splitmix64(episode_seed));
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::uint64_t ep_base =
        attempt == 0 ? base : derive_seed(base, "reseed");
    try {
      Rng knot_rng(derive_seed(ep_base, "knot"));
      Rng rand_rng(derive_seed(ep_base, "randomization"));
      sensor_rng_ = Rng(derive_seed(ep_base, "sensor"));
      z_noise_rng_ = Rng(derive_seed(ep_base, "z_noise"));

      geom::CapsuleChain chain =
          geom::make_knot(config_.knot.kind, config_.knot.n_vertices,
                          config_.knot.scale, knot_rng.raw());
      chain.radius = config_.knot.radius;

      setup_ = EpisodeSetup{};
      setup_.yaw = config_.randomization.randomize_yaw
                       ? rand_rng.uniform(0.0, 2.0 * M_PI)
                       : 0.0;
      if (setup_.yaw != 0.0)
        for (Vec3& v : chain.vertices) v = rotate_about_z(v, setup_.yaw);

      setup_.physics = config_.physics;
      setup_.physics.linear_density =
          config_.randomization.linear_density.sample(rand_rng);
      setup_.physics.joint_friction =
          config_.randomization.joint_friction.sample(rand_rng);
      setup_.physics.joint_damping =
          config_.randomization.joint_damping.sample(rand_rng);
      setup_.physics.surface_friction =
          config_.randomization.surface_friction.sample(rand_rng);
      setup_.force_scale = config_.randomization.force_scale.sample(rand_rng);
      setup_.force_bias = config_.randomization.force_bias.sample(rand_rng);
      setup_.pull_multiplier =
          config_.randomization.pull_multiplier.sample(rand_rng);
      setup_.roles_swapped =
          config_.randomization.swap_roles ? rand_rng.bernoulli() : false;

      const auto& low_side =
          setup_.roles_swapped ? config_.pull_candidates : config_.pin_candidates;
      const auto& high_side =
          setup_.roles_swapped ? config_.pin_candidates : config_.pull_candidates;
      setup_.pin_vertex =
          low_side[rand_rng.uniform_int(0, static_cast<int>(low_side.size()) - 1)];
      setup_.pull_vertex = high_side[rand_rng.uniform_int(
          0, static_cast<int>(high_side.size()) - 1)];
      chain.pin_index = setup_.pin_vertex;
      chain.pull_index = setup_.pull_vertex;

      state_ = phys::make_state(std::move(chain), setup_.physics);
      state_ = phys::settle(state_, setup_.physics, config_.settle_steps,
                            frame_hook(-1));

      const bool fixed_tau_mode =
          obs::mode_quantizes(config_.obs_mode) &&
          !obs::mode_is_adaptive(config_.obs_mode);
      thresholds_ = obs::ThresholdState::init(
          fixed_tau_mode ? config_.adq.fixed_tau : config_.adq.tau_init,
          config_.adq.tau_min, config_.adq.tau_max, config_.adq.delta_max);
      if (fixed_tau_mode) {
        thresholds_.tau_min = std::min(thresholds_.tau_min, config_.adq.fixed_tau);
        thresholds_.tau_max = std::max(thresholds_.tau_max, config_.adq.fixed_tau);
      }

      record_ = EpisodeRecord{};
      record_.initial_writhe = geom::writhe(state_.chain);
      record_.final_writhe = record_.initial_writhe;
      prev_free_end_ = geom::free_end_length(state_.chain, state_.contact_pairs);
      done_ = false;

      stack_.reset();
      obs::ForceTrace zero_trace;
      zero_trace.samples = {Vec3::Zero(), Vec3::Zero()};
      StepRecord unused;
      return observe(zero_trace, &unused);
    } catch (const SolverInstabilityError&) {
      if (attempt == 1)
        throw EpisodeInitError("episode initialization diverged twice (seed " +
                               std::to_string(episode_seed) + ")");
    }
  }
  throw EpisodeInitError("unreachable");
}

FlatObs Environment::observe(const obs::ForceTrace& sensor_trace, StepRecord* rec) {
  obs::Observation o = obs::build_observation(
      sensor_trace, thresholds_, pin_position(), pull_position(), config_.obs_mode);
  if (config_.randomization.z_noise_deg > 0.0) {
    // hand-orientation observation error: rotate z by a random small angle
    const double max_rad = config_.randomization.z_noise_deg * M_PI / 180.0;
    const double angle = z_noise_rng_.uniform(-max_rad, max_rad);
    const double az = z_noise_rng_.uniform(0.0, 2.0 * M_PI);
    Vec3 ref = std::abs(o.z.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    const Vec3 e1 = o.z.cross(ref).normalized();
    const Vec3 e2 = o.z.cross(e1).normalized();
    const Vec3 axis = std::cos(az) * e1 + std::sin(az) * e2;
    o.z = std::cos(angle) * o.z + std::sin(angle) * axis.cross(o.z);
    o.z.normalize();
  }
  rec->force_slots = o.force_slots;
  stack_.push(o);
  return stack_.flatten();
}

Environment::StepOutput Environment::step(const StepAction& action) {
  if (done_) throw ContractError("step() called on a finished episode");
  for (int i = 0; i < 3; ++i) {
    if (std::abs(action.u[i]) > 1.0 + 1e-9 ||
        std::abs(action.delta_tau[i]) > 1.0 + 1e-9)
      throw ContractError("action components must lie in [-1, 1]");
  }

  const int step_index = static_cast<int>(record_.steps.size());
  auto pulled = phys::execute_pull(
      std::move(state_), setup_.physics, action.u,
      config_.alpha * setup_.pull_multiplier, config_.force_limit,
      frame_hook(step_index));
  state_ = std::move(pulled.state);

  StepRecord rec;
  rec.step = step_index;
  rec.action = action;
  rec.force_trace = pulled.trace;

  rec.sensor_trace.samples.reserve(rec.force_trace.samples.size());
  for (const Vec3& f : rec.force_trace.samples) {
    Vec3 s = setup_.force_scale * f + Vec3::Constant(setup_.force_bias);
    if (config_.randomization.force_noise_sigma > 0.0) {
      for (int i = 0; i < 3; ++i)
        s[i] += sensor_rng_.normal(0.0, config_.randomization.force_noise_sigma);
    }
    rec.sensor_trace.samples.push_back(s);
  }
  rec.delta_f = obs::force_difference(rec.sensor_trace);

  if (obs::mode_is_adaptive(config_.obs_mode))
    thresholds_ = obs::update_threshold(thresholds_, action.delta_tau);
  rec.tau = thresholds_.tau;

  StepOutput out;
  out.observation = observe(rec.sensor_trace, &rec);

  rec.writhe = geom::writhe(state_.chain);
  rec.free_end_length = geom::free_end_length(state_.chain, state_.contact_pairs);
  rec.success = rec.free_end_length <= success_epsilon();
  const double delta_l = rec.free_end_length - prev_free_end_;
  rec.reward = config_.reward.length * delta_l -
               config_.reward.writhe * rec.writhe +
               config_.reward.success * (rec.success ? 1.0 : 0.0);
  prev_free_end_ = rec.free_end_length;

  for (const Vec3& f : rec.force_trace.samples)
    record_.peak_force = std::max(record_.peak_force, f.norm());

  record_.steps.push_back(rec);
  record_.step_count = static_cast<int>(record_.steps.size());
  record_.final_writhe = rec.writhe;
  record_.success = rec.success;
  done_ = rec.success || record_.step_count >= config_.horizon;

  out.reward = rec.reward;
  out.done = done_;
  return out;
}

void write_episode_jsonl(const EpisodeRecord& record, std::ostream& out) {
  for (const StepRecord& s : record.steps) {
    json line;
    line["schema"] = 1;
    line["step"] = s.step;
    line["force_trace"] = trace_json(s.force_trace);
    line["sensor_trace"] = trace_json(s.sensor_trace);
    line["delta_f"] = vec3_json(s.delta_f);
    line["force_slots"] = vec3_json(s.force_slots);
    line["tau"] = vec3_json(s.tau);
    line["action"] = {{"u", vec3_json(s.action.u)},
                      {"delta_tau", vec3_json(s.action.delta_tau)}};
    line["writhe"] = s.writhe;
    line["free_end_length"] = s.free_end_length;
    line["reward"] = s.reward;
    line["success"] = s.success;
    out << line.dump() << "\n";
  }
  json terminal;
  terminal["schema"] = 1;
  terminal["terminal"] = true;
  terminal["success"] = record.success;
  terminal["steps"] = record.step_count;
  terminal["initial_writhe"] = record.initial_writhe;
  terminal["final_writhe"] = record.final_writhe;
  terminal["writhe_reduction"] = record.writhe_reduction();
  terminal["peak_force"] = record.peak_force;
  out << terminal.dump() << "\n";
}

EpisodeRecord run_episode(PolicyHandle& policy, const SimConfig& config,
                          std::uint64_t episode_seed, std::ostream* frame_sink) {
  Environment environment(config);
  if (frame_sink) environment.set_frame_sink(frame_sink);
  FlatObs observation = environment.reset(episode_seed);
  Rng policy_rng(derive_seed(episode_seed, "policy"));
  int step = 0;
  while (!environment.done()) {
    StepContext context{environment.pin_position(), environment.pull_position(),
                        step};
    const StepAction action = policy.act(observation, context, policy_rng);
    auto out = environment.step(action);
    observation = out.observation;
    ++step;
  }
  return environment.record();
}

}  // namespace adq::env
