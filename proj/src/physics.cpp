#include "adqsim/physics.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "adqsim/errors.hpp"

namespace adq::phys {
namespace {

bool finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

// Closest-point parameters between segments p1->q1 and p2->q2.
void segment_closest(const Vec3& p1, const Vec3& q1, const Vec3& p2,
                     const Vec3& q2, double* s_out, double* t_out) {
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  constexpr double kEps = 1e-14;
  double s = 0.0, t = 0.0;
  if (a <= kEps && e <= kEps) {
    // both degenerate
  } else if (a <= kEps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= kEps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > kEps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  *s_out = s;
  *t_out = t;
}

// Vertex masses: linear density times the adjacent half-edges.
std::vector<double> vertex_masses(const geom::CapsuleChain& chain,
                                  const PhysicsParams& params) {
  const int n = chain.vertex_count();
  std::vector<double> m(static_cast<size_t>(n), 0.0);
  for (int e = 0; e < chain.edge_count(); ++e) {
    const double half = 0.5 * params.linear_density * chain.rest_lengths[e];
    m[e] += half;
    m[e + 1] += half;
  }
  return m;
}

struct Contact {
  int ea = 0, eb = 0;
  double s = 0.0, u = 0.0;  // barycentric params frozen at detection
  Vec3 normal{0, 0, 1};     // from edge b toward edge a
  double lambda = 0.0;
};

struct Workspace {
  std::vector<double> mass;
  std::vector<double> inv_mass;  // zero for pin and pull
  std::vector<Vec3> x_prev;
  std::vector<Vec3> v_snapshot;
  std::vector<double> lambda_edge;
  std::vector<Contact> contacts;
};

void init_workspace(Workspace& ws, const SimState& st, const PhysicsParams& pp) {
  const int n = st.chain.vertex_count();
  ws.mass = vertex_masses(st.chain, pp);
  ws.inv_mass.assign(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) ws.inv_mass[i] = 1.0 / ws.mass[i];
  ws.inv_mass[st.chain.pin_index] = 0.0;
  ws.inv_mass[st.chain.pull_index] = 0.0;
  ws.lambda_edge.assign(static_cast<size_t>(st.chain.edge_count()), 0.0);
}

// One PBD substep. Returns the grasp reaction force (what the rope exerts on
// the pull hand), read from the accumulated constraint multipliers.
Vec3 substep(SimState& st, const PhysicsParams& pp, Workspace& ws,
             int substep_index) {
  auto& x = st.chain.vertices;
  auto& v = st.velocities;
  const int n = st.chain.vertex_count();
  const int pin = st.chain.pin_index;
  const int pull = st.chain.pull_index;
  const double dt = pp.dt;

  // joint damping and Coulomb-style stick on bend velocity (Jacobi pass)
  ws.v_snapshot = v;
  const double kd = std::clamp(pp.joint_damping, 0.0, 1.0);
  const double stick = pp.joint_friction * pp.joint_friction_ref_speed;
  for (int i = 1; i + 1 < n; ++i) {
    if (i == pin || i == pull) continue;
    const Vec3 vrel = ws.v_snapshot[i] -
                      0.5 * (ws.v_snapshot[i - 1] + ws.v_snapshot[i + 1]);
    Vec3 after = vrel * (1.0 - kd);
    const double mag = after.norm();
    if (mag <= stick)
      after.setZero();
    else
      after -= stick * (after / mag);
    v[i] += after - vrel;
  }

  // integrate
  ws.x_prev = x;
  for (int i = 0; i < n; ++i) {
    if (i == pin || i == pull) continue;
    v[i] += pp.gravity * dt;
    v[i] *= (1.0 - pp.velocity_damping);
    x[i] += v[i] * dt;
  }
  x[pull] = st.pull_target;

  // contacts on predicted positions; params and normals frozen this substep
  const double min_sep = 2.0 * st.chain.radius;
  ws.contacts.clear();
  const auto pairs =
      detect_contacts(st.chain, pp.contact_margin, pp.neighbor_exclusion);
  for (const auto& [ea, eb] : pairs) {
    Contact c;
    c.ea = ea;
    c.eb = eb;
    segment_closest(x[ea], x[ea + 1], x[eb], x[eb + 1], &c.s, &c.u);
    const Vec3 pa = x[ea] * (1.0 - c.s) + x[ea + 1] * c.s;
    const Vec3 pb = x[eb] * (1.0 - c.u) + x[eb + 1] * c.u;
    const Vec3 d = pa - pb;
    const double dist = d.norm();
    if (dist < 1e-12) continue;  // exactly intersecting centerlines: skip
    c.normal = d / dist;
    ws.contacts.push_back(c);
  }

  // XPBD solve: distance constraints in alternating sweeps, then contacts
  std::fill(ws.lambda_edge.begin(), ws.lambda_edge.end(), 0.0);
  const double alpha_edge = pp.edge_compliance / (dt * dt);
  const double alpha_contact = pp.contact_compliance / (dt * dt);

  auto solve_edge = [&](int e) {
    const int i = e, j = e + 1;
    const Vec3 d = x[i] - x[j];
    const double len = d.norm();
    if (len < 1e-12) return;
    const Vec3 nrm = d / len;
    const double c_val = len - st.chain.rest_lengths[e];
    const double denom = ws.inv_mass[i] + ws.inv_mass[j] + alpha_edge;
    if (denom <= 0.0) return;
    const double dl = (-c_val - alpha_edge * ws.lambda_edge[e]) / denom;
    ws.lambda_edge[e] += dl;
    x[i] += ws.inv_mass[i] * dl * nrm;
    x[j] -= ws.inv_mass[j] * dl * nrm;
  };

  auto solve_contact = [&](Contact& c) {
    const double wa0 = ws.inv_mass[c.ea] * (1.0 - c.s) * (1.0 - c.s);
    const double wa1 = ws.inv_mass[c.ea + 1] * c.s * c.s;
    const double wb0 = ws.inv_mass[c.eb] * (1.0 - c.u) * (1.0 - c.u);
    const double wb1 = ws.inv_mass[c.eb + 1] * c.u * c.u;
    const double w_sum = wa0 + wa1 + wb0 + wb1;
    if (w_sum <= 0.0) return;
    const Vec3 pa = x[c.ea] * (1.0 - c.s) + x[c.ea + 1] * c.s;
    const Vec3 pb = x[c.eb] * (1.0 - c.u) + x[c.eb + 1] * c.u;
    const double c_val = (pa - pb).dot(c.normal) - min_sep;
    double dl = pp.contact_stiffness * (-c_val - alpha_contact * c.lambda) /
                (w_sum + alpha_contact);
    dl = std::max(dl, -c.lambda);  // unilateral: lambda >= 0
    if (dl == 0.0) return;
    c.lambda += dl;
    x[c.ea] += ws.inv_mass[c.ea] * (1.0 - c.s) * dl * c.normal;
    x[c.ea + 1] += ws.inv_mass[c.ea + 1] * c.s * dl * c.normal;
    x[c.eb] -= ws.inv_mass[c.eb] * (1.0 - c.u) * dl * c.normal;
    x[c.eb + 1] -= ws.inv_mass[c.eb + 1] * c.u * dl * c.normal;
  };

  const int edges = st.chain.edge_count();
  for (int it = 0; it < pp.solver_iterations; ++it) {
    if (it % 2 == 0)
      for (int e = 0; e < edges; ++e) solve_edge(e);
    else
      for (int e = edges - 1; e >= 0; --e) solve_edge(e);
    for (Contact& c : ws.contacts) solve_contact(c);
  }

  // grasp reaction from the final multipliers: force = lambda / dt^2
  Vec3 impulse = Vec3::Zero();
  if (pull > 0) {
    const int e = pull - 1;
    const Vec3 d = x[e] - x[e + 1];
    const double len = d.norm();
    if (len > 1e-12) impulse -= ws.lambda_edge[e] * (d / len);
  }
  if (pull < edges) {
    const int e = pull;
    const Vec3 d = x[e] - x[e + 1];
    const double len = d.norm();
    if (len > 1e-12) impulse += ws.lambda_edge[e] * (d / len);
  }
  for (const Contact& c : ws.contacts) {
    if (c.lambda == 0.0) continue;
    if (c.ea == pull) impulse += c.lambda * (1.0 - c.s) * c.normal;
    if (c.ea + 1 == pull) impulse += c.lambda * c.s * c.normal;
    if (c.eb == pull) impulse -= c.lambda * (1.0 - c.u) * c.normal;
    if (c.eb + 1 == pull) impulse -= c.lambda * c.u * c.normal;
  }
  const Vec3 reaction = impulse / (dt * dt);

  // velocity update
  for (int i = 0; i < n; ++i) v[i] = (x[i] - ws.x_prev[i]) / dt;

  // tangential velocity scaling at active contacts
  const double mu = std::clamp(pp.surface_friction, 0.0, 1.0);
  if (mu > 0.0) {
    for (const Contact& c : ws.contacts) {
      if (c.lambda <= 0.0) continue;
      const Vec3 va = v[c.ea] * (1.0 - c.s) + v[c.ea + 1] * c.s;
      const Vec3 vb = v[c.eb] * (1.0 - c.u) + v[c.eb + 1] * c.u;
      const Vec3 vr = va - vb;
      const Vec3 vt = vr - vr.dot(c.normal) * c.normal;
      const Vec3 dv = 0.5 * mu * vt;
      if (ws.inv_mass[c.ea] > 0.0) v[c.ea] -= (1.0 - c.s) * dv;
      if (ws.inv_mass[c.ea + 1] > 0.0) v[c.ea + 1] -= c.s * dv;
      if (ws.inv_mass[c.eb] > 0.0) v[c.eb] += (1.0 - c.u) * dv;
      if (ws.inv_mass[c.eb + 1] > 0.0) v[c.eb + 1] += c.u * dv;
    }
  }

  for (int i = 0; i < n; ++i) {
    if (!finite(x[i]) || !finite(v[i]))
      throw SolverInstabilityError("solver diverged", substep_index);
  }

  st.contact_pairs.clear();
  st.contact_pairs.reserve(ws.contacts.size());
  for (const Contact& c : ws.contacts) st.contact_pairs.emplace_back(c.ea, c.eb);
  st.last_reaction = reaction;
  return reaction;
}

}  // namespace

void PhysicsParams::validate() const {
  if (substeps_per_pull < 2) throw ConfigError("substeps_per_pull must be >= 2");
  if (solver_iterations < 1) throw ConfigError("solver_iterations must be >= 1");
  if (linear_density <= 0.0) throw ConfigError("linear_density must be > 0");
  if (joint_friction < 0.0 || joint_damping < 0.0 || surface_friction < 0.0)
    throw ConfigError("friction/damping coefficients must be >= 0");
  if (!(contact_stiffness > 0.0 && contact_stiffness <= 1.0))
    throw ConfigError("contact_stiffness must be in (0, 1]");
  if (contact_margin < 0.0) throw ConfigError("contact_margin must be >= 0");
  if (dt <= 0.0) throw ConfigError("dt must be > 0");
  if (edge_compliance < 0.0 || contact_compliance < 0.0)
    throw ConfigError("compliances must be >= 0");
  if (neighbor_exclusion < 1) throw ConfigError("neighbor_exclusion must be >= 1");
}

void to_json(nlohmann::json& j, const PhysicsParams& p) {
  j = nlohmann::json{{"substeps_per_pull", p.substeps_per_pull},
                     {"solver_iterations", p.solver_iterations},
                     {"gravity", {p.gravity.x(), p.gravity.y(), p.gravity.z()}},
                     {"linear_density", p.linear_density},
                     {"joint_friction", p.joint_friction},
                     {"joint_damping", p.joint_damping},
                     {"surface_friction", p.surface_friction},
                     {"contact_stiffness", p.contact_stiffness},
                     {"contact_margin", p.contact_margin},
                     {"dt", p.dt},
                     {"edge_compliance", p.edge_compliance},
                     {"contact_compliance", p.contact_compliance},
                     {"neighbor_exclusion", p.neighbor_exclusion},
                     {"velocity_damping", p.velocity_damping},
                     {"joint_friction_ref_speed", p.joint_friction_ref_speed},
                     {"settle_tolerance", p.settle_tolerance}};
}

void from_json(const nlohmann::json& j, PhysicsParams& p) {
  p.substeps_per_pull = j.value("substeps_per_pull", p.substeps_per_pull);
  p.solver_iterations = j.value("solver_iterations", p.solver_iterations);
  if (j.contains("gravity")) {
    const auto& g = j.at("gravity");
    p.gravity = Vec3(g.at(0).get<double>(), g.at(1).get<double>(),
                     g.at(2).get<double>());
  }
  p.linear_density = j.value("linear_density", p.linear_density);
  p.joint_friction = j.value("joint_friction", p.joint_friction);
  p.joint_damping = j.value("joint_damping", p.joint_damping);
  p.surface_friction = j.value("surface_friction", p.surface_friction);
  p.contact_stiffness = j.value("contact_stiffness", p.contact_stiffness);
  p.contact_margin = j.value("contact_margin", p.contact_margin);
  p.dt = j.value("dt", p.dt);
  p.edge_compliance = j.value("edge_compliance", p.edge_compliance);
  p.contact_compliance = j.value("contact_compliance", p.contact_compliance);
  p.neighbor_exclusion = j.value("neighbor_exclusion", p.neighbor_exclusion);
  p.velocity_damping = j.value("velocity_damping", p.velocity_damping);
  p.joint_friction_ref_speed =
      j.value("joint_friction_ref_speed", p.joint_friction_ref_speed);
  p.settle_tolerance = j.value("settle_tolerance", p.settle_tolerance);
  p.validate();
}

SimState make_state(geom::CapsuleChain chain, const PhysicsParams& params) {
  chain.validate();
  SimState st;
  st.velocities.assign(chain.vertices.size(), Vec3::Zero());
  st.pull_target = chain.vertices[chain.pull_index];
  st.contact_pairs =
      detect_contacts(chain, params.contact_margin, params.neighbor_exclusion);
  st.chain = std::move(chain);
  return st;
}

double segment_distance(const Vec3& a0, const Vec3& a1, const Vec3& b0,
                        const Vec3& b1) {
  double s = 0.0, t = 0.0;
  segment_closest(a0, a1, b0, b1, &s, &t);
  const Vec3 pa = a0 + (a1 - a0) * s;
  const Vec3 pb = b0 + (b1 - b0) * t;
  return (pa - pb).norm();
}

std::vector<geom::EdgePair> detect_contacts(const geom::CapsuleChain& chain,
                                            double margin,
                                            int neighbor_exclusion) {
  const int edges = chain.edge_count();
  const double threshold = 2.0 * chain.radius + margin;
  std::vector<geom::EdgePair> out;
  const auto& x = chain.vertices;
  for (int i = 0; i < edges; ++i) {
    for (int j = i + neighbor_exclusion + 1; j < edges; ++j) {
      // cheap sphere rejection around edge midpoints
      const Vec3 mi = 0.5 * (x[i] + x[i + 1]);
      const Vec3 mj = 0.5 * (x[j] + x[j + 1]);
      const double reach = 0.5 * (x[i + 1] - x[i]).norm() +
                           0.5 * (x[j + 1] - x[j]).norm() + threshold;
      if ((mi - mj).squaredNorm() > reach * reach) continue;
      if (segment_distance(x[i], x[i + 1], x[j], x[j + 1]) < threshold)
        out.emplace_back(i, j);
    }
  }
  return out;
}

SimState settle(SimState state, const PhysicsParams& params, int max_steps,
                const SubstepHook& hook) {
  params.validate();
  state.chain.validate();
  Workspace ws;
  init_workspace(ws, state, params);
  for (int step = 0; step < max_steps; ++step) {
    const std::vector<Vec3> before = state.chain.vertices;
    const Vec3 reaction = substep(state, params, ws, step);
    if (hook) hook(state, step, reaction);
    double max_disp = 0.0;
    for (size_t i = 0; i < before.size(); ++i)
      max_disp = std::max(max_disp, (state.chain.vertices[i] - before[i]).norm());
    if (max_disp < params.settle_tolerance) break;
  }
  return state;
}

PullResult execute_pull(SimState state, const PhysicsParams& params,
                        const Vec3& direction, double alpha, double force_limit,
                        const SubstepHook& hook) {
  params.validate();
  if (alpha <= 0.0) throw ContractError("alpha must be positive");
  for (int i = 0; i < 3; ++i)
    if (std::abs(direction[i]) > 1.0 + 1e-9)
      throw ContractError("pull direction components must lie in [-1, 1]");

  Workspace ws;
  init_workspace(ws, state, params);
  const int k_steps = params.substeps_per_pull;
  const Vec3 per_substep = alpha * direction / k_steps;

  PullResult result;
  result.trace.samples.reserve(static_cast<size_t>(k_steps) + 1);
  result.trace.samples.push_back(state.last_reaction);

  for (int k = 1; k <= k_steps; ++k) {
    if (!result.saturated) state.pull_target += per_substep;
    Vec3 f = substep(state, params, ws, k);
    if (f.norm() >= force_limit) {
      result.saturated = true;
      if (f.norm() > force_limit) f *= force_limit / f.norm();
    }
    state.last_reaction = f;  // recorded (saturation-limited) value
    result.trace.samples.push_back(f);
    if (hook) hook(state, k, f);
  }
  result.state = std::move(state);
  return result;
}

double kinetic_energy(const SimState& state, const PhysicsParams& params) {
  const auto m = vertex_masses(state.chain, params);
  double ke = 0.0;
  for (int i = 0; i < state.chain.vertex_count(); ++i) {
    if (i == state.chain.pin_index || i == state.chain.pull_index) continue;
    ke += 0.5 * m[i] * state.velocities[i].squaredNorm();
  }
  return ke;
}

}  // namespace adq::phys
