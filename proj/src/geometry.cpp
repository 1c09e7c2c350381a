#include "adqsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "adqsim/errors.hpp"
#include "adqsim/rng.hpp"

namespace adq::geom {
namespace {

bool finite(const Vec3& v) {
  return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

double clamp_unit(double x) { return std::clamp(x, -1.0, 1.0); }

}  // namespace

double CapsuleChain::total_rest_length() const {
  return std::accumulate(rest_lengths.begin(), rest_lengths.end(), 0.0);
}

void CapsuleChain::validate() const {
  if (vertex_count() < 8) throw ContractError("chain needs at least 8 vertices");
  if (static_cast<int>(rest_lengths.size()) != edge_count())
    throw ContractError("rest_lengths must have one entry per edge");
  if (radius <= 0.0) throw ContractError("capsule radius must be positive");
  for (double l : rest_lengths)
    if (!(l > 0.0)) throw ContractError("rest lengths must be positive");
  if (pin_index < 0 || pin_index >= vertex_count())
    throw ContractError("pin_index out of range");
  if (pull_index < 0 || pull_index >= vertex_count())
    throw ContractError("pull_index out of range");
  if (pin_index == pull_index) throw ContractError("pin and pull must differ");
  for (const Vec3& v : vertices)
    if (!finite(v)) throw ContractError("non-finite vertex coordinate");
}

void to_json(nlohmann::json& j, const CapsuleChain& chain) {
  j = nlohmann::json{{"radius", chain.radius},
                     {"pin_index", chain.pin_index},
                     {"pull_index", chain.pull_index}};
  const double l0 = chain.rest_lengths.empty() ? 0.0 : chain.rest_lengths.front();
  const bool uniform = std::all_of(
      chain.rest_lengths.begin(), chain.rest_lengths.end(),
      [&](double l) { return std::abs(l - l0) < 1e-12; });
  if (uniform) {
    j["rest_length"] = l0;
  } else {
    j["rest_length"] = chain.rest_lengths;
  }
  auto& verts = j["vertices"] = nlohmann::json::array();
  for (const Vec3& v : chain.vertices) verts.push_back({v.x(), v.y(), v.z()});
}

void from_json(const nlohmann::json& j, CapsuleChain& chain) {
  chain.vertices.clear();
  for (const auto& v : j.at("vertices"))
    chain.vertices.emplace_back(v.at(0).get<double>(), v.at(1).get<double>(),
                                v.at(2).get<double>());
  chain.radius = j.at("radius").get<double>();
  chain.pin_index = j.at("pin_index").get<int>();
  chain.pull_index = j.at("pull_index").get<int>();
  const auto& rl = j.at("rest_length");
  const int edges = static_cast<int>(chain.vertices.size()) - 1;
  if (rl.is_number()) {
    chain.rest_lengths.assign(std::max(edges, 0), rl.get<double>());
  } else {
    chain.rest_lengths = rl.get<std::vector<double>>();
  }
  chain.validate();
}

// Exact Gauss-integral contribution of an ordered segment pair: the signed
// solid angle of the quadrilateral spanned by the four endpoints, evaluated
// with the arcsin form. Coplanar or near-touching pairs return 0 so
// measure-zero configurations cannot poison the sum.
double segment_pair_writhe(const Vec3& a0, const Vec3& a1, const Vec3& b0,
                           const Vec3& b1) {
  const Vec3 r12 = a1 - a0;
  const Vec3 r34 = b1 - b0;
  const Vec3 r13 = b0 - a0;
  const Vec3 r14 = b1 - a0;
  const Vec3 r23 = b0 - a1;
  const Vec3 r24 = b1 - a1;

  const double scale = std::max({r12.norm(), r34.norm(), r13.norm()});
  const double eps = 1e-12 * std::max(scale, 1.0);

  Vec3 n1 = r13.cross(r14);
  Vec3 n2 = r14.cross(r24);
  Vec3 n3 = r24.cross(r23);
  Vec3 n4 = r23.cross(r13);
  const double l1 = n1.norm(), l2 = n2.norm(), l3 = n3.norm(), l4 = n4.norm();
  if (l1 < eps * eps || l2 < eps * eps || l3 < eps * eps || l4 < eps * eps)
    return 0.0;
  n1 /= l1;
  n2 /= l2;
  n3 /= l3;
  n4 /= l4;

  const double triple = r34.cross(r12).dot(r13);
  if (std::abs(triple) < eps * eps * eps) return 0.0;  // coplanar pair

  const double omega = std::asin(clamp_unit(n1.dot(n2))) +
                       std::asin(clamp_unit(n2.dot(n3))) +
                       std::asin(clamp_unit(n3.dot(n4))) +
                       std::asin(clamp_unit(n4.dot(n1)));
  return (triple > 0.0 ? omega : -omega);
}

double polyline_writhe(const std::vector<Vec3>& points) {
  const int edges = static_cast<int>(points.size()) - 1;
  for (const Vec3& p : points)
    if (!finite(p)) throw ContractError("non-finite vertex coordinate");
  double sum = 0.0;
  for (int i = 0; i < edges; ++i) {
    for (int j = i + 2; j < edges; ++j) {
      sum += segment_pair_writhe(points[i], points[i + 1], points[j], points[j + 1]);
    }
  }
  // Ordered double sum over the symmetric kernel, normalized by 4*pi.
  return 2.0 * sum / (4.0 * M_PI);
}

double writhe(const CapsuleChain& chain) {
  chain.validate();
  return polyline_writhe(chain.vertices);
}

double free_end_length(const CapsuleChain& chain,
                       const std::vector<EdgePair>& contact_pairs) {
  if (contact_pairs.empty()) return 0.0;
  const int n = chain.vertex_count();
  std::vector<char> involved(static_cast<size_t>(n), 0);
  for (const auto& [ea, eb] : contact_pairs) {
    involved[ea] = involved[ea + 1] = 1;
    involved[eb] = involved[eb + 1] = 1;
  }
  const bool tip_is_last = chain.pull_index >= n / 2;
  double length = 0.0;
  if (tip_is_last) {
    for (int v = n - 1; v >= 0; --v) {
      if (involved[v]) return length;
      if (v > 0) length += chain.rest_lengths[v - 1];
    }
  } else {
    for (int v = 0; v < n; ++v) {
      if (involved[v]) return length;
      if (v < n - 1) length += chain.rest_lengths[v];
    }
  }
  return length;
}

KnotKind knot_kind_from_string(const std::string& name) {
  if (name == "loose_overhand") return KnotKind::kLooseOverhand;
  if (name == "tight_overhand") return KnotKind::kTightOverhand;
  if (name == "loose_double") return KnotKind::kLooseDouble;
  if (name == "tight_double") return KnotKind::kTightDouble;
  throw ConfigError("unknown knot kind: " + name);
}

std::string to_string(KnotKind kind) {
  switch (kind) {
    case KnotKind::kLooseOverhand: return "loose_overhand";
    case KnotKind::kTightOverhand: return "tight_overhand";
    case KnotKind::kLooseDouble: return "loose_double";
    case KnotKind::kTightDouble: return "tight_double";
  }
  return "loose_overhand";
}

namespace {

// Open trefoil arc with straight tangential tails. The (2,3) torus form keeps
// the strand threading through a single loop whose opening scales with
// `core`, which is what makes loose knots slide open under pulling.
std::vector<Vec3> overhand_curve(double core, double tail, double z_amp,
                                 int dense) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<size_t>(dense));
  const double t0 = 0.18 * 2.0 * M_PI;
  const double t1 = (1.0 - 0.18) * 2.0 * M_PI;
  const int n_core = dense / 2;
  auto eval = [&](double t) -> Vec3 {
    return {core * (std::sin(t) + 2.0 * std::sin(2.0 * t)),
            core * (std::cos(t) - 2.0 * std::cos(2.0 * t)),
            core * z_amp * (-std::sin(3.0 * t))};
  };
  const Vec3 p_start = eval(t0);
  const Vec3 p_end = eval(t1);
  const double h = 1e-5;
  const Vec3 tan_start = (eval(t0) - eval(t0 + h)).normalized();
  const Vec3 tan_end = (eval(t1) - eval(t1 - h)).normalized();

  const int n_tail = (dense - n_core) / 2;
  for (int i = n_tail; i >= 1; --i)
    pts.push_back(p_start + tan_start * (tail * i / n_tail));
  for (int i = 0; i <= n_core; ++i)
    pts.push_back(eval(t0 + (t1 - t0) * i / n_core));
  for (int i = 1; i <= n_tail; ++i)
    pts.push_back(p_end + tan_end * (tail * i / n_tail));
  return pts;
}

std::vector<Vec3> double_curve(double core, double tail, double z_amp, int dense) {
  // Two concatenated twists: the second core is the first one translated
  // along the exit tail, joined by a straight bridge.
  std::vector<Vec3> first = overhand_curve(core, tail * 0.5, z_amp, dense / 2);
  std::vector<Vec3> pts = first;
  const Vec3 end = first.back();
  const Vec3 dir = (first.back() - first[first.size() - 2]).normalized();
  const Vec3 start = first.front();
  const Vec3 offset = end + dir * (1.2 * core) - start;
  for (size_t i = 1; i < first.size(); ++i) pts.push_back(first[i] + offset);
  return pts;
}

double polyline_length(const std::vector<Vec3>& pts) {
  double len = 0.0;
  for (size_t i = 1; i < pts.size(); ++i) len += (pts[i] - pts[i - 1]).norm();
  return len;
}

// Walks the dense polyline placing vertices at exact chord distance d.
// leftover receives the arc length remaining past the last placed vertex, or
// -1 when the walk runs off the end, so a bisection on d can land the final
// vertex on the curve end. Every chord is exactly d by construction.
std::vector<Vec3> chord_walk(const std::vector<Vec3>& pts, double d, int n_chords,
                             double* leftover) {
  std::vector<Vec3> out;
  out.reserve(static_cast<size_t>(n_chords) + 1);
  out.push_back(pts.front());
  Vec3 cur = pts.front();  // last placed vertex
  Vec3 pos = pts.front();  // current position along the polyline
  size_t seg = 0;          // pos lies on [pts[seg], pts[seg+1]]
  bool ran_off = false;
  for (int k = 0; k < n_chords && !ran_off; ++k) {
    bool placed = false;
    while (seg + 1 < pts.size()) {
      const Vec3 seg_end = pts[seg + 1];
      if ((seg_end - cur).norm() >= d) {
        // solve |pos + t*(seg_end - pos) - cur| = d for t in [0,1]
        const Vec3 u = seg_end - pos;
        const Vec3 w = pos - cur;
        double t = 1.0;
        if (u.squaredNorm() > 0.0) {
          const double a = u.squaredNorm();
          const double b = 2.0 * w.dot(u);
          const double c = w.squaredNorm() - d * d;
          const double disc = std::max(0.0, b * b - 4.0 * a * c);
          t = std::clamp((-b + std::sqrt(disc)) / (2.0 * a), 0.0, 1.0);
        }
        pos += u * t;
        cur = pos;
        out.push_back(cur);
        placed = true;
        break;
      }
      seg += 1;
      pos = pts[seg];
    }
    ran_off = !placed;
  }
  if (leftover) {
    if (ran_off) {
      *leftover = -1.0;
    } else {
      double arc = (pts[seg + 1] - pos).norm();
      for (size_t s = seg + 1; s + 1 < pts.size(); ++s)
        arc += (pts[s + 1] - pts[s]).norm();
      *leftover = arc;
    }
  }
  return out;
}

// Resample to n vertices with one shared edge length (bisection on the chord).
std::vector<Vec3> resample_uniform(const std::vector<Vec3>& pts, int n) {
  const int chords = n - 1;
  const double total = polyline_length(pts);
  double lo = 0.5 * total / chords;
  double hi = 1.5 * total / chords;
  std::vector<Vec3> best;
  for (int iter = 0; iter < 80; ++iter) {
    const double d = 0.5 * (lo + hi);
    double leftover = 0.0;
    std::vector<Vec3> walked = chord_walk(pts, d, chords, &leftover);
    if (leftover < 0.0) {
      hi = d;  // chord too long, ran off the end
    } else {
      best = std::move(walked);
      if (leftover > 0.0)
        lo = d;
      else
        hi = d;
    }
  }
  if (static_cast<int>(best.size()) != n)
    throw ContractError("uniform resampling failed to converge");
  return best;
}

}  // namespace

CapsuleChain make_knot(KnotKind kind, int n_vertices, double scale,
                       std::uint64_t seed) {
  const bool is_double =
      kind == KnotKind::kLooseDouble || kind == KnotKind::kTightDouble;
  const bool tight =
      kind == KnotKind::kTightOverhand || kind == KnotKind::kTightDouble;
  const int min_vertices = is_double ? 40 : 24;
  if (n_vertices < min_vertices)
    throw ConfigError("knot " + to_string(kind) + " needs at least " +
                      std::to_string(min_vertices) + " vertices");
  if (scale <= 0.0) throw ConfigError("knot scale must be positive");

  Rng rng(derive_seed(seed, "knot_shape"));
  const double core_jitter = rng.uniform(0.92, 1.08);
  const double z_amp = rng.uniform(0.75, 0.95);
  const double tail_jitter = rng.uniform(0.9, 1.1);

  const double core = (tight ? 0.042 : 0.075) * scale * core_jitter;
  const double tail = (is_double ? 0.55 : 0.85) * scale * tail_jitter;
  const int dense = 4096;

  std::vector<Vec3> curve = is_double ? double_curve(core, tail, z_amp, dense)
                                      : overhand_curve(core, tail, z_amp, dense);

  CapsuleChain chain;
  chain.vertices = resample_uniform(curve, n_vertices);
  const double d = (chain.vertices[1] - chain.vertices[0]).norm();
  chain.rest_lengths.assign(static_cast<size_t>(n_vertices - 1), d);
  chain.radius = 0.012;
  chain.pin_index = 2;
  chain.pull_index = n_vertices - 3;

  // center at the origin so yaw randomization spins in place
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& v : chain.vertices) centroid += v;
  centroid /= chain.vertex_count();
  for (Vec3& v : chain.vertices) v -= centroid;

  chain.validate();
  return chain;
}

CapsuleChain mirrored(const CapsuleChain& chain) {
  CapsuleChain out = chain;
  for (Vec3& v : out.vertices) v.x() = -v.x();
  return out;
}

}  // namespace adq::geom
