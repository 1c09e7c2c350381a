#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace adq::geom {

using Vec3 = Eigen::Vector3d;

// Pair of edge indices in self-contact. Edge i spans vertices (i, i+1).
using EdgePair = std::pair<int, int>;

// Discretized entanglement proxy: an open chain of overlapping capsules.
// pin_index is held fixed by one grasp, pull_index is driven by actions.
struct CapsuleChain {
  std::vector<Vec3> vertices;
  std::vector<double> rest_lengths;  // one per edge, vertices.size()-1
  double radius = 0.012;
  int pin_index = 0;
  int pull_index = 0;

  int vertex_count() const { return static_cast<int>(vertices.size()); }
  int edge_count() const { return static_cast<int>(vertices.size()) - 1; }
  double total_rest_length() const;
  double edge_length(int e) const { return (vertices[e + 1] - vertices[e]).norm(); }

  // Throws ContractError on violated invariants (size, indices, radius,
  // rest lengths, non-finite coordinates).
  void validate() const;
};

void to_json(nlohmann::json& j, const CapsuleChain& chain);
void from_json(const nlohmann::json& j, CapsuleChain& chain);

struct WritheValue {
  double value = 0.0;
};

// Signed writhe of a polyline: (1/4pi) * sum over ordered non-adjacent edge
// pairs of the exact solid-angle contribution. Adjacent pairs and degenerate
// (coplanar or near-touching) pairs contribute zero.
double writhe(const CapsuleChain& chain);
double polyline_writhe(const std::vector<Vec3>& points);

// Exact Gauss-integral contribution of one ordered segment pair
// (a0->a1, b0->b1). Exposed so tests can compare against quadrature per pair.
double segment_pair_writhe(const Vec3& a0, const Vec3& a1, const Vec3& b0,
                           const Vec3& b1);

// Arc length from the free tip on the pulling side to the nearest
// contact-involved vertex. Zero when the contact set is empty.
double free_end_length(const CapsuleChain& chain,
                       const std::vector<EdgePair>& contact_pairs);

enum class KnotKind { kLooseOverhand, kTightOverhand, kLooseDouble, kTightDouble };

KnotKind knot_kind_from_string(const std::string& name);
std::string to_string(KnotKind kind);

// Procedural open knot: trefoil-derived core for overhand, two concatenated
// cores for double. Uniformly resampled so all edges share one rest length;
// deterministic in (kind, n_vertices, scale, seed). Minimum vertex counts:
// 24 for single knots, 40 for double.
CapsuleChain make_knot(KnotKind kind, int n_vertices, double scale,
                       std::uint64_t seed);

// Mirror through the x=0 plane; flips writhe sign.
CapsuleChain mirrored(const CapsuleChain& chain);

}  // namespace adq::geom
