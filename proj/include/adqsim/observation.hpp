#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <vector>

namespace adq::obs {

using Vec3 = Eigen::Vector3d;

constexpr int kHistory = 5;   // temporal stack depth H
constexpr int kObsDim = 9;    // [q(3), last delta tau(3), z(3)]
constexpr int kFlatDim = kHistory * kObsDim;

using ObsVector = Eigen::Matrix<double, kObsDim, 1>;
using FlatObs = Eigen::Matrix<double, kFlatDim, 1>;

// Force samples recorded during one pulling action. samples[0] is the
// reaction at pull start, samples[1..K] one per substep, so K differences
// are available.
struct ForceTrace {
  std::vector<Vec3> samples;

  int difference_count() const { return static_cast<int>(samples.size()) - 1; }
  void validate() const;  // length >= 2, all components finite
};

// Mean of intra-action differences; telescopes to (f_K - f_0) / K.
Vec3 force_difference(const ForceTrace& trace);

// Per axis: -1 if x < -tau, 0 if |x| <= tau, +1 if x > tau.
// Components returned as exact -1.0 / 0.0 / +1.0. tau must be positive.
Vec3 quantize(const Vec3& delta, const Vec3& tau);

// Per-axis quantization thresholds, policy-adjustable within [tau_min, tau_max].
struct ThresholdState {
  Vec3 tau{0.15, 0.15, 0.15};
  Vec3 last_delta{0.0, 0.0, 0.0};
  double tau_min = 0.005;
  double tau_max = 2.5;
  double tau_init = 0.15;
  double delta_max = 0.1;  // N of threshold change at |raw action| = 1

  static ThresholdState init(double tau0 = 0.15, double tau_min = 0.005,
                             double tau_max = 2.5, double delta_max = 0.1);
};

// Applies a raw [-1,1] threshold action: tau' = clamp(tau + delta_max * a).
// last_delta records the post-clamp change actually applied.
ThresholdState update_threshold(ThresholdState state, const Vec3& delta_tau_action);

// Force-slot content for the ablation grid. Adaptive modes feed the applied
// threshold update back into the observation; fixed-threshold modes hold
// those slots at zero so the input dimension is constant across variants.
enum class ObservationMode {
  kAdq,                   // quantize(force difference, adaptive tau)
  kAdqNoTernary,          // raw force difference
  kAdqFixedTau,           // quantize(force difference, fixed tau)
  kNaive,                 // raw endpoint force
  kNaiveFixedTernary,     // quantize(endpoint force, fixed tau)
  kNaiveAdaptiveTernary,  // quantize(endpoint force, adaptive tau)
};

ObservationMode mode_from_string(const std::string& name);
std::string to_string(ObservationMode mode);
bool mode_is_adaptive(ObservationMode mode);
bool mode_uses_difference(ObservationMode mode);
bool mode_quantizes(ObservationMode mode);

struct Observation {
  Vec3 force_slots{0, 0, 0};     // q, raw difference, or raw force per mode
  Vec3 last_delta_tau{0, 0, 0};  // zero in fixed-threshold modes
  Vec3 z{0, 0, 1};               // unit direction pin -> pull

  ObsVector flatten() const;
};

// Assembles one step's observation. pin == pull is a degenerate-geometry
// contract violation.
Observation build_observation(const ForceTrace& trace,
                              const ThresholdState& thresholds, const Vec3& pin,
                              const Vec3& pull, ObservationMode mode);

// Fixed-depth ring buffer of the last H observations, zero-padded before
// step H, flattened oldest-first.
class ObservationStack {
 public:
  ObservationStack() { reset(); }

  void reset();
  void push(const Observation& o);
  FlatObs flatten() const;

 private:
  std::array<ObsVector, kHistory> buffer_;
};

}  // namespace adq::obs
