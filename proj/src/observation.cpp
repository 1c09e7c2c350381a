#include "adqsim/observation.hpp"

#include <algorithm>
#include <cmath>

#include "adqsim/errors.hpp"

namespace adq::obs {

void ForceTrace::validate() const {
  if (samples.size() < 2)
    throw ContractError("force trace needs at least 2 samples");
  for (const Vec3& s : samples)
    if (!std::isfinite(s.x()) || !std::isfinite(s.y()) || !std::isfinite(s.z()))
      throw ContractError("non-finite force sample");
}

Vec3 force_difference(const ForceTrace& trace) {
  trace.validate();
  const int k = trace.difference_count();
  Vec3 sum = Vec3::Zero();
  for (int i = 1; i <= k; ++i) sum += trace.samples[i] - trace.samples[i - 1];
  return sum / k;
}

Vec3 quantize(const Vec3& delta, const Vec3& tau) {
  Vec3 q;
  for (int i = 0; i < 3; ++i) {
    if (!(tau[i] > 0.0)) throw ContractError("quantization threshold must be > 0");
    if (delta[i] > tau[i])
      q[i] = 1.0;
    else if (delta[i] < -tau[i])
      q[i] = -1.0;
    else
      q[i] = 0.0;
  }
  return q;
}

ThresholdState ThresholdState::init(double tau0, double tau_min, double tau_max,
                                    double delta_max) {
  ThresholdState s;
  s.tau = Vec3::Constant(tau0);
  s.last_delta = Vec3::Zero();
  s.tau_min = tau_min;
  s.tau_max = tau_max;
  s.tau_init = tau0;
  s.delta_max = delta_max;
  return s;
}

ThresholdState update_threshold(ThresholdState state, const Vec3& delta_tau_action) {
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(delta_tau_action[i]))
      throw ContractError("non-finite threshold action");
    const double delta = state.delta_max * delta_tau_action[i];
    const double next = std::clamp(state.tau[i] + delta, state.tau_min, state.tau_max);
    state.last_delta[i] = next - state.tau[i];
    state.tau[i] = next;
  }
  return state;
}

ObservationMode mode_from_string(const std::string& name) {
  if (name == "adq") return ObservationMode::kAdq;
  if (name == "adq_no_ternary") return ObservationMode::kAdqNoTernary;
  if (name == "adq_fixed_tau") return ObservationMode::kAdqFixedTau;
  if (name == "naive") return ObservationMode::kNaive;
  if (name == "naive_fixed_ternary") return ObservationMode::kNaiveFixedTernary;
  if (name == "naive_adaptive_ternary")
    return ObservationMode::kNaiveAdaptiveTernary;
  throw ConfigError("unknown observation mode: " + name);
}

std::string to_string(ObservationMode mode) {
  switch (mode) {
    case ObservationMode::kAdq: return "adq";
    case ObservationMode::kAdqNoTernary: return "adq_no_ternary";
    case ObservationMode::kAdqFixedTau: return "adq_fixed_tau";
    case ObservationMode::kNaive: return "naive";
    case ObservationMode::kNaiveFixedTernary: return "naive_fixed_ternary";
    case ObservationMode::kNaiveAdaptiveTernary: return "naive_adaptive_ternary";
  }
  return "adq";
}

bool mode_is_adaptive(ObservationMode mode) {
  return mode == ObservationMode::kAdq ||
         mode == ObservationMode::kNaiveAdaptiveTernary;
}

bool mode_uses_difference(ObservationMode mode) {
  return mode == ObservationMode::kAdq || mode == ObservationMode::kAdqNoTernary ||
         mode == ObservationMode::kAdqFixedTau;
}

bool mode_quantizes(ObservationMode mode) {
  return mode != ObservationMode::kAdqNoTernary && mode != ObservationMode::kNaive;
}

ObsVector Observation::flatten() const {
  ObsVector v;
  v << force_slots, last_delta_tau, z;
  return v;
}

Observation build_observation(const ForceTrace& trace,
                              const ThresholdState& thresholds, const Vec3& pin,
                              const Vec3& pull, ObservationMode mode) {
  const Vec3 gap = pull - pin;
  if (gap.norm() < 1e-12)
    throw ContractError("degenerate geometry: pin and pull coincide");

  Observation o;
  const Vec3 signal =
      mode_uses_difference(mode) ? force_difference(trace) : trace.samples.back();
  o.force_slots = mode_quantizes(mode) ? quantize(signal, thresholds.tau) : signal;
  o.last_delta_tau = mode_is_adaptive(mode) ? thresholds.last_delta : Vec3::Zero();
  o.z = gap.normalized();
  return o;
}

void ObservationStack::reset() {
  for (auto& slot : buffer_) slot.setZero();
}

void ObservationStack::push(const Observation& o) {
  for (int i = 0; i + 1 < kHistory; ++i) buffer_[i] = buffer_[i + 1];
  buffer_[kHistory - 1] = o.flatten();
}

FlatObs ObservationStack::flatten() const {
  FlatObs flat;
  for (int i = 0; i < kHistory; ++i)
    flat.segment<kObsDim>(i * kObsDim) = buffer_[i];
  return flat;
}

}  // namespace adq::obs
