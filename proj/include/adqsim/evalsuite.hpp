#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "adqsim/env.hpp"
#include "adqsim/policy.hpp"
#include "adqsim/stats.hpp"

namespace adq::evals {

// One evaluated method: a scripted baseline ("random", "opposite") or a
// learned policy identified by its observation-mode name plus a checkpoint.
struct MethodSpec {
  std::string name;
  bool scripted = false;
  policy::BaselineKind baseline = policy::BaselineKind::kRandom;
  std::string checkpoint_path;  // required when !scripted

  static MethodSpec scripted_spec(const std::string& name);
  static MethodSpec learned(const std::string& name, const std::string& checkpoint);
};

// Canonical eight-method grid order.
std::vector<std::string> default_grid_methods();

struct EvalResult {
  std::string method;
  std::vector<double> writhe_reductions;  // signed; more negative is better
  std::vector<bool> successes;
  std::vector<int> pull_counts;
  std::vector<double> peak_forces;

  int trials() const { return static_cast<int>(writhe_reductions.size()); }
  double mean_reduction() const;
  double success_rate() const;
};

// Rolls one method over the given episode seeds in eval_config. Learned
// policies act deterministically; the observation mode comes from the
// checkpoint. Fixed-ternary modes can override the threshold via tau_override.
EvalResult evaluate_method(const MethodSpec& method, env::SimConfig eval_config,
                           std::span<const std::uint64_t> seeds, int workers,
                           double tau_override = 0.0);

std::vector<std::uint64_t> episode_seeds(std::uint64_t root, int n_trials);

struct AblationGrid {
  std::vector<EvalResult> results;         // one per method, grid order
  std::string target;                      // method compared against the rest
  std::vector<std::string> baselines;      // everything but target
  std::vector<double> p_raw;               // one-sided Welch, target better
  std::vector<double> p_holm;
};

// Paired evaluation of every method under shared episode seeds, plus
// Holm-corrected one-sided Welch p-values of the target vs each baseline on
// writhe reduction (alternative: target's mean is lower).
AblationGrid run_ablation_grid(std::span<const MethodSpec> methods,
                               const env::SimConfig& eval_config, int n_trials,
                               std::uint64_t seed, int workers,
                               const std::string& target = "adq");

struct SweepPoint {
  double tau = 0.0;
  double mean_reduction = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double success_rate = 0.0;
};

// Evaluates one fixed-threshold checkpoint under each tau in taus.
std::vector<SweepPoint> threshold_sweep(const std::string& checkpoint_path,
                                        std::span<const double> taus,
                                        const env::SimConfig& eval_config,
                                        int n_trials, std::uint64_t seed,
                                        int workers);

struct GapReport {
  int n_a = 0;  // per-step samples from config_a
  int n_b = 0;
  std::array<double, 3> raw_w1{};        // per-axis, endpoint sensor force
  std::array<double, 3> processed_w1{};  // per-axis, observation force slots
  double raw_mean = 0.0;
  double processed_mean = 0.0;
  stats::BootstrapCi raw_ci;        // bootstrap of the axis-mean W1
  stats::BootstrapCi processed_ci;
};

// Rolls the same policy in both configs and compares the per-axis 1D
// Wasserstein distance of raw forces vs processed observation slots.
GapReport measure_gap(const MethodSpec& method, const env::SimConfig& config_a,
                      const env::SimConfig& config_b, int n_a, int n_b,
                      std::uint64_t seed, int workers, int resamples = 2000);

void write_grid_csv(const AblationGrid& grid,
                    std::span<const std::uint64_t> seeds, std::ostream& out);
void write_grid_summary_json(const AblationGrid& grid, std::uint64_t seed,
                             std::ostream& out);
void write_sweep_csv(std::span<const SweepPoint> curve, std::ostream& out);
void write_gap_json(const GapReport& report, std::ostream& out);

}  // namespace adq::evals
