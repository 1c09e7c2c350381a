#include "adqsim/evalsuite.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <ostream>
#include <thread>

#include <nlohmann/json.hpp>

#include "adqsim/errors.hpp"

namespace adq::evals {
namespace {

using nlohmann::json;

// Runs fn(i) for i in [0, n) across a worker pool. Each index owns its output
// slot, so results are deterministic regardless of scheduling.
void parallel_indices(int n, int workers,
                      const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::unique_ptr<env::PolicyHandle> make_policy(const MethodSpec& method,
                                               obs::ObservationMode* mode_out) {
  if (method.scripted) return policy::scripted_baseline(method.baseline);
  if (method.checkpoint_path.empty())
    throw ConfigError("method " + method.name + " requires a checkpoint");
  policy::PolicyNet net = policy::PolicyNet::load(method.checkpoint_path);
  if (mode_out) *mode_out = net.mode;
  return std::make_unique<policy::NetPolicy>(std::move(net), true);
}

}  // namespace

MethodSpec MethodSpec::scripted_spec(const std::string& name) {
  MethodSpec m;
  m.name = name;
  m.scripted = true;
  m.baseline = policy::baseline_from_string(name);
  return m;
}

MethodSpec MethodSpec::learned(const std::string& name,
                               const std::string& checkpoint) {
  MethodSpec m;
  m.name = name;
  m.scripted = false;
  m.checkpoint_path = checkpoint;
  return m;
}

std::vector<std::string> default_grid_methods() {
  return {"random",          "opposite",       "naive",
          "naive_fixed_ternary", "naive_adaptive_ternary", "adq_no_ternary",
          "adq_fixed_tau",   "adq"};
}

double EvalResult::mean_reduction() const {
  return stats::mean(writhe_reductions);
}

double EvalResult::success_rate() const {
  if (successes.empty()) return 0.0;
  int n = 0;
  for (bool s : successes) n += s ? 1 : 0;
  return static_cast<double>(n) / successes.size();
}

std::vector<std::uint64_t> episode_seeds(std::uint64_t root, int n_trials) {
  std::vector<std::uint64_t> seeds(static_cast<size_t>(n_trials));
  for (int i = 0; i < n_trials; ++i)
    seeds[static_cast<size_t>(i)] = derive_seed(root, "trial", i);
  return seeds;
}

EvalResult evaluate_method(const MethodSpec& method, env::SimConfig eval_config,
                           std::span<const std::uint64_t> seeds, int workers,
                           double tau_override) {
  obs::ObservationMode mode = eval_config.obs_mode;
  auto probe = make_policy(method, &mode);  // fail fast on missing checkpoints
  if (!method.scripted) eval_config.obs_mode = mode;
  if (tau_override > 0.0) eval_config.adq.fixed_tau = tau_override;
  eval_config.validate();

  const int n = static_cast<int>(seeds.size());
  EvalResult result;
  result.method = method.name;
  result.writhe_reductions.resize(static_cast<size_t>(n));
  result.successes.resize(static_cast<size_t>(n));
  result.pull_counts.resize(static_cast<size_t>(n));
  result.peak_forces.resize(static_cast<size_t>(n));

  parallel_indices(n, workers, [&](int i) {
    auto handle = make_policy(method, nullptr);
    const env::EpisodeRecord rec =
        env::run_episode(*handle, eval_config, seeds[static_cast<size_t>(i)]);
    result.writhe_reductions[static_cast<size_t>(i)] = rec.writhe_reduction();
    result.successes[static_cast<size_t>(i)] = rec.success;
    result.pull_counts[static_cast<size_t>(i)] = rec.step_count;
    result.peak_forces[static_cast<size_t>(i)] = rec.peak_force;
  });
  (void)probe;
  return result;
}

AblationGrid run_ablation_grid(std::span<const MethodSpec> methods,
                               const env::SimConfig& eval_config, int n_trials,
                               std::uint64_t seed, int workers,
                               const std::string& target) {
  if (n_trials < 2) throw ConfigError("ablation grid needs n_trials >= 2");
  const auto seeds = episode_seeds(seed, n_trials);

  AblationGrid grid;
  grid.target = target;
  for (const MethodSpec& m : methods)
    grid.results.push_back(evaluate_method(m, eval_config, seeds, workers));

  const auto* target_result = static_cast<const EvalResult*>(nullptr);
  for (const auto& r : grid.results)
    if (r.method == target) target_result = &r;
  if (!target_result)
    throw ConfigError("target method " + target + " not in the grid");

  for (const auto& r : grid.results) {
    if (r.method == target) continue;
    grid.baselines.push_back(r.method);
    // alternative: target unties more (more negative writhe reduction)
    grid.p_raw.push_back(stats::welch_one_sided(target_result->writhe_reductions,
                                                r.writhe_reductions,
                                                stats::Alternative::kLess)
                             .p);
  }
  grid.p_holm = stats::holm_correct(grid.p_raw);
  return grid;
}

std::vector<SweepPoint> threshold_sweep(const std::string& checkpoint_path,
                                        std::span<const double> taus,
                                        const env::SimConfig& eval_config,
                                        int n_trials, std::uint64_t seed,
                                        int workers) {
  if (taus.empty()) throw ContractError("threshold sweep needs a non-empty tau list");
  policy::PolicyNet net = policy::PolicyNet::load(checkpoint_path);
  if (obs::mode_is_adaptive(net.mode) || !obs::mode_quantizes(net.mode))
    throw ConfigError("threshold sweep expects a fixed-ternary checkpoint, got " +
                      obs::to_string(net.mode));

  const auto seeds = episode_seeds(seed, n_trials);
  const MethodSpec method = MethodSpec::learned(obs::to_string(net.mode),
                                                checkpoint_path);
  std::vector<SweepPoint> curve;
  for (double tau : taus) {
    if (tau <= 0.0) throw ContractError("sweep thresholds must be positive");
    const EvalResult r = evaluate_method(method, eval_config, seeds, workers, tau);
    SweepPoint p;
    p.tau = tau;
    p.mean_reduction = r.mean_reduction();
    const auto ci = stats::bootstrap_ci(r.writhe_reductions, 2000, 0.95,
                                        derive_seed(seed, "sweep_ci"));
    p.ci_lo = ci.lo;
    p.ci_hi = ci.hi;
    p.success_rate = r.success_rate();
    curve.push_back(p);
  }
  return curve;
}

namespace {

struct DomainSamples {
  std::vector<std::array<double, 3>> raw;        // endpoint sensor force
  std::vector<std::array<double, 3>> processed;  // observation force slots
};

DomainSamples collect_step_samples(const MethodSpec& method,
                                   env::SimConfig config, int n_steps,
                                   std::uint64_t seed, int workers) {
  obs::ObservationMode mode = config.obs_mode;
  auto probe = make_policy(method, &mode);
  if (!method.scripted) config.obs_mode = mode;
  config.validate();
  (void)probe;

  DomainSamples out;
  int chunk_start = 0;
  const int chunk = std::max(2 * workers, 8);
  while (static_cast<int>(out.raw.size()) < n_steps) {
    std::vector<env::EpisodeRecord> records(static_cast<size_t>(chunk));
    parallel_indices(chunk, workers, [&](int i) {
      auto handle = make_policy(method, nullptr);
      records[static_cast<size_t>(i)] = env::run_episode(
          *handle, config, derive_seed(seed, "gap_episode", chunk_start + i));
    });
    for (const auto& rec : records) {
      for (const auto& s : rec.steps) {
        const auto& f = s.sensor_trace.samples.back();
        out.raw.push_back({f.x(), f.y(), f.z()});
        out.processed.push_back(
            {s.force_slots.x(), s.force_slots.y(), s.force_slots.z()});
        if (static_cast<int>(out.raw.size()) == n_steps) break;
      }
      if (static_cast<int>(out.raw.size()) == n_steps) break;
    }
    chunk_start += chunk;
  }
  return out;
}

std::vector<double> axis_slice(const std::vector<std::array<double, 3>>& v,
                               int axis, const std::vector<int>* idx = nullptr) {
  std::vector<double> out;
  if (idx) {
    out.reserve(idx->size());
    for (int i : *idx) out.push_back(v[static_cast<size_t>(i)][axis]);
  } else {
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(s[axis]);
  }
  return out;
}

}  // namespace

GapReport measure_gap(const MethodSpec& method, const env::SimConfig& config_a,
                      const env::SimConfig& config_b, int n_a, int n_b,
                      std::uint64_t seed, int workers, int resamples) {
  if (n_a < 2 || n_b < 2) throw ContractError("gap needs >= 2 samples per side");
  const DomainSamples sa = collect_step_samples(method, config_a, n_a, seed, workers);
  const DomainSamples sb = collect_step_samples(method, config_b, n_b, seed, workers);

  GapReport report;
  report.n_a = n_a;
  report.n_b = n_b;
  for (int axis = 0; axis < 3; ++axis) {
    report.raw_w1[axis] =
        stats::wasserstein_1d(axis_slice(sa.raw, axis), axis_slice(sb.raw, axis));
    report.processed_w1[axis] = stats::wasserstein_1d(
        axis_slice(sa.processed, axis), axis_slice(sb.processed, axis));
  }
  report.raw_mean =
      (report.raw_w1[0] + report.raw_w1[1] + report.raw_w1[2]) / 3.0;
  report.processed_mean =
      (report.processed_w1[0] + report.processed_w1[1] + report.processed_w1[2]) /
      3.0;

  // bootstrap the axis-mean W1 by resampling steps on both sides jointly
  Rng boot_rng(derive_seed(seed, "gap_bootstrap"));
  auto bootstrap = [&](const std::vector<std::array<double, 3>>& a,
                       const std::vector<std::array<double, 3>>& b,
                       double point_estimate) {
    std::vector<double> estimates;
    estimates.reserve(static_cast<size_t>(resamples));
    std::vector<int> ia(a.size()), ib(b.size());
    for (int r = 0; r < resamples; ++r) {
      for (auto& i : ia) i = boot_rng.uniform_int(0, static_cast<int>(a.size()) - 1);
      for (auto& i : ib) i = boot_rng.uniform_int(0, static_cast<int>(b.size()) - 1);
      double m = 0.0;
      for (int axis = 0; axis < 3; ++axis)
        m += stats::wasserstein_1d(axis_slice(a, axis, &ia),
                                   axis_slice(b, axis, &ib));
      estimates.push_back(m / 3.0);
    }
    std::sort(estimates.begin(), estimates.end());
    auto quantile = [&](double q) {
      const double pos = q * (estimates.size() - 1);
      const size_t lo = static_cast<size_t>(pos);
      const size_t hi = std::min(lo + 1, estimates.size() - 1);
      const double w = pos - lo;
      return (1.0 - w) * estimates[lo] + w * estimates[hi];
    };
    stats::BootstrapCi ci;
    ci.mean = point_estimate;
    ci.lo = quantile(0.025);
    ci.hi = quantile(0.975);
    return ci;
  };
  report.raw_ci = bootstrap(sa.raw, sb.raw, report.raw_mean);
  report.processed_ci = bootstrap(sa.processed, sb.processed, report.processed_mean);
  return report;
}

void write_grid_csv(const AblationGrid& grid,
                    std::span<const std::uint64_t> seeds, std::ostream& out) {
  out << "method,trial,seed,writhe_reduction,success,pulls,peak_force\n";
  for (const auto& r : grid.results) {
    for (int i = 0; i < r.trials(); ++i) {
      out << r.method << ',' << i << ',' << seeds[static_cast<size_t>(i)] << ','
          << r.writhe_reductions[static_cast<size_t>(i)] << ','
          << (r.successes[static_cast<size_t>(i)] ? 1 : 0) << ','
          << r.pull_counts[static_cast<size_t>(i)] << ','
          << r.peak_forces[static_cast<size_t>(i)] << "\n";
    }
  }
}

void write_grid_summary_json(const AblationGrid& grid, std::uint64_t seed,
                             std::ostream& out) {
  json j;
  j["schema"] = 1;
  j["seed"] = seed;
  j["target"] = grid.target;
  json methods = json::object();
  for (const auto& r : grid.results) {
    json m;
    m["mean_writhe_reduction"] = r.mean_reduction();
    const auto ci =
        stats::bootstrap_ci(r.writhe_reductions, 2000, 0.95, seed ^ 0x5eedull);
    m["ci"] = {ci.lo, ci.hi};
    m["success_rate"] = r.success_rate();
    double mean_pulls = 0.0, mean_peak = 0.0;
    for (int p : r.pull_counts) mean_pulls += p;
    for (double p : r.peak_forces) mean_peak = std::max(mean_peak, p);
    m["mean_pulls"] = r.trials() ? mean_pulls / r.trials() : 0.0;
    m["max_peak_force"] = mean_peak;
    for (size_t b = 0; b < grid.baselines.size(); ++b) {
      if (grid.baselines[b] == r.method) {
        m["p_raw"] = grid.p_raw[b];
        m["p_holm"] = grid.p_holm[b];
      }
    }
    methods[r.method] = m;
  }
  j["methods"] = methods;
  out << j.dump(2) << "\n";
}

void write_sweep_csv(std::span<const SweepPoint> curve, std::ostream& out) {
  out << "tau,mean_writhe_reduction,ci_lo,ci_hi,success_rate\n";
  for (const auto& p : curve) {
    out << p.tau << ',' << p.mean_reduction << ',' << p.ci_lo << ',' << p.ci_hi
        << ',' << p.success_rate << "\n";
  }
}

void write_gap_json(const GapReport& report, std::ostream& out) {
  json j;
  j["schema"] = 1;
  j["n_a"] = report.n_a;
  j["n_b"] = report.n_b;
  j["raw"] = {{"per_axis", report.raw_w1},
              {"mean", report.raw_mean},
              {"ci", {report.raw_ci.lo, report.raw_ci.hi}}};
  j["processed"] = {{"per_axis", report.processed_w1},
                    {"mean", report.processed_mean},
                    {"ci", {report.processed_ci.lo, report.processed_ci.hi}}};
  out << j.dump(2) << "\n";
}

}  // namespace adq::evals
