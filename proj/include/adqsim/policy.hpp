#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "adqsim/env.hpp"
#include "adqsim/observation.hpp"

namespace adq::policy {

constexpr int kObsDim = obs::kFlatDim;  // 45
constexpr int kActDim = 6;              // [u(3), delta tau(3)]
constexpr int kHidden = 64;
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 1.0;

using ObsVec = Eigen::Matrix<double, kObsDim, 1>;
using ActVec = Eigen::Matrix<double, kActDim, 1>;

// Two-hidden-layer tanh network with a squashed-Gaussian action head and a
// state-value head. Samples are squashed through tanh into [-1,1]^6; log-std
// is a free per-dimension parameter clamped to [kLogStdMin, kLogStdMax].
struct PolicyNet {
  Eigen::MatrixXd w1, w2, wm, wv;
  Eigen::VectorXd b1, b2, bm, bv, log_std;
  obs::ObservationMode mode = obs::ObservationMode::kAdq;
  std::uint64_t config_hash = 0;

  static PolicyNet initialize(std::uint64_t seed,
                              obs::ObservationMode mode = obs::ObservationMode::kAdq,
                              double log_std_init = -0.5);

  struct Forward {
    Eigen::VectorXd h1, h2;  // post-activation
    ActVec mean;             // pre-squash action mean
    double value = 0.0;
  };
  Forward forward(const ObsVec& x) const;

  double value(const ObsVec& x) const { return forward(x).value; }

  // Pre-squash Gaussian sample (or mean), squashed action, and log density of
  // the pre-squash sample under the current Gaussian.
  struct Sample {
    ActVec pre_squash;
    ActVec action;  // tanh(pre_squash)
    double log_prob = 0.0;
  };
  Sample sample(const ObsVec& x, Rng& rng, bool deterministic) const;

  env::StepAction act(const ObsVec& x, Rng& rng, bool deterministic) const;

  // Flat parameter interface (checkpointing, finite differences, Adam).
  int param_count() const;
  Eigen::VectorXd flatten() const;
  void unflatten(const Eigen::VectorXd& theta);

  void save(const std::string& path) const;
  static PolicyNet load(const std::string& path);
};

double gaussian_log_prob(const ActVec& pre_squash, const ActVec& mean,
                         const Eigen::VectorXd& log_std);

struct TrainHyper {
  int steps_per_iteration = 2048;
  int iterations = 300;
  int epochs = 10;
  int minibatch = 256;
  double learning_rate = 3e-4;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double value_coef = 0.5;
  double entropy_coef = 3e-3;
  double max_grad_norm = 0.5;
  double log_std_init = -0.5;
  int workers = 1;
};

struct IterationReport {
  int iteration = 0;
  long total_env_steps = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  double mean_writhe_reduction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double wall_seconds = 0.0;
  int episodes = 0;
};

struct TrainReport {
  std::vector<IterationReport> iterations;
  bool aborted_nan = false;
};

struct TrainResult {
  PolicyNet net;
  TrainReport report;
};

// On-policy actor-critic with clipped surrogate objective and GAE over
// parallel rollout workers. Deterministic given (config, hyper, seed):
// worker buffers merge in worker order, the update is single-threaded.
// A non-finite loss aborts training and the last good network is returned.
TrainResult train(const env::SimConfig& config, const TrainHyper& hyper,
                  std::uint64_t seed,
                  const std::function<void(const IterationReport&)>& on_iteration =
                      nullptr);

// Frozen rollout slice for the PPO update (and its gradient check).
struct Batch {
  std::vector<ObsVec> observations;
  std::vector<ActVec> pre_squash;    // stored Gaussian samples
  std::vector<double> log_prob_old;
  std::vector<double> advantages;
  std::vector<double> returns;
};

struct LossBreakdown {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
};

struct Gradients {
  Eigen::VectorXd flat;  // same layout as PolicyNet::flatten()
};

// Clipped-surrogate + value + entropy loss; fills analytic gradients when
// grads is non-null. Exposed for the finite-difference oracle.
LossBreakdown ppo_loss(const PolicyNet& net, const Batch& batch,
                       const TrainHyper& hyper, Gradients* grads);

// Gradient-times-input attribution of the squashed action-mean norm.
ObsVec saliency(const PolicyNet& net, const ObsVec& x);
// Same attribution summed over the 9-slot group of each history step.
Eigen::Matrix<double, obs::kHistory, 1> saliency_by_history(const PolicyNet& net,
                                                            const ObsVec& x);

enum class BaselineKind { kRandom, kOpposite };
BaselineKind baseline_from_string(const std::string& name);

// Scripted baselines: random draws one uniform unit pull direction per
// episode and repeats it; opposite pulls directly away from the pin along the
// inter-hand line. Both leave the thresholds untouched.
std::unique_ptr<env::PolicyHandle> scripted_baseline(BaselineKind kind);

// Wraps a network as an episode controller (deterministic or sampling).
class NetPolicy : public env::PolicyHandle {
 public:
  NetPolicy(PolicyNet net, bool deterministic)
      : net_(std::move(net)), deterministic_(deterministic) {}
  env::StepAction act(const obs::FlatObs& observation,
                      const env::StepContext& context, Rng& rng) override;
  const PolicyNet& net() const { return net_; }

 private:
  PolicyNet net_;
  bool deterministic_;
};

void write_train_report_csv(const TrainReport& report, std::ostream& out);

}  // namespace adq::policy
