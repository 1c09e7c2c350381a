#include "adqsim/policy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "adqsim/errors.hpp"

namespace adq::policy {
namespace {

using nlohmann::json;

constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5 * log(2*pi)

double tanh_clamped(double x) { return std::tanh(x); }

void write_u32_le(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff),
               static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32_le(std::ostream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  write_u32_le(out, v);
}

float read_f32_le(std::istream& in) {
  const std::uint32_t v = read_u32_le(in);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

struct LayerRef {
  const char* name;
  Eigen::MatrixXd* matrix;
  Eigen::VectorXd* vector;
};

std::vector<LayerRef> layer_refs(PolicyNet& net) {
  return {{"w1", &net.w1, nullptr}, {"b1", nullptr, &net.b1},
          {"w2", &net.w2, nullptr}, {"b2", nullptr, &net.b2},
          {"wm", &net.wm, nullptr}, {"bm", nullptr, &net.bm},
          {"wv", &net.wv, nullptr}, {"bv", nullptr, &net.bv},
          {"log_std", nullptr, &net.log_std}};
}

}  // namespace

PolicyNet PolicyNet::initialize(std::uint64_t seed, obs::ObservationMode mode,
                                double log_std_init) {
  PolicyNet net;
  net.mode = mode;
  net.w1.resize(kHidden, kObsDim);
  net.b1 = Eigen::VectorXd::Zero(kHidden);
  net.w2.resize(kHidden, kHidden);
  net.b2 = Eigen::VectorXd::Zero(kHidden);
  net.wm.resize(kActDim, kHidden);
  net.bm = Eigen::VectorXd::Zero(kActDim);
  net.wv.resize(1, kHidden);
  net.bv = Eigen::VectorXd::Zero(1);
  net.log_std = Eigen::VectorXd::Constant(kActDim, log_std_init);

  Rng rng(derive_seed(seed, "policy_init"));
  auto fill = [&](Eigen::MatrixXd& w, double gain) {
    const double scale = gain / std::sqrt(static_cast<double>(w.cols()));
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = scale * rng.normal();
  };
  fill(net.w1, 1.0);
  fill(net.w2, 1.0);
  fill(net.wm, 0.01);  // small head keeps early actions near zero
  fill(net.wv, 1.0);
  return net;
}

PolicyNet::Forward PolicyNet::forward(const ObsVec& x) const {
  Forward f;
  f.h1 = (w1 * x + b1).array().tanh().matrix();
  f.h2 = (w2 * f.h1 + b2).array().tanh().matrix();
  f.mean = wm * f.h2 + bm;
  f.value = (wv * f.h2 + bv)(0);
  return f;
}

double gaussian_log_prob(const ActVec& pre_squash, const ActVec& mean,
                         const Eigen::VectorXd& log_std) {
  double lp = 0.0;
  for (int i = 0; i < kActDim; ++i) {
    const double sigma = std::exp(log_std(i));
    const double z = (pre_squash(i) - mean(i)) / sigma;
    lp += -0.5 * z * z - log_std(i) - kHalfLog2Pi;
  }
  return lp;
}

PolicyNet::Sample PolicyNet::sample(const ObsVec& x, Rng& rng,
                                    bool deterministic) const {
  const Forward f = forward(x);
  Sample s;
  if (deterministic) {
    s.pre_squash = f.mean;
  } else {
    for (int i = 0; i < kActDim; ++i)
      s.pre_squash(i) = f.mean(i) + std::exp(log_std(i)) * rng.normal();
  }
  for (int i = 0; i < kActDim; ++i) s.action(i) = tanh_clamped(s.pre_squash(i));
  s.log_prob = gaussian_log_prob(s.pre_squash, f.mean, log_std);
  return s;
}

env::StepAction PolicyNet::act(const ObsVec& x, Rng& rng, bool deterministic) const {
  for (int i = 0; i < kObsDim; ++i)
    if (!std::isfinite(x(i))) throw ContractError("non-finite observation");
  const Sample s = sample(x, rng, deterministic);
  env::StepAction a;
  a.u = s.action.head<3>();
  a.delta_tau = s.action.tail<3>();
  return a;
}

int PolicyNet::param_count() const {
  return static_cast<int>(w1.size() + b1.size() + w2.size() + b2.size() +
                          wm.size() + bm.size() + wv.size() + bv.size() +
                          log_std.size());
}

Eigen::VectorXd PolicyNet::flatten() const {
  Eigen::VectorXd theta(param_count());
  int k = 0;
  auto put_m = [&](const Eigen::MatrixXd& w) {
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) theta(k++) = w(r, c);
  };
  auto put_v = [&](const Eigen::VectorXd& v) {
    for (int i = 0; i < v.size(); ++i) theta(k++) = v(i);
  };
  put_m(w1); put_v(b1); put_m(w2); put_v(b2);
  put_m(wm); put_v(bm); put_m(wv); put_v(bv); put_v(log_std);
  return theta;
}

void PolicyNet::unflatten(const Eigen::VectorXd& theta) {
  if (theta.size() != param_count())
    throw ContractError("parameter vector size mismatch");
  int k = 0;
  auto get_m = [&](Eigen::MatrixXd& w) {
    for (int r = 0; r < w.rows(); ++r)
      for (int c = 0; c < w.cols(); ++c) w(r, c) = theta(k++);
  };
  auto get_v = [&](Eigen::VectorXd& v) {
    for (int i = 0; i < v.size(); ++i) v(i) = theta(k++);
  };
  get_m(w1); get_v(b1); get_m(w2); get_v(b2);
  get_m(wm); get_v(bm); get_m(wv); get_v(bv); get_v(log_std);
}

void PolicyNet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint: " + path);

  json layers = json::array();
  auto refs = layer_refs(const_cast<PolicyNet&>(*this));
  for (const auto& ref : refs) {
    if (ref.matrix)
      layers.push_back({ref.name, {ref.matrix->rows(), ref.matrix->cols()}});
    else
      layers.push_back({ref.name, {ref.vector->size()}});
  }
  json header = {{"schema", 1},
                 {"kind", "adqsim-policy"},
                 {"obs_mode", obs::to_string(mode)},
                 {"hidden", kHidden},
                 {"layers", layers},
                 {"param_count", param_count()},
                 {"config_hash", config_hash}};
  const std::string h = header.dump();

  out.write("ADQPOL01", 8);
  write_u32_le(out, static_cast<std::uint32_t>(h.size()));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  const Eigen::VectorXd theta = flatten();
  for (int i = 0; i < theta.size(); ++i)
    write_f32_le(out, static_cast<float>(theta(i)));
  if (!out) throw ConfigError("short write on checkpoint: " + path);
}

PolicyNet PolicyNet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "ADQPOL01")
    throw ConfigError("not a policy checkpoint: " + path);
  const std::uint32_t hlen = read_u32_le(in);
  std::string h(hlen, '\0');
  in.read(h.data(), hlen);
  json header = json::parse(h);
  if (header.value("kind", "") != "adqsim-policy")
    throw ConfigError("unexpected checkpoint kind in " + path);

  PolicyNet net = PolicyNet::initialize(0, obs::mode_from_string(
                                               header.at("obs_mode")));
  net.config_hash = header.value("config_hash", std::uint64_t{0});
  const int count = header.at("param_count").get<int>();
  if (count != net.param_count())
    throw ConfigError("checkpoint parameter count mismatch in " + path);
  Eigen::VectorXd theta(count);
  for (int i = 0; i < count; ++i) {
    theta(i) = static_cast<double>(read_f32_le(in));
    if (!in) throw ConfigError("truncated checkpoint: " + path);
  }
  net.unflatten(theta);
  return net;
}

LossBreakdown ppo_loss(const PolicyNet& net, const Batch& batch,
                       const TrainHyper& hyper, Gradients* grads) {
  const int n = static_cast<int>(batch.observations.size());
  if (n == 0) throw ContractError("empty PPO batch");

  PolicyNet* g = nullptr;
  PolicyNet grad_store;
  if (grads) {
    grad_store = net;  // same shapes
    grad_store.w1.setZero(); grad_store.b1.setZero();
    grad_store.w2.setZero(); grad_store.b2.setZero();
    grad_store.wm.setZero(); grad_store.bm.setZero();
    grad_store.wv.setZero(); grad_store.bv.setZero();
    grad_store.log_std.setZero();
    g = &grad_store;
  }

  Eigen::VectorXd sigma2(kActDim);
  for (int i = 0; i < kActDim; ++i) sigma2(i) = std::exp(2.0 * net.log_std(i));

  double policy_loss = 0.0, value_loss = 0.0;
  const double inv_n = 1.0 / n;
  for (int s = 0; s < n; ++s) {
    const ObsVec& x = batch.observations[s];
    const auto f = net.forward(x);
    const ActVec& u = batch.pre_squash[s];
    const double adv = batch.advantages[s];
    const double ret = batch.returns[s];

    const double logp = gaussian_log_prob(u, f.mean, net.log_std);
    const double ratio = std::exp(logp - batch.log_prob_old[s]);
    const double clipped =
        std::clamp(ratio, 1.0 - hyper.clip_ratio, 1.0 + hyper.clip_ratio);
    const double s1 = ratio * adv;
    const double s2 = clipped * adv;
    policy_loss += -std::min(s1, s2) * inv_n;

    const double verr = f.value - ret;
    value_loss += verr * verr * inv_n;

    if (g) {
      // d(-min)/dratio is -adv when the unclipped branch is active, else 0
      const double dl_dlogp =
          (s1 <= s2) ? -adv * ratio * inv_n : 0.0;
      ActVec dmean;
      for (int i = 0; i < kActDim; ++i) {
        const double diff = u(i) - f.mean(i);
        dmean(i) = dl_dlogp * diff / sigma2(i);
        g->log_std(i) += dl_dlogp * (diff * diff / sigma2(i) - 1.0);
      }
      const double dvalue = hyper.value_coef * 2.0 * verr * inv_n;

      g->wm += dmean * f.h2.transpose();
      g->bm += dmean;
      g->wv += dvalue * f.h2.transpose();
      g->bv(0) += dvalue;

      Eigen::VectorXd dh2 =
          net.wm.transpose() * dmean + net.wv.transpose() * dvalue;
      Eigen::VectorXd da2 =
          dh2.array() * (1.0 - f.h2.array().square());
      g->w2 += da2 * f.h1.transpose();
      g->b2 += da2;
      Eigen::VectorXd dh1 = net.w2.transpose() * da2;
      Eigen::VectorXd da1 = dh1.array() * (1.0 - f.h1.array().square());
      g->w1 += da1 * x.transpose();
      g->b1 += da1;
    }
  }

  // state-independent Gaussian entropy of the pre-squash distribution
  double entropy = 0.0;
  for (int i = 0; i < kActDim; ++i)
    entropy += net.log_std(i) + kHalfLog2Pi + 0.5;

  if (g) {
    for (int i = 0; i < kActDim; ++i) g->log_std(i) += -hyper.entropy_coef;
    grads->flat = g->flatten();
  }

  LossBreakdown out;
  out.policy = policy_loss;
  out.value = value_loss;
  out.entropy = entropy;
  out.total = policy_loss + hyper.value_coef * value_loss -
              hyper.entropy_coef * entropy;
  return out;
}

ObsVec saliency(const PolicyNet& net, const ObsVec& x) {
  const auto f = net.forward(x);
  ActVec squashed;
  for (int i = 0; i < kActDim; ++i) squashed(i) = std::tanh(f.mean(i));
  const double norm = squashed.norm();
  ObsVec attribution = ObsVec::Zero();
  if (norm < 1e-12) return attribution;

  ActVec dmean;
  for (int i = 0; i < kActDim; ++i)
    dmean(i) = squashed(i) * (1.0 - squashed(i) * squashed(i)) / norm;
  Eigen::VectorXd dh2 = net.wm.transpose() * dmean;
  Eigen::VectorXd da2 = dh2.array() * (1.0 - f.h2.array().square());
  Eigen::VectorXd dh1 = net.w2.transpose() * da2;
  Eigen::VectorXd da1 = dh1.array() * (1.0 - f.h1.array().square());
  const Eigen::VectorXd dx = net.w1.transpose() * da1;
  for (int i = 0; i < kObsDim; ++i) attribution(i) = x(i) * dx(i);
  return attribution;
}

Eigen::Matrix<double, obs::kHistory, 1> saliency_by_history(const PolicyNet& net,
                                                            const ObsVec& x) {
  const ObsVec attr = saliency(net, x);
  Eigen::Matrix<double, obs::kHistory, 1> grouped;
  for (int h = 0; h < obs::kHistory; ++h)
    grouped(h) = attr.segment<obs::kObsDim>(h * obs::kObsDim).sum();
  return grouped;
}

BaselineKind baseline_from_string(const std::string& name) {
  if (name == "random") return BaselineKind::kRandom;
  if (name == "opposite") return BaselineKind::kOpposite;
  throw ConfigError("unknown baseline: " + name);
}

namespace {

class RandomBaseline : public env::PolicyHandle {
 public:
  env::StepAction act(const obs::FlatObs&, const env::StepContext& ctx,
                      Rng& rng) override {
    if (ctx.step_index == 0) direction_ = rng.unit_vector();
    env::StepAction a;
    a.u = direction_;
    return a;
  }

 private:
  Eigen::Vector3d direction_{0, 0, 0};
};

class OppositeBaseline : public env::PolicyHandle {
 public:
  env::StepAction act(const obs::FlatObs&, const env::StepContext& ctx,
                      Rng&) override {
    env::StepAction a;
    const Eigen::Vector3d gap = ctx.pull - ctx.pin;
    if (gap.norm() > 1e-12) a.u = gap.normalized();
    return a;
  }
};

}  // namespace

std::unique_ptr<env::PolicyHandle> scripted_baseline(BaselineKind kind) {
  if (kind == BaselineKind::kRandom) return std::make_unique<RandomBaseline>();
  return std::make_unique<OppositeBaseline>();
}

env::StepAction NetPolicy::act(const obs::FlatObs& observation,
                               const env::StepContext&, Rng& rng) {
  return net_.act(observation, rng, deterministic_);
}

namespace {

// Per-worker rollout slice plus the episode statistics completed inside it.
struct RolloutBuffer {
  std::vector<ObsVec> obs;
  std::vector<ActVec> pre;
  std::vector<double> logp;
  std::vector<double> reward;
  std::vector<double> value;
  std::vector<std::uint8_t> done;
  double bootstrap_value = 0.0;
  std::vector<double> episode_returns;
  std::vector<double> episode_reductions;
  std::vector<std::uint8_t> episode_success;
};

struct Worker {
  std::unique_ptr<env::Environment> environment;
  Rng actor_rng{0};
  obs::FlatObs observation;
  bool needs_reset = true;
  double episode_return = 0.0;
  std::uint64_t episode_counter = 0;
  std::uint64_t seed_base = 0;
};

void collect(Worker& w, const PolicyNet& net, int steps, RolloutBuffer& buf) {
  buf = RolloutBuffer{};
  buf.obs.reserve(static_cast<size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    if (w.needs_reset) {
      w.observation = w.environment->reset(
          derive_seed(w.seed_base, "episode", w.episode_counter++));
      w.episode_return = 0.0;
      w.needs_reset = false;
    }
    const auto s = net.sample(w.observation, w.actor_rng, false);
    env::StepAction action;
    action.u = s.action.head<3>();
    action.delta_tau = s.action.tail<3>();

    buf.obs.push_back(w.observation);
    buf.pre.push_back(s.pre_squash);
    buf.logp.push_back(s.log_prob);
    buf.value.push_back(net.value(w.observation));

    const auto out = w.environment->step(action);
    buf.reward.push_back(out.reward);
    buf.done.push_back(out.done ? 1 : 0);
    w.episode_return += out.reward;
    w.observation = out.observation;

    if (out.done) {
      const auto& rec = w.environment->record();
      buf.episode_returns.push_back(w.episode_return);
      buf.episode_reductions.push_back(rec.writhe_reduction());
      buf.episode_success.push_back(rec.success ? 1 : 0);
      w.needs_reset = true;
    }
  }
  buf.bootstrap_value = w.needs_reset ? 0.0 : net.value(w.observation);
}

void compute_gae(RolloutBuffer& buf, double gamma, double lambda,
                 std::vector<double>& adv, std::vector<double>& ret) {
  const int t_max = static_cast<int>(buf.reward.size());
  adv.resize(static_cast<size_t>(t_max));
  ret.resize(static_cast<size_t>(t_max));
  double running = 0.0;
  for (int t = t_max - 1; t >= 0; --t) {
    const double not_done = buf.done[t] ? 0.0 : 1.0;
    const double next_value =
        t + 1 < t_max ? (buf.done[t] ? 0.0 : buf.value[t + 1])
                      : (buf.done[t] ? 0.0 : buf.bootstrap_value);
    const double delta =
        buf.reward[t] + gamma * next_value - buf.value[t];
    running = delta + gamma * lambda * not_done * running;
    adv[t] = running;
    ret[t] = adv[t] + buf.value[t];
  }
}

struct Adam {
  Eigen::VectorXd m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;

  explicit Adam(int n) : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad, double lr) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (int i = 0; i < theta.size(); ++i)
      theta(i) -= lr * (m(i) / bc1) / (std::sqrt(v(i) / bc2) + eps);
  }
};

}  // namespace

TrainResult train(const env::SimConfig& config, const TrainHyper& hyper,
                  std::uint64_t seed,
                  const std::function<void(const IterationReport&)>& on_iteration) {
  config.validate();
  if (hyper.workers < 1) throw ConfigError("workers must be >= 1");
  if (hyper.steps_per_iteration < hyper.workers)
    throw ConfigError("steps_per_iteration must be >= workers");

  TrainResult result;
  result.net = PolicyNet::initialize(derive_seed(seed, "init"), config.obs_mode,
                                     hyper.log_std_init);
  result.net.config_hash = env::config_hash(config);

  const int n_workers = hyper.workers;
  std::vector<Worker> workers(static_cast<size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) {
    workers[w].environment = std::make_unique<env::Environment>(config);
    workers[w].actor_rng = Rng(derive_seed(seed, "actor", w));
    workers[w].seed_base = derive_seed(seed, "rollout", w);
  }

  Rng shuffle_rng(derive_seed(seed, "update"));
  Adam adam(result.net.param_count());
  long total_steps = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (int iter = 0; iter < hyper.iterations; ++iter) {
    const PolicyNet snapshot = result.net;  // last good checkpoint for aborts

    // parallel rollouts, merged in worker order for determinism
    std::vector<RolloutBuffer> buffers(static_cast<size_t>(n_workers));
    std::vector<int> quota(static_cast<size_t>(n_workers),
                           hyper.steps_per_iteration / n_workers);
    for (int w = 0; w < hyper.steps_per_iteration % n_workers; ++w) quota[w] += 1;

    std::vector<std::exception_ptr> errors(static_cast<size_t>(n_workers));
    {
      std::vector<std::thread> pool;
      pool.reserve(static_cast<size_t>(n_workers));
      for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w]() {
          try {
            collect(workers[w], result.net, quota[w], buffers[w]);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);

    Batch batch;
    std::vector<double> episode_returns, episode_reductions;
    int episode_successes = 0, episodes = 0;
    for (int w = 0; w < n_workers; ++w) {
      auto& buf = buffers[w];
      std::vector<double> adv, ret;
      compute_gae(buf, hyper.gamma, hyper.gae_lambda, adv, ret);
      for (size_t t = 0; t < buf.obs.size(); ++t) {
        batch.observations.push_back(buf.obs[t]);
        batch.pre_squash.push_back(buf.pre[t]);
        batch.log_prob_old.push_back(buf.logp[t]);
        batch.advantages.push_back(adv[t]);
        batch.returns.push_back(ret[t]);
      }
      episode_returns.insert(episode_returns.end(), buf.episode_returns.begin(),
                             buf.episode_returns.end());
      episode_reductions.insert(episode_reductions.end(),
                                buf.episode_reductions.begin(),
                                buf.episode_reductions.end());
      for (auto s : buf.episode_success) episode_successes += s;
      episodes += static_cast<int>(buf.episode_success.size());
    }
    total_steps += static_cast<long>(batch.observations.size());

    // per-batch advantage normalization
    const int n = static_cast<int>(batch.advantages.size());
    double a_mean = 0.0;
    for (double a : batch.advantages) a_mean += a;
    a_mean /= n;
    double a_var = 0.0;
    for (double a : batch.advantages) a_var += (a - a_mean) * (a - a_mean);
    const double a_std = std::sqrt(a_var / n) + 1e-8;
    for (double& a : batch.advantages) a = (a - a_mean) / a_std;

    // clipped-surrogate updates
    Eigen::VectorXd theta = result.net.flatten();
    double loss_policy = 0.0, loss_value = 0.0, loss_entropy = 0.0;
    int minibatches = 0;
    bool aborted = false;
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < hyper.epochs && !aborted; ++epoch) {
      for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[shuffle_rng.uniform_int(0, i)]);
      for (int start = 0; start < n && !aborted; start += hyper.minibatch) {
        const int stop = std::min(start + hyper.minibatch, n);
        Batch mb;
        for (int i = start; i < stop; ++i) {
          const int j = order[i];
          mb.observations.push_back(batch.observations[j]);
          mb.pre_squash.push_back(batch.pre_squash[j]);
          mb.log_prob_old.push_back(batch.log_prob_old[j]);
          mb.advantages.push_back(batch.advantages[j]);
          mb.returns.push_back(batch.returns[j]);
        }
        Gradients grads;
        const LossBreakdown loss = ppo_loss(result.net, mb, hyper, &grads);
        if (!std::isfinite(loss.total) || !grads.flat.allFinite()) {
          aborted = true;
          break;
        }
        const double gnorm = grads.flat.norm();
        if (hyper.max_grad_norm > 0.0 && gnorm > hyper.max_grad_norm)
          grads.flat *= hyper.max_grad_norm / gnorm;
        adam.step(theta, grads.flat, hyper.learning_rate);
        result.net.unflatten(theta);
        for (int i = 0; i < kActDim; ++i)
          result.net.log_std(i) =
              std::clamp(result.net.log_std(i), kLogStdMin, kLogStdMax);
        theta = result.net.flatten();
        loss_policy += loss.policy;
        loss_value += loss.value;
        loss_entropy += loss.entropy;
        ++minibatches;
      }
    }
    if (aborted) {
      result.net = snapshot;  // keep the last good parameters
      result.report.aborted_nan = true;
      break;
    }

    IterationReport rep;
    rep.iteration = iter;
    rep.total_env_steps = total_steps;
    rep.episodes = episodes;
    rep.mean_return = episode_returns.empty()
                          ? 0.0
                          : std::accumulate(episode_returns.begin(),
                                            episode_returns.end(), 0.0) /
                                episode_returns.size();
    rep.success_rate = episodes > 0 ? static_cast<double>(episode_successes) /
                                          episodes
                                    : 0.0;
    rep.mean_writhe_reduction =
        episode_reductions.empty()
            ? 0.0
            : std::accumulate(episode_reductions.begin(),
                              episode_reductions.end(), 0.0) /
                  episode_reductions.size();
    rep.policy_loss = minibatches ? loss_policy / minibatches : 0.0;
    rep.value_loss = minibatches ? loss_value / minibatches : 0.0;
    rep.entropy = minibatches ? loss_entropy / minibatches : 0.0;
    rep.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
    result.report.iterations.push_back(rep);
    if (on_iteration) on_iteration(rep);
  }

  return result;
}

void write_train_report_csv(const TrainReport& report, std::ostream& out) {
  out << "iteration,total_env_steps,episodes,mean_return,success_rate,"
         "mean_writhe_reduction,policy_loss,value_loss,entropy,wall_seconds\n";
  for (const auto& r : report.iterations) {
    out << r.iteration << ',' << r.total_env_steps << ',' << r.episodes << ','
        << r.mean_return << ',' << r.success_rate << ','
        << r.mean_writhe_reduction << ',' << r.policy_loss << ',' << r.value_loss
        << ',' << r.entropy << ',' << r.wall_seconds << "\n";
  }
}

}  // namespace adq::policy
