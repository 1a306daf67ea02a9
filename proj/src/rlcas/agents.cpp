// SPDX-License-Identifier: Apache-2.0

#include "ltgen/rlcas/agents.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "json.hpp"

#include "ltgen/core/error.hpp"

namespace ltgen::rlcas {
namespace {

constexpr std::uint64_t kAgentStream = 0xA6E;

}  // namespace

std::array<double, 3> AgentPolicy::probabilities(std::size_t agent) const {
  const auto row = theta.row(agent);
  const double top = std::max({row[0], row[1], row[2]});
  std::array<double, 3> p{};
  double z = 0.0;
  for (std::size_t k = 0; k < 3; ++k) z += p[k] = std::exp(row[k] - top);
  for (double& v : p) v /= z;
  return p;
}

ActionDraw propose_actions(const AgentPolicy& policy, RngStream& rng) {
  ActionDraw d;
  const std::size_t c = policy.num_classes();
  d.choice.resize(c);
  d.steps.resize(c);
  d.log_prob.resize(c);
  for (std::size_t i = 0; i < c; ++i) {
    const auto p = policy.probabilities(i);
    const double u = rng.uniform();
    std::size_t k = 0;
    double acc = p[0];
    while (k < 2 && u >= acc) acc += p[++k];
    d.choice[i] = k;
    d.steps[i] = kActionSteps[k];
    d.log_prob[i] = std::log(p[k]);
    d.joint_log_prob += d.log_prob[i];
  }
  return d;
}

SamplerState apply_actions(const SamplerState& state, std::span<const int> steps, int s_max) {
  if (state.size() != steps.size()) throw ShapeError("one action per class required");
  SamplerState next(state.size());
  for (std::size_t i = 0; i < state.size(); ++i) next[i] = std::clamp(state[i] + steps[i], 0, s_max);
  return next;
}

double reward(double metric) {
  if (!(metric >= 0.0 && metric <= 1.0)) throw ContractError("validation metric outside [0,1]");
  const double x = metric + 0.04;
  return x * x * x;
}

BaselineTracker::BaselineTracker(double gamma) : gamma_(gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("baseline gamma must lie in (0,1)");
}

double BaselineTracker::update(std::span<const double> rewards) {
  if (rewards.empty()) throw ContractError("baseline update needs at least one reward");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  value_ = epoch_ == 0 ? gamma_ * mean : (1.0 - gamma_) * value_ + gamma_ * mean;
  ++epoch_;
  return value_;
}

Matrix reinforce_direction(const AgentPolicy& policy, std::span<const EpisodeRecord> episodes,
                           double baseline) {
  if (episodes.empty()) throw ContractError("REINFORCE needs at least one episode");
  const std::size_t c = policy.num_classes();
  Matrix dir(c, 3);
  const double inv_k = 1.0 / static_cast<double>(episodes.size());
  for (std::size_t i = 0; i < c; ++i) {
    const auto p = policy.probabilities(i);
    for (const auto& ep : episodes) {
      if (ep.actions.choice.size() != c) throw ShapeError("episode action count differs from agents");
      const double adv = ep.reward - baseline;
      for (std::size_t k = 0; k < 3; ++k) {
        const double grad_log = (ep.actions.choice[i] == k ? 1.0 : 0.0) - p[k];
        dir(i, k) += inv_k * adv * grad_log;
      }
    }
  }
  return dir;
}

void reinforce_update(AgentPolicy& policy, std::span<const EpisodeRecord> episodes, double baseline,
                      double lr) {
  const Matrix dir = reinforce_direction(policy, episodes, baseline);
  for (std::size_t i = 0; i < dir.size(); ++i) policy.theta[i] += lr * dir[i];
}

void RlCasConfig::validate() const {
  if (episodes == 0) throw ConfigError("rlcas.episodes must be at least 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("rlcas.gamma must lie in (0,1)");
  if (!(lr > 0.0)) throw ConfigError("rlcas.lr must be positive");
  if (s_max <= 0 || s_max % 2 != 0) throw ConfigError("rlcas.s_max must be a positive even number");
  if (init_state < 0 || init_state > s_max || init_state % 2 != 0) {
    throw ConfigError("rlcas.init_state must be even and within [0, s_max]");
  }
  if (threads == 0) throw ConfigError("rlcas.threads must be at least 1");
}

RlCasController::RlCasController(RlCasConfig config, std::size_t num_classes)
    : config_(config),
      policy_(AgentPolicy::uniform(num_classes)),
      baseline_(config.gamma),
      state_(num_classes, config.init_state) {
  config_.validate();
  if (num_classes == 0) throw ConfigError("no classes for the sampler");
  adam_ = Adam({.lr = config_.lr}, ParameterSet{{"theta", policy_.theta}});
}

double RlCasController::mean_increase_probability() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < policy_.num_classes(); ++i) acc += policy_.probabilities(i)[2];
  return acc / static_cast<double>(policy_.num_classes());
}

EpochOutcome RlCasController::run_epoch(const EpisodeRunner& runner) {
  ++epoch_;
  EpochOutcome out;
  out.epoch = epoch_;
  out.base_state = state_;
  out.baseline_before = baseline_.value();
  for (std::size_t i = 0; i < policy_.num_classes(); ++i) {
    out.probabilities_before.push_back(policy_.probabilities(i));
  }

  const std::size_t k = config_.episodes;
  const RngStream epoch_rng = RngStream(config_.seed, kAgentStream).substream(epoch_);
  out.episodes.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    RngStream rng = epoch_rng.substream(j);
    auto& ep = out.episodes[j];
    ep.index = j + 1;
    ep.actions = propose_actions(policy_, rng);
    ep.state = apply_actions(state_, ep.actions.steps, config_.s_max);
  }

  std::vector<double> metrics(k, 0.0);
  std::vector<char> diverged(k, 0);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto run_one = [&](std::size_t j) {
    try {
      const double m = runner(j + 1, out.episodes[j].state);
      if (std::isfinite(m)) {
        metrics[j] = m;
      } else {
        diverged[j] = 1;
      }
    } catch (const NumericError&) {
      diverged[j] = 1;
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  const std::size_t workers = std::min(config_.threads, k);
  if (workers <= 1) {
    for (std::size_t j = 0; j < k; ++j) run_one(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < k; j = next++) run_one(j);
      });
    }
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<double> rewards(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto& ep = out.episodes[j];
    ep.diverged = diverged[j] != 0;
    ep.metric = ep.diverged ? 0.0 : metrics[j];
    ep.reward = rewards[j] = reward(ep.metric);
    if (ep.metric > out.episodes[out.winner].metric) out.winner = j;
  }

  const Matrix dir = reinforce_direction(policy_, out.episodes, out.baseline_before);
  if (config_.optimizer == AgentOptimizer::kSgd) {
    for (std::size_t i = 0; i < dir.size(); ++i) policy_.theta[i] += config_.lr * dir[i];
  } else {
    Matrix descent = dir;
    for (double& v : descent.data()) v = -v;
    Matrix theta = policy_.theta;
    adam_.step(std::span<Matrix>(&theta, 1), std::span<const Matrix>(&descent, 1));
    policy_.theta = std::move(theta);
  }
  out.baseline_after = baseline_.update(rewards);
  state_ = out.episodes[out.winner].state;
  return out;
}

std::string EpochOutcome::to_json_line() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["base_state"] = base_state;
  nlohmann::json probs = nlohmann::json::array();
  for (const auto& p : probabilities_before) probs.push_back(p);
  j["probabilities"] = probs;
  nlohmann::json eps = nlohmann::json::array();
  for (const auto& ep : episodes) {
    eps.push_back({{"j", ep.index},
                   {"actions", ep.actions.steps},
                   {"log_prob", ep.actions.log_prob},
                   {"state", ep.state},
                   {"metric", ep.metric},
                   {"reward", ep.reward},
                   {"diverged", ep.diverged}});
  }
  j["episodes"] = eps;
  j["baseline_prev"] = baseline_before;
  j["baseline"] = baseline_after;
  j["winner"] = episodes.empty() ? 0 : episodes[winner].index;
  return j.dump();
}

}  // namespace ltgen::rlcas
