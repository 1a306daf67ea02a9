// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ltgen/core/matrix.hpp"
#include "ltgen/core/optim.hpp"
#include "ltgen/core/rng.hpp"
#include "ltgen/rlcas/batch.hpp"

namespace ltgen::rlcas {

/// Step sizes selectable by every agent, in logit order.
inline constexpr std::array<int, 3> kActionSteps{-2, 0, 2};

/// One stateless 3-logit softmax agent per class; row i holds θ_i.
struct AgentPolicy {
  Matrix theta;

  static AgentPolicy uniform(std::size_t num_classes) { return {Matrix(num_classes, 3)}; }
  std::size_t num_classes() const noexcept { return theta.rows(); }
  std::array<double, 3> probabilities(std::size_t agent) const;
};

struct ActionDraw {
  std::vector<std::size_t> choice;  ///< index into kActionSteps
  std::vector<int> steps;
  std::vector<double> log_prob;     ///< per-class log p(a_i)
  double joint_log_prob = 0.0;      ///< Σ_i log p(a_i)
};

ActionDraw propose_actions(const AgentPolicy& policy, RngStream& rng);

/// s_i' = clamp(s_i + a_i, 0, s_max).
SamplerState apply_actions(const SamplerState& state, std::span<const int> steps, int s_max);

/// (ε + 0.04)³; ContractError unless ε ∈ [0,1].
double reward(double metric);

/// B^t = (1−γ)·B^{t−1} + γ·mean(R), with B^0 = 0 so that B^1 = γ·mean(R).
class BaselineTracker {
 public:
  explicit BaselineTracker(double gamma = 0.99);

  double update(std::span<const double> rewards);
  double value() const noexcept { return value_; }
  double gamma() const noexcept { return gamma_; }
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  double gamma_;
  double value_ = 0.0;
  std::size_t epoch_ = 0;
};

struct EpisodeRecord {
  std::size_t index = 0;  ///< 1-based j
  ActionDraw actions;
  SamplerState state;
  double metric = 0.0;
  double reward = 0.0;
  bool diverged = false;
};

/// (1/K)·Σ_j (R_j − B)·(one_hot(a_i^j) − softmax(θ_i)), the ascent direction of
/// the REINFORCE objective for every agent at once (C×3).
Matrix reinforce_direction(const AgentPolicy& policy, std::span<const EpisodeRecord> episodes,
                           double baseline);

/// θ ← θ + η·direction: the literal policy-gradient step.
void reinforce_update(AgentPolicy& policy, std::span<const EpisodeRecord> episodes, double baseline,
                      double lr);

enum class AgentOptimizer { kAdam, kSgd };

struct RlCasConfig {
  std::size_t episodes = 3;      ///< K
  double gamma = 0.99;
  double lr = 1e-3;              ///< η
  int s_max = 8;
  int init_state = 2;
  std::size_t agent_epochs = 30;
  AgentOptimizer optimizer = AgentOptimizer::kAdam;
  std::size_t threads = 1;
  std::uint64_t seed = 0;

  /// ConfigError when out of range (s_max must be even and ≥ init_state).
  void validate() const;
};

/// Runs one episode: trains from the shared state with composition `state`
/// and returns the validation metric ε ∈ [0,1]. A NumericError marks the
/// episode as diverged (ε = 0). Called concurrently when threads > 1.
using EpisodeRunner = std::function<double(std::size_t j, const SamplerState& state)>;

struct EpochOutcome {
  std::size_t epoch = 0;  ///< 1-based t
  SamplerState base_state;
  std::vector<EpisodeRecord> episodes;
  std::size_t winner = 0;  ///< 0-based position in `episodes`
  double baseline_before = 0.0;
  double baseline_after = 0.0;
  std::vector<std::array<double, 3>> probabilities_before;

  /// One JSON object, no trailing newline.
  std::string to_json_line() const;
};

/// Agents, baseline and carried state across epochs.
class RlCasController {
 public:
  RlCasController(RlCasConfig config, std::size_t num_classes);

  /// K action draws → K states → runner per episode → winner → policy-gradient update
  /// using B^{t−1} → baseline update.
  EpochOutcome run_epoch(const EpisodeRunner& runner);

  const AgentPolicy& policy() const noexcept { return policy_; }
  const SamplerState& state() const noexcept { return state_; }
  const BaselineTracker& baseline() const noexcept { return baseline_; }
  const RlCasConfig& config() const noexcept { return config_; }
  /// Mean over agents of p(+2).
  double mean_increase_probability() const;

 private:
  RlCasConfig config_;
  AgentPolicy policy_;
  BaselineTracker baseline_;
  SamplerState state_;
  Adam adam_;
  std::size_t epoch_ = 0;
};

}  // namespace ltgen::rlcas
