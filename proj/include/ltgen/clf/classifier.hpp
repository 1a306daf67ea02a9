// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ltgen/clf/metrics.hpp"
#include "ltgen/core/matrix.hpp"
#include "ltgen/core/optim.hpp"
#include "ltgen/core/rng.hpp"
#include "ltgen/core/tape.hpp"
#include "ltgen/rlcas/agents.hpp"
#include "ltgen/rlcas/batch.hpp"
#include "ltgen/synth/synthesizer.hpp"

namespace ltgen::clf {

/// 256 → hidden1 → hidden2 → C fully connected network with ReLU, plus the
/// train-split class prior used by the balanced softmax.
struct ClassifierModel {
  ParameterSet params;  ///< w1, b1, w2, b2, w3, b3
  std::vector<double> prior;

  /// He-initialised weights, zero biases. ContractError if the prior is invalid.
  static ClassifierModel create(std::vector<double> prior, std::size_t hidden1, std::size_t hidden2,
                                std::uint64_t seed);

  std::size_t num_classes() const noexcept { return prior.size(); }
  Matrix logits(const Matrix& x) const;
  /// Argmax of the raw logits, lowest class on ties.
  std::vector<std::size_t> predict(const Matrix& x) const;
};

/// Logits of `x` on the tape; `bound` comes from bind_parameters(model.params).
Var classifier_logits(Tape& tape, std::span<const Var> bound, Var x);

/// Normalised class frequencies. ContractError when a class has no samples.
std::vector<double> class_prior(std::span<const std::size_t> counts);

/// Mean over rows of the cross-entropy on logits + log π.
/// ContractError if any prior entry is not positive.
double balanced_softmax_loss(const Matrix& logits, std::span<const std::size_t> labels,
                             std::span<const double> prior);
Var balanced_softmax_loss(Tape& tape, Var logits, std::vector<std::size_t> labels,
                          std::span<const double> prior);

enum class Strategy { kBaseline, kFixedMix, kResample, kRlCas };

/// "baseline", "fixed-mix", "class-balanced-resample", "rl-cas"; ConfigError otherwise.
Strategy parse_strategy(std::string_view name);
std::string_view strategy_name(Strategy strategy) noexcept;

/// Validation metric scored by each sampler episode.
enum class EpisodeMetric { kMacroF1, kAccuracy };

struct ClassifierConfig {
  std::size_t hidden1 = 128;
  std::size_t hidden2 = 64;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t epochs = 30;           ///< ignored by rl-cas, which runs agent_epochs
  std::size_t real_per_batch = 32;   ///< R_real
  bool class_balanced_real = false;  ///< real rows drawn class-uniformly instead of empirically
  bool balanced_softmax = true;
  int fixed_mix = 2;
  EpisodeMetric episode_metric = EpisodeMetric::kMacroF1;
  ShotThresholds shots;
  AllMode all_mode = AllMode::kSample;
  std::uint64_t seed = 0;
};

struct TrainData {
  rlcas::LabeledImages train;
  rlcas::LabeledImages val;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  MetricsReport val;
  rlcas::SamplerState state;
  std::string sampler_log;  ///< rl-cas epoch record, empty otherwise
};

struct TrainResult {
  ClassifierModel model;
  std::vector<EpochRecord> history;
};

/// Synthetic images per class that lift every class's expected share of a
/// batch to the head class: s_c = round(R·(n_head − n_c)/N).
rlcas::SamplerState resample_state(std::span<const std::size_t> train_counts, std::size_t real_per_batch);

/// One pass of ⌈N/R⌉ batches with composition `state`; returns the mean loss.
/// NumericError if a loss turns non-finite.
double train_epoch(ClassifierModel& model, Adam& optimizer, const rlcas::LabeledImages& real,
                   const synth::SynthPool& pool, std::span<const int> state, const ClassifierConfig& config,
                   RngStream& rng);

/// Trains under `strategy`. Every strategy except baseline needs a pool with
/// one matrix per class. `sampler` configures the rl-cas strategy only.
TrainResult train_classifier(const TrainData& data, Strategy strategy, const ClassifierConfig& config,
                             const synth::SynthPool& pool, const rlcas::RlCasConfig& sampler = {});

MetricsReport evaluate(const ClassifierModel& model, const rlcas::LabeledImages& split,
                       std::span<const ShotGroup> groups, AllMode all_mode = AllMode::kSample);

/// "LTCM" binary with a CRC32 footer.
std::vector<std::uint8_t> encode_model(const ClassifierModel& model);
ClassifierModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const ClassifierModel& model, const std::filesystem::path& path);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace ltgen::clf
