// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ltgen/core/matrix.hpp"
#include "ltgen/core/rng.hpp"
#include "ltgen/core/tape.hpp"
#include "ltgen/data/shapes.hpp"
#include "ltgen/synth/denoiser.hpp"
#include "ltgen/synth/schedule.hpp"

namespace ltgen::synth {

struct SynthConfig {
  std::size_t steps = 200;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::size_t embed_dim = 32;
  std::size_t hidden1 = 128;
  std::size_t hidden2 = 128;
  double sketch_weight = 0.1;  ///< λ
  double lr = 1e-4;
  double weight_decay = 0.01;
  std::size_t epochs = 40;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  /// Clamp the reverse chain's x̂_0 estimate to [0,1] before the posterior step.
  bool clip_denoised = true;
};

/// Canonical key=value text of the config; its FNV-1a hash is stamped into checkpoints.
std::string describe(const SynthConfig& config);
std::uint64_t config_hash(const SynthConfig& config);

/// One training batch: clean images, per-row timestep, injected noise, labels, sketches.
struct SynthBatch {
  Matrix z0;
  std::vector<std::size_t> t;
  Matrix noise;
  std::vector<std::size_t> labels;
  Matrix sketch;
};

using NoisePredictor = std::function<Matrix(const Matrix& z_t, std::span<const std::size_t> t,
                                            std::span<const std::size_t> labels)>;

/// Mean squared error between ε and ε̂(z_t, t, c), averaged over pixels and rows.
double ldm_loss(const NoisePredictor& predictor, const Matrix& z0, std::span<const std::size_t> t,
                const Matrix& noise, std::span<const std::size_t> labels, const NoiseSchedule& schedule);

/// Row-wise √ᾱ_t · mean|Ŝ − S|, averaged over rows.
double sketch_loss(const Matrix& predicted, const Matrix& target, std::span<const std::size_t> t,
                   const NoiseSchedule& schedule);

/// L_LDM + λ·L_s. With λ = 0 the sketch term is dropped rather than multiplied.
double total_loss(double ldm, double sketch, double lambda);

struct LossVars {
  Var ldm;
  Var sketch;  ///< only valid when lambda > 0
  Var total;
};

/// Records the combined objective for `batch` on `tape`.
LossVars record_loss(Tape& tape, std::span<const Var> bound, const DenoiserModel& model,
                     const SynthBatch& batch, const NoiseSchedule& schedule, double lambda);

struct Checkpoint {
  SynthConfig config;
  DenoiserModel model;
  NoiseSchedule schedule;
  std::size_t epochs_trained = 0;
  std::vector<double> loss_history;  ///< mean total loss per epoch
};

/// Trains on the train split of `dataset`. ContractError if a class has no
/// training images; NumericError if the loss becomes non-finite.
Checkpoint train_synthesizer(const data::Dataset& dataset, const SynthConfig& config);

/// Ancestral reverse chain from pure noise, conditioned on (t, c). Returns an
/// n×256 matrix clipped to [0,1]. `observer`, if set, sees every intermediate state.
Matrix sample(const Checkpoint& checkpoint, std::size_t label, std::size_t n, std::uint64_t seed,
              const std::function<void(std::size_t t, const Matrix& x)>& observer = {});

/// The reverse chain itself, for any noise predictor over 256-pixel images.
Matrix reverse_chain(const NoisePredictor& predictor, const NoiseSchedule& schedule,
                     std::size_t label, std::size_t n, RngStream& rng, bool clip_denoised,
                     const std::function<void(std::size_t t, const Matrix& x)>& observer = {});

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Per-class synthetic images drawn once from a trained checkpoint.
struct SynthPool {
  std::vector<Matrix> images;  ///< images[c] is n_c×256
  std::uint64_t checkpoint_epoch = 0;
  std::uint64_t seed = 0;

  std::size_t num_classes() const noexcept { return images.size(); }
  std::size_t size(std::size_t label) const { return images.at(label).rows(); }
};

SynthPool generate_pool(const Checkpoint& checkpoint, std::size_t per_class, std::uint64_t seed);

void save_pool(const SynthPool& pool, const std::filesystem::path& path);
SynthPool load_pool(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_pool(const SynthPool& pool);
SynthPool decode_pool(std::span<const std::uint8_t> bytes);

}  // namespace ltgen::synth
