// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ltgen/core/matrix.hpp"
#include "ltgen/core/tape.hpp"
#include "ltgen/synth/schedule.hpp"

namespace ltgen::synth {

struct DenoiserConfig {
  std::size_t num_classes = 8;
  std::size_t steps = 200;
  std::size_t embed_dim = 32;
  std::size_t hidden1 = 128;
  std::size_t hidden2 = 128;
  std::size_t image_size = 256;

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Class-conditional ε-predictor with a sketch-decoder head.
///
///   e  = time_embed[t] + class_embed[c]
///   h1 = relu((c_in·x·W_in + b1) ⊙ (1 + e·G1) + e·W_e1),   x = z_t / √ᾱ_t
///   h2 = h1 + relu((h1·W_h + b2) ⊙ (1 + e·G2) + e·W_e2)   (residual when widths match)
///   F  = (h2·W_eps + b_eps) ⊙ (1 + e·G3)
///   Ŝ  = sigmoid([h1 ⊕ h2]·W_s + b_s)
///
/// The ε-head output F is preconditioned: x̂_0 = μ + c_skip·(x − μ) + c_out·F
/// and ε̂ = (x − x̂_0)/σ_t with σ_t = √((1−ᾱ_t)/ᾱ_t). With data scale s,
/// c_in = 1/√(σ²+s²), c_skip = s²/(σ²+s²), c_out = σ·s/√(σ²+s²), so the
/// ε-error stays O(1) in F at every noise level. h1 and h2 are the two
/// feature taps consumed by the sketch decoder.
class DenoiserModel {
 public:
  enum Slot : std::size_t {
    kTimeEmbed,
    kClassEmbed,
    kInput,
    kEmbedToHidden1,
    kBias1,
    kGain1,
    kHidden,
    kEmbedToHidden2,
    kBias2,
    kGain2,
    kEpsWeight,
    kEpsBias,
    kGainOut,
    kSketchWeight,
    kSketchBias,
    kSlotCount
  };

  DenoiserModel() = default;
  /// Fresh initialisation: He-scaled trunk weights, sinusoidal time table,
  /// standard-normal class table, zero biases and gains.
  DenoiserModel(DenoiserConfig config, const NoiseSchedule& schedule, std::uint64_t seed);
  /// Adopts trained parameters; ModelError if shapes disagree with config.
  DenoiserModel(DenoiserConfig config, const NoiseSchedule& schedule, ParameterSet params);

  /// Centre and per-direction scale assumed by the preconditioner. Shape images
  /// are mostly dark with most pixel variance in a few directions, so a small
  /// scale matches the many near-constant directions.
  static constexpr double kDataMean = 0.2;
  static constexpr double kDataScale = 0.1;

  const DenoiserConfig& config() const noexcept { return config_; }
  const ParameterSet& params() const noexcept { return params_; }
  ParameterSet& params() noexcept { return params_; }

  /// True for the sketch-decoder slots.
  static bool is_sketch_head(std::size_t slot) noexcept {
    return slot == kSketchWeight || slot == kSketchBias;
  }

  struct Outputs {
    Var noise;   ///< B×256 ε prediction
    Var sketch;  ///< B×256 in (0,1); invalid when the head was skipped
  };

  /// Records the forward pass on `tape`. `bound` comes from
  /// bind_parameters(tape, params()). The sketch head is skipped when
  /// `with_sketch` is false.
  Outputs forward(Tape& tape, std::span<const Var> bound, const Matrix& z_t,
                  std::span<const std::size_t> t, std::span<const std::size_t> labels,
                  bool with_sketch = true) const;

  /// Tape-free ε prediction used by the sampler.
  Matrix predict_noise(const Matrix& z_t, std::span<const std::size_t> t,
                       std::span<const std::size_t> labels) const;

 private:
  void check_inputs(const Matrix& z_t, std::span<const std::size_t> t,
                    std::span<const std::size_t> labels) const;

  struct Precondition {
    double inv_sqrt_alpha_bar, c_in, residual, head;  // ε̂ = residual·(x − μ) + head·F
  };
  Precondition precondition(std::size_t t) const;
  void set_schedule(const NoiseSchedule& schedule);

  DenoiserConfig config_;
  ParameterSet params_;
  std::vector<double> alpha_bar_;
};

}  // namespace ltgen::synth
