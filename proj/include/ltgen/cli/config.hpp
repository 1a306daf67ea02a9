// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "ltgen/clf/classifier.hpp"
#include "ltgen/data/shapes.hpp"
#include "ltgen/rlcas/agents.hpp"
#include "ltgen/synth/synthesizer.hpp"

namespace ltgen::cli {

/// Everything one experiment needs. `seed` drives every stage; the per-module
/// seed fields are overwritten from it by sync_seeds().
struct ExperimentConfig {
  data::LongTailProfile data;
  synth::SynthConfig synth;
  std::size_t pool_per_class = 64;
  rlcas::RlCasConfig rlcas;
  clf::ClassifierConfig clf;
  clf::Strategy strategy = clf::Strategy::kBaseline;
  std::uint64_t seed = 0;
  std::string out = "runs/default";

  void sync_seeds();
};

/// Flat `key = value` lines; `#` starts a comment. Starts from defaults and
/// rejects unknown keys and malformed or out-of-range values with ConfigError.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Applies one setting; ConfigError for unknown keys or bad values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Canonical text, one `key = value` per line in a fixed order. parse_config
/// of this text reproduces the config exactly.
std::string to_text(const ExperimentConfig& config);

/// Hash of the canonical text without the output directory and thread count.
std::uint64_t config_hash(const ExperimentConfig& config);

/// ConfigError when a value is outside its documented range.
void validate(const ExperimentConfig& config);

/// All recognised keys, in canonical order.
std::vector<std::string> config_keys();

}  // namespace ltgen::cli
