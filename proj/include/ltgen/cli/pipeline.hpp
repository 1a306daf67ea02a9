// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ltgen/cli/config.hpp"
#include "ltgen/clf/classifier.hpp"

namespace ltgen::cli {

/// Which synthesizer a run draws from: λ = 0 or λ = synth.lambda.
enum class Variant { kClass, kSketch };

std::string_view variant_name(Variant variant) noexcept;
Variant parse_variant(std::string_view name);

/// A classifier run: baseline ignores the variant.
struct RunSpec {
  clf::Strategy strategy = clf::Strategy::kBaseline;
  Variant variant = Variant::kClass;

  /// "baseline" or "<strategy>.<variant>".
  std::string name() const;
};

struct ReportRow {
  std::string_view label;
  RunSpec run;
};

/// Baseline, +SynClass, +SynSketch, +SynClass+Re-sampling, +SynClass+RL-CAS, Ours.
const std::array<ReportRow, 6>& report_rows();

/// Stage → artifact path, SHA-256 and wall time, stored as manifest.json in
/// the output directory.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path out_dir);

  static Manifest load(const std::filesystem::path& out_dir);
  void save() const;

  void record(const std::string& stage, const std::filesystem::path& artifact, double seconds);
  /// Artifact path of `stage` after checking that it exists and still matches
  /// its checksum. DependencyError naming the stage otherwise.
  std::filesystem::path require(const std::string& stage) const;
  bool has(const std::string& stage) const;

  const nlohmann::json& json() const noexcept { return doc_; }
  void set_config(const ExperimentConfig& config);

 private:
  std::filesystem::path dir_;
  nlohmann::json doc_;
};

std::filesystem::path cmd_gen_data(const ExperimentConfig& config);
std::filesystem::path cmd_train_synth(const ExperimentConfig& config, Variant variant);
std::filesystem::path cmd_sample_pool(const ExperimentConfig& config, Variant variant);
std::filesystem::path cmd_train_clf(const ExperimentConfig& config, const RunSpec& run);
std::filesystem::path cmd_eval(const ExperimentConfig& config, const RunSpec& run);
/// Writes report.md and report.json from whatever eval records exist.
std::filesystem::path cmd_report(const ExperimentConfig& config);
/// All stages for all six report rows.
std::filesystem::path cmd_pipeline(const ExperimentConfig& config);

using Predictor = std::function<std::vector<std::size_t>(const Matrix& images)>;

/// Deterministic metrics record of `predict` on `split`.
nlohmann::json evaluation_record(const Predictor& predict, const rlcas::LabeledImages& split,
                                 std::span<const std::size_t> train_counts, const ExperimentConfig& config,
                                 const RunSpec& run);

/// Markdown table of the six rows; runs missing from `records` are marked absent.
std::string render_report(const std::map<std::string, nlohmann::json>& records);

}  // namespace ltgen::cli
