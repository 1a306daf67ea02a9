// SPDX-License-Identifier: Apache-2.0

#include "ltgen/cli/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "ltgen/core/error.hpp"
#include "ltgen/core/io.hpp"
#include "ltgen/data/shapes.hpp"

namespace ltgen::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string synth_stage(Variant v) { return "train-synth." + std::string(variant_name(v)); }
std::string pool_stage(Variant v) { return "sample-pool." + std::string(variant_name(v)); }
std::string clf_stage(const RunSpec& r) { return "train-clf." + r.name(); }
std::string eval_stage(const RunSpec& r) { return "eval." + r.name(); }

data::Dataset load_data(const Manifest& m) { return data::load_dataset(m.require("gen-data")); }

json optional_value(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const clf::MetricsReport& r) {
  return {{"f1", r.f1},
          {"precision", r.precision},
          {"recall", r.recall},
          {"all", r.all},
          {"many", optional_value(r.many)},
          {"medium", optional_value(r.medium)},
          {"few", optional_value(r.few)},
          {"class_recall", r.class_recall},
          {"samples", r.samples}};
}

Manifest open_manifest(const ExperimentConfig& config) {
  fs::create_directories(config.out);
  Manifest m = Manifest::load(config.out);
  m.set_config(config);
  return m;
}

}  // namespace

std::string_view variant_name(Variant variant) noexcept {
  return variant == Variant::kClass ? "class" : "sketch";
}

Variant parse_variant(std::string_view name) {
  if (name == "class") return Variant::kClass;
  if (name == "sketch") return Variant::kSketch;
  throw ConfigError("unknown synthesizer variant '" + std::string(name) + "' (expected class or sketch)");
}

std::string RunSpec::name() const {
  if (strategy == clf::Strategy::kBaseline) return "baseline";
  return std::string(clf::strategy_name(strategy)) + "." + std::string(variant_name(variant));
}

const std::array<ReportRow, 6>& report_rows() {
  using clf::Strategy;
  static const std::array<ReportRow, 6> rows{{
      {"Baseline", {Strategy::kBaseline, Variant::kClass}},
      {"+SynClass", {Strategy::kFixedMix, Variant::kClass}},
      {"+SynSketch", {Strategy::kFixedMix, Variant::kSketch}},
      {"+SynClass+Re-sampling", {Strategy::kResample, Variant::kClass}},
      {"+SynClass+RL-CAS", {Strategy::kRlCas, Variant::kClass}},
      {"Ours", {Strategy::kRlCas, Variant::kSketch}},
  }};
  return rows;
}

Manifest::Manifest(fs::path out_dir) : dir_(std::move(out_dir)), doc_({{"stages", json::object()}}) {}

Manifest Manifest::load(const fs::path& out_dir) {
  Manifest m(out_dir);
  const fs::path file = out_dir / "manifest.json";
  if (!fs::exists(file)) return m;
  try {
    m.doc_ = json::parse(read_text(file));
  } catch (const json::exception& e) {
    throw DependencyError("manifest " + file.string() + " is unreadable: " + e.what());
  }
  if (!m.doc_.contains("stages") || !m.doc_["stages"].is_object()) {
    throw DependencyError("manifest " + file.string() + " has no stages");
  }
  return m;
}

void Manifest::save() const { write_text(dir_ / "manifest.json", doc_.dump(2) + "\n"); }

void Manifest::set_config(const ExperimentConfig& config) {
  doc_["config_hash"] = hex64(config_hash(config));
  doc_["build"] = LTGEN_BUILD_ID;
}

void Manifest::record(const std::string& stage, const fs::path& artifact, double seconds) {
  doc_["stages"][stage] = {{"path", artifact.filename().string()},
                           {"sha256", sha256_file(artifact)},
                           {"config_hash", doc_.value("config_hash", "")},
                           {"seconds", seconds}};
  save();
}

bool Manifest::has(const std::string& stage) const { return doc_["stages"].contains(stage); }

fs::path Manifest::require(const std::string& stage) const {
  if (!has(stage)) throw DependencyError("missing artifact: run stage '" + stage + "' first");
  const auto& entry = doc_["stages"][stage];
  const fs::path path = dir_ / entry.at("path").get<std::string>();
  if (!fs::exists(path)) throw DependencyError("artifact of stage '" + stage + "' is missing: " + path.string());
  if (sha256_file(path) != entry.at("sha256").get<std::string>()) {
    throw DependencyError("artifact of stage '" + stage + "' does not match its recorded checksum: " +
                          path.string());
  }
  if (entry.value("config_hash", "") != doc_.value("config_hash", "")) {
    throw DependencyError("artifact of stage '" + stage + "' was produced by a different config; rerun it");
  }
  return path;
}

fs::path cmd_gen_data(const ExperimentConfig& config) {
  Manifest m = open_manifest(config);
  Stopwatch clock;
  const auto ds = data::generate_dataset(config.data, config.seed);
  const fs::path path = fs::path(config.out) / "dataset.ltg";
  data::save_dataset(ds, path);
  m.record("gen-data", path, clock.seconds());
  return path;
}

fs::path cmd_train_synth(const ExperimentConfig& config, Variant variant) {
  Manifest m = open_manifest(config);
  const auto ds = load_data(m);
  Stopwatch clock;
  synth::SynthConfig sc = config.synth;
  if (variant == Variant::kClass) {
    sc.sketch_weight = 0.0;
  } else if (!(sc.sketch_weight > 0.0)) {
    throw ConfigError("the sketch variant needs synth.lambda > 0");
  }
  const auto ck = synth::train_synthesizer(ds, sc);
  const fs::path path = fs::path(config.out) / ("synth-" + std::string(variant_name(variant)) + ".ltck");
  synth::save_checkpoint(ck, path);
  m.record(synth_stage(variant), path, clock.seconds());
  return path;
}

fs::path cmd_sample_pool(const ExperimentConfig& config, Variant variant) {
  Manifest m = open_manifest(config);
  const auto ck = synth::load_checkpoint(m.require(synth_stage(variant)));
  Stopwatch clock;
  const auto pool = synth::generate_pool(ck, config.pool_per_class, config.seed);
  const fs::path path = fs::path(config.out) / ("pool-" + std::string(variant_name(variant)) + ".ltp");
  synth::save_pool(pool, path);
  m.record(pool_stage(variant), path, clock.seconds());
  return path;
}

fs::path cmd_train_clf(const ExperimentConfig& config, const RunSpec& run) {
  Manifest m = open_manifest(config);
  const auto ds = load_data(m);
  synth::SynthPool pool;
  if (run.strategy != clf::Strategy::kBaseline) pool = synth::load_pool(m.require(pool_stage(run.variant)));
  Stopwatch clock;
  const clf::TrainData train{rlcas::from_samples(ds.split(data::Split::kTrain), ds.num_classes),
                             rlcas::from_samples(ds.split(data::Split::kVal), ds.num_classes)};
  const auto result = clf::train_classifier(train, run.strategy, config.clf, pool, config.rlcas);

  const fs::path model_path = fs::path(config.out) / ("model-" + run.name() + ".ltcm");
  clf::save_model(result.model, model_path);
  std::string history;
  for (const auto& h : result.history) {
    json line{{"epoch", h.epoch},
              {"train_loss", std::isfinite(h.train_loss) ? json(h.train_loss) : json(nullptr)},
              {"state", h.state},
              {"val", metrics_json(h.val)}};
    if (!h.sampler_log.empty()) line["sampler"] = json::parse(h.sampler_log);
    history += line.dump() + "\n";
  }
  const fs::path history_path = fs::path(config.out) / ("history-" + run.name() + ".jsonl");
  write_text(history_path, history);
  m.record(clf_stage(run) + ".history", history_path, 0.0);
  m.record(clf_stage(run), model_path, clock.seconds());
  return model_path;
}

json evaluation_record(const Predictor& predict, const rlcas::LabeledImages& split,
                       std::span<const std::size_t> train_counts, const ExperimentConfig& config,
                       const RunSpec& run) {
  if (split.size() == 0) throw ContractError("evaluation split is empty");
  const auto groups = clf::assign_shot_groups(train_counts, config.clf.shots);
  const auto predicted = predict(split.images);
  const auto confusion = clf::ConfusionMatrix::from_predictions(split.labels, predicted, split.num_classes);
  const auto report = clf::compute_metrics(confusion, groups, config.clf.all_mode);
  return {{"run", run.name()},
          {"strategy", clf::strategy_name(run.strategy)},
          {"variant", run.strategy == clf::Strategy::kBaseline ? json(nullptr)
                                                               : json(std::string(variant_name(run.variant)))},
          {"split", "test"},
          {"seed", config.seed},
          {"config_hash", hex64(config_hash(config))},
          {"metrics", metrics_json(report)}};
}

fs::path cmd_eval(const ExperimentConfig& config, const RunSpec& run) {
  Manifest m = open_manifest(config);
  const auto model = clf::load_model(m.require(clf_stage(run)));
  const auto ds = load_data(m);
  Stopwatch clock;
  if (model.num_classes() != ds.num_classes) throw ModelError("classifier and dataset disagree on classes");
  const auto test = rlcas::from_samples(ds.split(data::Split::kTest), ds.num_classes);
  const auto record = evaluation_record([&](const Matrix& x) { return model.predict(x); }, test,
                                        ds.class_counts(data::Split::kTrain), config, run);
  const fs::path path = fs::path(config.out) / ("metrics-" + run.name() + ".json");
  write_text(path, record.dump(2) + "\n");
  m.record(eval_stage(run), path, clock.seconds());
  return path;
}

std::string render_report(const std::map<std::string, json>& records) {
  auto cell = [](const json& v) {
    if (v.is_null()) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v.get<double>());
    return std::string(buf);
  };
  std::string out = "| Method | F1 | Pre | Rec | All | Many | Med | Few |\n";
  out += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& row : report_rows()) {
    out += "| " + std::string(row.label) + " |";
    const auto it = records.find(row.run.name());
    if (it == records.end()) {
      for (int i = 0; i < 7; ++i) out += " absent |";
    } else {
      const auto& mm = it->second.at("metrics");
      for (const char* key : {"f1", "precision", "recall", "all", "many", "medium", "few"}) {
        out += " " + cell(mm.at(key)) + " |";
      }
    }
    out += "\n";
  }
  return out;
}

fs::path cmd_report(const ExperimentConfig& config) {
  Manifest m = open_manifest(config);
  std::map<std::string, json> records;
  json rows = json::array();
  for (const auto& row : report_rows()) {
    const std::string stage = eval_stage(row.run);
    json entry{{"label", row.label}, {"run", row.run.name()}};
    if (m.has(stage)) {
      records[row.run.name()] = json::parse(read_text(m.require(stage)));
      entry["metrics"] = records[row.run.name()]["metrics"];
    } else {
      entry["metrics"] = nullptr;
    }
    rows.push_back(std::move(entry));
  }
  if (records.empty()) throw DependencyError("missing artifact: run stage 'eval' for at least one run first");
  Stopwatch clock;
  const fs::path md = fs::path(config.out) / "report.md";
  write_text(md, render_report(records));
  const json doc{{"config_hash", hex64(config_hash(config))}, {"seed", config.seed}, {"rows", rows}};
  write_text(fs::path(config.out) / "report.json", doc.dump(2) + "\n");
  m.record("report", md, clock.seconds());
  return md;
}

fs::path cmd_pipeline(const ExperimentConfig& config) {
  validate(config);
  cmd_gen_data(config);
  for (Variant v : {Variant::kClass, Variant::kSketch}) {
    cmd_train_synth(config, v);
    cmd_sample_pool(config, v);
  }
  for (const auto& row : report_rows()) {
    cmd_train_clf(config, row.run);
    cmd_eval(config, row.run);
  }
  return cmd_report(config);
}

}  // namespace ltgen::cli
