// SPDX-License-Identifier: Apache-2.0

#include "ltgen/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <set>

#include "ltgen/core/error.hpp"
#include "ltgen/core/io.hpp"

namespace ltgen::cli {
namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) + ": expected " +
                    std::string(expected));
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

int parse_int(std::string_view key, std::string_view v) {
  int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

struct Entry {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)> set;
};

template <typename T>
Entry size_entry(std::string key, T ExperimentConfig::*group, std::size_t T::*field) {
  return {std::move(key), [=](const ExperimentConfig& c) { return std::to_string(c.*group.*field); },
          [=](ExperimentConfig& c, std::string_view k, std::string_view v) {
            c.*group.*field = parse_unsigned<std::size_t>(k, v);
          }};
}

template <typename T>
Entry double_entry(std::string key, T ExperimentConfig::*group, double T::*field) {
  return {std::move(key), [=](const ExperimentConfig& c) { return format_double(c.*group.*field); },
          [=](ExperimentConfig& c, std::string_view k, std::string_view v) { c.*group.*field = parse_double(k, v); }};
}

template <typename T>
Entry int_entry(std::string key, T ExperimentConfig::*group, int T::*field) {
  return {std::move(key), [=](const ExperimentConfig& c) { return std::to_string(c.*group.*field); },
          [=](ExperimentConfig& c, std::string_view k, std::string_view v) { c.*group.*field = parse_int(k, v); }};
}

template <typename T>
Entry bool_entry(std::string key, T ExperimentConfig::*group, bool T::*field) {
  return {std::move(key), [=](const ExperimentConfig& c) { return std::string(c.*group.*field ? "true" : "false"); },
          [=](ExperimentConfig& c, std::string_view k, std::string_view v) { c.*group.*field = parse_bool(k, v); }};
}

const std::vector<Entry>& entries() {
  using E = ExperimentConfig;
  using S = synth::SynthConfig;
  using R = rlcas::RlCasConfig;
  using C = clf::ClassifierConfig;
  using D = data::LongTailProfile;
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({"seed", [](const E& c) { return std::to_string(c.seed); },
                 [](E& c, std::string_view k, std::string_view v) { c.seed = parse_unsigned<std::uint64_t>(k, v); }});
    t.push_back({"strategy", [](const E& c) { return std::string(clf::strategy_name(c.strategy)); },
                 [](E& c, std::string_view, std::string_view v) { c.strategy = clf::parse_strategy(v); }});
    t.push_back({"out", [](const E& c) { return c.out; },
                 [](E& c, std::string_view k, std::string_view v) {
                   if (v.empty()) bad_value(k, v, "a directory");
                   c.out = std::string(v);
                 }});
    t.push_back(size_entry("data.classes", &E::data, &D::num_classes));
    t.push_back(size_entry("data.head_count", &E::data, &D::head_count));
    t.push_back(double_entry("data.ratio", &E::data, &D::imbalance_ratio));
    t.push_back(size_entry("synth.steps", &E::synth, &S::steps));
    t.push_back(double_entry("synth.beta_min", &E::synth, &S::beta_min));
    t.push_back(double_entry("synth.beta_max", &E::synth, &S::beta_max));
    t.push_back(size_entry("synth.embed_dim", &E::synth, &S::embed_dim));
    t.push_back(size_entry("synth.hidden1", &E::synth, &S::hidden1));
    t.push_back(size_entry("synth.hidden2", &E::synth, &S::hidden2));
    t.push_back(double_entry("synth.lambda", &E::synth, &S::sketch_weight));
    t.push_back(double_entry("synth.lr", &E::synth, &S::lr));
    t.push_back(double_entry("synth.weight_decay", &E::synth, &S::weight_decay));
    t.push_back(size_entry("synth.epochs", &E::synth, &S::epochs));
    t.push_back(size_entry("synth.batch_size", &E::synth, &S::batch_size));
    t.push_back(bool_entry("synth.clip_denoised", &E::synth, &S::clip_denoised));
    t.push_back({"pool.per_class", [](const E& c) { return std::to_string(c.pool_per_class); },
                 [](E& c, std::string_view k, std::string_view v) {
                   c.pool_per_class = parse_unsigned<std::size_t>(k, v);
                 }});
    t.push_back(size_entry("rlcas.episodes", &E::rlcas, &R::episodes));
    t.push_back(double_entry("rlcas.gamma", &E::rlcas, &R::gamma));
    t.push_back(double_entry("rlcas.lr", &E::rlcas, &R::lr));
    t.push_back(int_entry("rlcas.s_max", &E::rlcas, &R::s_max));
    t.push_back(int_entry("rlcas.init_state", &E::rlcas, &R::init_state));
    t.push_back(size_entry("rlcas.agent_epochs", &E::rlcas, &R::agent_epochs));
    t.push_back({"rlcas.optimizer",
                 [](const E& c) { return std::string(c.rlcas.optimizer == rlcas::AgentOptimizer::kAdam ? "adam" : "sgd"); },
                 [](E& c, std::string_view k, std::string_view v) {
                   if (v == "adam") {
                     c.rlcas.optimizer = rlcas::AgentOptimizer::kAdam;
                   } else if (v == "sgd") {
                     c.rlcas.optimizer = rlcas::AgentOptimizer::kSgd;
                   } else {
                     bad_value(k, v, "adam or sgd");
                   }
                 }});
    t.push_back(size_entry("rlcas.threads", &E::rlcas, &R::threads));
    t.push_back(size_entry("clf.hidden1", &E::clf, &C::hidden1));
    t.push_back(size_entry("clf.hidden2", &E::clf, &C::hidden2));
    t.push_back(double_entry("clf.lr", &E::clf, &C::lr));
    t.push_back(double_entry("clf.weight_decay", &E::clf, &C::weight_decay));
    t.push_back(size_entry("clf.epochs", &E::clf, &C::epochs));
    t.push_back(size_entry("clf.real_per_batch", &E::clf, &C::real_per_batch));
    t.push_back(bool_entry("clf.class_balanced_real", &E::clf, &C::class_balanced_real));
    t.push_back(bool_entry("clf.balanced_softmax", &E::clf, &C::balanced_softmax));
    t.push_back(int_entry("clf.fixed_mix", &E::clf, &C::fixed_mix));
    t.push_back({"clf.episode_metric",
                 [](const E& c) {
                   return std::string(c.clf.episode_metric == clf::EpisodeMetric::kMacroF1 ? "macro_f1" : "accuracy");
                 },
                 [](E& c, std::string_view k, std::string_view v) {
                   if (v == "macro_f1") {
                     c.clf.episode_metric = clf::EpisodeMetric::kMacroF1;
                   } else if (v == "accuracy") {
                     c.clf.episode_metric = clf::EpisodeMetric::kAccuracy;
                   } else {
                     bad_value(k, v, "macro_f1 or accuracy");
                   }
                 }});
    t.push_back({"clf.many_min", [](const E& c) { return std::to_string(c.clf.shots.many_min); },
                 [](E& c, std::string_view k, std::string_view v) {
                   c.clf.shots.many_min = parse_unsigned<std::size_t>(k, v);
                 }});
    t.push_back({"clf.few_max", [](const E& c) { return std::to_string(c.clf.shots.few_max); },
                 [](E& c, std::string_view k, std::string_view v) {
                   c.clf.shots.few_max = parse_unsigned<std::size_t>(k, v);
                 }});
    t.push_back({"clf.all_mode",
                 [](const E& c) { return std::string(c.clf.all_mode == clf::AllMode::kSample ? "sample" : "class_mean"); },
                 [](E& c, std::string_view k, std::string_view v) {
                   if (v == "sample") {
                     c.clf.all_mode = clf::AllMode::kSample;
                   } else if (v == "class_mean") {
                     c.clf.all_mode = clf::AllMode::kClassMean;
                   } else {
                     bad_value(k, v, "sample or class_mean");
                   }
                 }});
    return t;
  }();
  return table;
}

std::string canonical(const ExperimentConfig& config, bool with_runtime) {
  std::string text;
  for (const auto& e : entries()) {
    if (!with_runtime && (e.key == "out" || e.key == "rlcas.threads")) continue;
    text += e.key + " = " + e.get(config) + "\n";
  }
  return text;
}

}  // namespace

void ExperimentConfig::sync_seeds() {
  synth.seed = seed;
  rlcas.seed = seed;
  clf.seed = seed;
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  for (const auto& e : entries()) {
    if (e.key == key) {
      e.set(config, key, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(line_no) + ": duplicate key " + key);
    apply_setting(config, key, value);
  }
  config.sync_seeds();
  validate(config);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const Error& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  return parse_config(text);
}

std::string to_text(const ExperimentConfig& config) { return canonical(config, true); }

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a64(canonical(config, false)); }

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.push_back(e.key);
  return keys;
}

void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.data.num_classes >= 2 && c.data.num_classes <= data::kMaxClasses, "data.classes must be in [2, 16]");
  require(c.data.head_count >= 4, "data.head_count must be at least 4");
  require(c.data.imbalance_ratio >= 1.0, "data.ratio must be at least 1");
  require(c.synth.steps >= 2 && c.synth.steps <= 10000, "synth.steps must be in [2, 10000]");
  require(c.synth.beta_min > 0.0 && c.synth.beta_min <= c.synth.beta_max && c.synth.beta_max < 1.0,
          "synth betas must satisfy 0 < beta_min <= beta_max < 1");
  require(c.synth.embed_dim > 0 && c.synth.hidden1 > 0 && c.synth.hidden2 > 0, "synth widths must be positive");
  require(c.synth.sketch_weight >= 0.0, "synth.lambda must be non-negative");
  require(c.synth.lr > 0.0, "synth.lr must be positive");
  require(c.synth.weight_decay >= 0.0, "synth.weight_decay must be non-negative");
  require(c.synth.epochs > 0, "synth.epochs must be positive");
  require(c.synth.batch_size > 0, "synth.batch_size must be positive");
  require(c.pool_per_class > 0, "pool.per_class must be positive");
  c.rlcas.validate();
  require(c.pool_per_class >= static_cast<std::size_t>(c.rlcas.s_max), "pool.per_class must be at least rlcas.s_max");
  require(c.rlcas.agent_epochs > 0, "rlcas.agent_epochs must be positive");
  require(c.clf.hidden1 > 0 && c.clf.hidden2 > 0, "clf widths must be positive");
  require(c.clf.lr > 0.0, "clf.lr must be positive");
  require(c.clf.weight_decay >= 0.0, "clf.weight_decay must be non-negative");
  require(c.clf.epochs > 0, "clf.epochs must be positive");
  require(c.clf.real_per_batch > 0, "clf.real_per_batch must be positive");
  require(c.clf.fixed_mix >= 0 && static_cast<std::size_t>(c.clf.fixed_mix) <= c.pool_per_class,
          "clf.fixed_mix must be in [0, pool.per_class]");
  require(c.clf.shots.few_max < c.clf.shots.many_min, "clf.few_max must be below clf.many_min");
}

}  // namespace ltgen::cli
