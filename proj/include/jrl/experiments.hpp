#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "jrl/data.hpp"
#include "jrl/evaluation.hpp"
#include "jrl/model.hpp"
#include "jrl/training.hpp"

namespace jrl {

// A named bundle of model, training and synthetic-data settings.
struct Preset {
  std::string name;
  ModelConfig model;
  TrainConfig train;
  SynthSpec synth;
};

// "default" (full-size model) or "acceptance" (small, CI-sized).
Preset preset(std::string_view name);
std::vector<std::string> preset_names();

// Model dimensions taken from the data; other fields from `base`.
ModelConfig config_for_data(const ModelConfig& base, const DatasetSplits& splits);

std::vector<AttributeLabels> predicted_labels(std::span<const Prediction> predictions, std::size_t n_attr);
std::vector<AttributeLabels> ground_truth(const Dataset& data);

// Trains one model with `order` and evaluates it on the test split.
MetricsReport train_and_evaluate(const DatasetSplits& splits, const OrderSpec& order, const TrainConfig& train,
                                 const ModelConfig& model);

// Trains the ten standard-order members in memory and evaluates them.
EnsembleReport train_and_evaluate_ensemble(const DatasetSplits& splits, std::uint64_t base_seed,
                                           const TrainConfig& train, const ModelConfig& model);

struct AblationRow {
  std::string name;
  std::string full_label;
  std::string variant_label;
  MetricsReport full;
  MetricsReport variant;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

// Encoder vs pass-through, k vs 0 exemplars, vote vs member average,
// attention on vs off. Single-model rows use the frequent-first order.
AblationReport run_ablation(const DatasetSplits& splits, const TrainConfig& train, const ModelConfig& model);

struct RobustnessRow {
  double fraction = 1.0;
  std::size_t train_size = 0;
  MetricsReport report;
};

struct RobustnessReport {
  std::vector<RobustnessRow> rows;
};

inline constexpr double kRobustnessFractions[] = {1.0, 0.75, 0.5, 0.25};

// Nested training subsets: each smaller subset is a prefix of one seeded
// shuffle, so the sizes are monotone and the samples are shared.
std::vector<Dataset> nested_subsets(const Dataset& train, std::span<const double> fractions, std::uint64_t seed);

RobustnessReport run_robustness(const DatasetSplits& splits, const TrainConfig& train, const ModelConfig& model,
                                std::span<const double> fractions = kRobustnessFractions);

std::string format_ablation(const AblationReport& report);
std::string format_robustness(const RobustnessReport& report);
nlohmann::json to_json(const AblationReport& report);
nlohmann::json to_json(const RobustnessReport& report);

}  // namespace jrl
