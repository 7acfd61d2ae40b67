#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jrl/data.hpp"
#include "jrl/model.hpp"
#include "jrl/training.hpp"

namespace jrl {

// Attribute j is set iff strictly more than half of the members set it.
AttributeLabels vote(std::span<const AttributeLabels> members);

struct ClassMetrics {
  std::optional<double> mean_ap;
  // 0.5 * (TPR + TNR); nullopt when the ground truth has a single class.
  std::vector<std::optional<double>> per_attribute;
};

ClassMetrics map_cls(std::span<const AttributeLabels> preds, std::span<const AttributeLabels> gts);

struct InstanceMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  // Images where the empty-set conventions applied (precision or recall = 1).
  std::size_t empty_predictions = 0;
  std::size_t empty_ground_truth = 0;
};

InstanceMetrics instance_metrics(std::span<const AttributeLabels> preds, std::span<const AttributeLabels> gts);

struct MetricsReport {
  std::optional<double> mean_ap;
  std::vector<std::optional<double>> per_attribute_ap;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t empty_predictions = 0;
  std::size_t empty_ground_truth = 0;
};

MetricsReport compute_metrics(std::span<const AttributeLabels> preds, std::span<const AttributeLabels> gts);
// Element-wise mean of several reports (the "member average" row).
MetricsReport average_reports(std::span<const MetricsReport> reports);

nlohmann::json to_json(const MetricsReport& report, std::span<const std::string> attribute_names = {});

struct MetricsRow {
  std::string label;
  MetricsReport report;
};

// Aligned-column table with mAP^cls, mPrc^ins, mRcl^ins and F1^ins in percent.
std::string format_table(std::span<const MetricsRow> rows);

struct PredictionSet {
  std::vector<std::string> ids;
  std::vector<AttributeLabels> voted;
  std::vector<std::vector<AttributeLabels>> members;  // [member][image]
};

struct EnsembleReport {
  MetricsReport voted;
  MetricsReport member_average;
  std::vector<MetricsReport> members;
  std::vector<std::string> member_labels;
  PredictionSet predictions;
};

struct LoadedMember {
  LoadedCheckpoint checkpoint;
  std::string label;
};

// Greedy predictions of one model for every sample in `queries`. Exemplar
// contexts come from the model's own encoder over `pool`.
std::vector<Prediction> predict_dataset(const JrlParams& params, const ModelConfig& config, const Dataset& pool,
                                        const Dataset& queries);

std::vector<LoadedMember> load_members(const Manifest& manifest, const std::filesystem::path& manifest_dir);

EnsembleReport evaluate_members(std::span<const LoadedMember> members, const Dataset& pool, const Dataset& test);
EnsembleReport evaluate_ensemble(const std::filesystem::path& manifest_path, const Dataset& pool,
                                 const Dataset& test);

nlohmann::json to_json(const EnsembleReport& report, std::span<const std::string> attribute_names = {});

}  // namespace jrl
