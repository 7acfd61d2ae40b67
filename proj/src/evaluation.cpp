#include "jrl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "jrl/errors.hpp"

namespace jrl {

AttributeLabels vote(std::span<const AttributeLabels> members) {
  require(!members.empty(), "vote: no members");
  const std::size_t n = members.front().size();
  std::vector<std::size_t> counts(n, 0);
  for (const AttributeLabels& m : members) {
    require(m.size() == n, "vote: members disagree on the attribute count");
    for (std::size_t j = 0; j < n; ++j) counts[j] += m[j] != 0 ? 1 : 0;
  }
  AttributeLabels out(n, 0);
  for (std::size_t j = 0; j < n; ++j) out[j] = 2 * counts[j] > members.size() ? 1 : 0;
  return out;
}

namespace {

std::size_t check_aligned(std::span<const AttributeLabels> preds, std::span<const AttributeLabels> gts,
                          const char* what) {
  require(preds.size() == gts.size(), std::string(what) + ": " + std::to_string(preds.size()) + " predictions vs " +
                                          std::to_string(gts.size()) + " ground-truth vectors");
  const std::size_t n = gts.empty() ? 0 : gts.front().size();
  for (std::size_t i = 0; i < gts.size(); ++i) {
    require(preds[i].size() == n && gts[i].size() == n, std::string(what) + ": label length mismatch at image " +
                                                            std::to_string(i));
  }
  return n;
}

}  // namespace

ClassMetrics map_cls(std::span<const AttributeLabels> preds, std::span<const AttributeLabels> gts) {
  const std::size_t n = check_aligned(preds, gts, "map_cls");
  ClassMetrics out;
  out.per_attribute.resize(n);
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t j = 0; j < n; ++j) {
    std::size_t pos = 0, neg = 0, tp = 0, tn = 0;
    for (std::size_t i = 0; i < gts.size(); ++i) {
      const bool g = gts[i][j] != 0, p = preds[i][j] != 0;
      if (g) {
        ++pos;
        tp += p ? 1 : 0;
      } else {
        ++neg;
        tn += p ? 0 : 1;
      }
    }
    if (pos == 0 || neg == 0) continue;
    const double ap = 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) +
                             static_cast<double>(tn) / static_cast<double>(neg));
    out.per_attribute[j] = ap;
    sum += ap;
    ++defined;
  }
  if (defined > 0) out.mean_ap = sum / static_cast<double>(defined);
  return out;
}

InstanceMetrics instance_metrics(std::span<const AttributeLabels> preds, std::span<const AttributeLabels> gts) {
  const std::size_t n = check_aligned(preds, gts, "instance_metrics");
  InstanceMetrics out;
  if (gts.empty()) return out;
  double precision_sum = 0.0, recall_sum = 0.0;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    std::size_t n_pred = 0, n_gt = 0, both = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const bool g = gts[i][j] != 0, p = preds[i][j] != 0;
      n_pred += p ? 1 : 0;
      n_gt += g ? 1 : 0;
      both += (p && g) ? 1 : 0;
    }
    if (n_pred == 0) {
      ++out.empty_predictions;
      precision_sum += 1.0;
    } else {
      precision_sum += static_cast<double>(both) / static_cast<double>(n_pred);
    }
    if (n_gt == 0) {
      ++out.empty_ground_truth;
      recall_sum += 1.0;
    } else {
      recall_sum += static_cast<double>(both) / static_cast<double>(n_gt);
    }
  }
  const double count = static_cast<double>(gts.size());
  out.precision = precision_sum / count;
  out.recall = recall_sum / count;
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

MetricsReport compute_metrics(std::span<const AttributeLabels> preds, std::span<const AttributeLabels> gts) {
  const ClassMetrics cls = map_cls(preds, gts);
  const InstanceMetrics ins = instance_metrics(preds, gts);
  MetricsReport r;
  r.mean_ap = cls.mean_ap;
  r.per_attribute_ap = cls.per_attribute;
  r.precision = ins.precision;
  r.recall = ins.recall;
  r.f1 = ins.f1;
  r.empty_predictions = ins.empty_predictions;
  r.empty_ground_truth = ins.empty_ground_truth;
  return r;
}

MetricsReport average_reports(std::span<const MetricsReport> reports) {
  MetricsReport out;
  if (reports.empty()) return out;
  const double count = static_cast<double>(reports.size());
  double ap_sum = 0.0;
  std::size_t ap_count = 0;
  const std::size_t n = reports.front().per_attribute_ap.size();
  std::vector<double> attr_sum(n, 0.0);
  std::vector<std::size_t> attr_count(n, 0);
  for (const MetricsReport& r : reports) {
    if (r.mean_ap) {
      ap_sum += *r.mean_ap;
      ++ap_count;
    }
    for (std::size_t j = 0; j < n && j < r.per_attribute_ap.size(); ++j) {
      if (r.per_attribute_ap[j]) {
        attr_sum[j] += *r.per_attribute_ap[j];
        ++attr_count[j];
      }
    }
    out.precision += r.precision / count;
    out.recall += r.recall / count;
    out.f1 += r.f1 / count;
    out.empty_predictions += r.empty_predictions;
    out.empty_ground_truth += r.empty_ground_truth;
  }
  if (ap_count > 0) out.mean_ap = ap_sum / static_cast<double>(ap_count);
  out.per_attribute_ap.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (attr_count[j] > 0) out.per_attribute_ap[j] = attr_sum[j] / static_cast<double>(attr_count[j]);
  }
  return out;
}

nlohmann::json to_json(const MetricsReport& r, std::span<const std::string> names) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json per_attr = nlohmann::json::array();
  for (std::size_t j = 0; j < r.per_attribute_ap.size(); ++j) {
    per_attr.push_back({{"attribute", j < names.size() ? names[j] : std::to_string(j)},
                        {"ap", opt(r.per_attribute_ap[j])}});
  }
  return {{"mAP_cls", opt(r.mean_ap)},
          {"mPrc_ins", r.precision},
          {"mRcl_ins", r.recall},
          {"F1_ins", r.f1},
          {"per_attribute_ap", per_attr},
          {"empty_predictions", r.empty_predictions},
          {"empty_ground_truth", r.empty_ground_truth}};
}

std::string format_table(std::span<const MetricsRow> rows) {
  std::size_t width = 6;
  for (const MetricsRow& r : rows) width = std::max(width, r.label.size());
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-*s | %8s %8s %8s %8s\n", static_cast<int>(width), "Method", "mAP^cls",
                "mPrc^ins", "mRcl^ins", "F1^ins");
  os << buf << std::string(width, '-') << "-+-" << std::string(35, '-') << '\n';
  for (const MetricsRow& r : rows) {
    char ap[16];
    if (r.report.mean_ap) {
      std::snprintf(ap, sizeof ap, "%8.2f", 100.0 * *r.report.mean_ap);
    } else {
      std::snprintf(ap, sizeof ap, "%8s", "n/a");
    }
    std::snprintf(buf, sizeof buf, "%-*s | %s %8.2f %8.2f %8.2f\n", static_cast<int>(width), r.label.c_str(), ap,
                  100.0 * r.report.precision, 100.0 * r.report.recall, 100.0 * r.report.f1);
    os << buf;
  }
  return os.str();
}

std::vector<Prediction> predict_dataset(const JrlParams& params, const ModelConfig& config, const Dataset& pool,
                                        const Dataset& queries) {
  ContextCache cache;
  const bool use_context = config.context && config.context_k > 0;
  if (use_context) {
    require(pool.size() >= config.context_k, "predict: exemplar pool smaller than k");
    cache.index = build_index(pool);
    cache.neighbours = neighbour_lists(cache.index, queries, config.context_k, false);
    cache.contexts = compute_contexts(params, config, pool);
  }
  std::vector<Prediction> out(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::vector<Vec> exemplars = use_context ? cache.exemplars_for(idx) : std::vector<Vec>{};
    out[idx] = predict(params, config, queries.samples[idx].regions, exemplars);
  }
  return out;
}

std::vector<LoadedMember> load_members(const Manifest& manifest, const std::filesystem::path& manifest_dir) {
  std::vector<LoadedMember> members;
  for (const ManifestEntry& e : manifest.members) {
    if (e.status != "ok") {
      throw ContractError("manifest member " + e.checkpoint + " is marked '" + e.status + "'" +
                          (e.error.empty() ? "" : ": " + e.error));
    }
    LoadedMember m;
    m.checkpoint = load_checkpoint(manifest_dir / e.checkpoint, &manifest.config);
    m.label = e.order.label();
    members.push_back(std::move(m));
  }
  require(!members.empty(), "manifest lists no members");
  return members;
}

EnsembleReport evaluate_members(std::span<const LoadedMember> members, const Dataset& pool, const Dataset& test) {
  require(!members.empty(), "evaluate: no ensemble members");
  test.validate();
  EnsembleReport report;
  std::vector<AttributeLabels> gts;
  for (const Sample& s : test.samples) {
    gts.push_back(s.labels);
    report.predictions.ids.push_back(s.id);
  }
  for (const LoadedMember& m : members) {
    const ModelConfig& cfg = m.checkpoint.config;
    require(test.n_attr() == cfg.n_attr && test.regions() == cfg.regions && test.region_dim() == cfg.region_dim,
            "evaluate: dataset is incompatible with checkpoint '" + m.label + "'");
    std::vector<AttributeLabels> labels;
    for (const Prediction& p : predict_dataset(m.checkpoint.params, cfg, pool, test)) {
      labels.push_back(sequence_to_labels(p.sequence, cfg.n_attr));
    }
    report.members.push_back(compute_metrics(labels, gts));
    report.member_labels.push_back(m.label);
    report.predictions.members.push_back(std::move(labels));
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::vector<AttributeLabels> votes;
    votes.reserve(members.size());
    for (const auto& member_preds : report.predictions.members) votes.push_back(member_preds[i]);
    report.predictions.voted.push_back(vote(votes));
  }
  report.voted = compute_metrics(report.predictions.voted, gts);
  report.member_average = average_reports(report.members);
  if (report.voted.empty_predictions > 0 || report.voted.empty_ground_truth > 0) {
    std::clog << "evaluate: empty-set conventions applied to " << report.voted.empty_predictions
              << " empty predictions and " << report.voted.empty_ground_truth << " empty ground-truth sets\n";
  }
  const std::size_t undefined = static_cast<std::size_t>(
      std::count_if(report.voted.per_attribute_ap.begin(), report.voted.per_attribute_ap.end(),
                    [](const std::optional<double>& ap) { return !ap.has_value(); }));
  if (undefined > 0) {
    std::clog << "evaluate: warning: " << undefined
              << " attribute(s) have single-class ground truth and are excluded from mAP\n";
  }
  return report;
}

EnsembleReport evaluate_ensemble(const std::filesystem::path& manifest_path, const Dataset& pool,
                                 const Dataset& test) {
  const Manifest manifest = read_manifest(manifest_path);
  const std::vector<LoadedMember> members = load_members(manifest, manifest_path.parent_path());
  return evaluate_members(members, pool, test);
}

nlohmann::json to_json(const EnsembleReport& r, std::span<const std::string> names) {
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < r.members.size(); ++i) {
    nlohmann::json m = to_json(r.members[i], names);
    m["member"] = r.member_labels[i];
    members.push_back(std::move(m));
  }
  return {{"ensemble", to_json(r.voted, names)},
          {"member_average", to_json(r.member_average, names)},
          {"members", members}};
}

}  // namespace jrl
