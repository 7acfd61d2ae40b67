#include "jrl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "jrl/errors.hpp"

namespace jrl {

Preset preset(std::string_view name) {
  Preset p;
  p.name = std::string(name);
  if (name == "default") return p;
  if (name == "acceptance") {
    p.model.hidden = 32;
    p.model.regions = 6;
    p.model.n_attr = 12;
    p.model.embed_dim = 16;
    p.model.region_dim = 16;
    p.train.epochs = 12;
    p.train.batch_size = 32;
    p.train.learning_rate = 3e-3;
    p.synth.n_attr = 12;
    p.synth.regions = 6;
    p.synth.n_train = 2000;
    p.synth.n_test = 500;
    return p;
  }
  throw ContractError("unknown preset '" + std::string(name) + "' (expected default or acceptance)");
}

std::vector<std::string> preset_names() { return {"default", "acceptance"}; }

ModelConfig config_for_data(const ModelConfig& base, const DatasetSplits& splits) {
  ModelConfig c = base;
  c.regions = splits.train.regions();
  c.region_dim = splits.train.region_dim();
  c.n_attr = splits.vocab.names.size();
  return c.resolved();
}

std::vector<AttributeLabels> predicted_labels(std::span<const Prediction> predictions, std::size_t n_attr) {
  std::vector<AttributeLabels> out;
  out.reserve(predictions.size());
  for (const Prediction& p : predictions) out.push_back(sequence_to_labels(p.sequence, n_attr));
  return out;
}

std::vector<AttributeLabels> ground_truth(const Dataset& data) {
  std::vector<AttributeLabels> out;
  out.reserve(data.size());
  for (const Sample& s : data.samples) out.push_back(s.labels);
  return out;
}

MetricsReport train_and_evaluate(const DatasetSplits& splits, const OrderSpec& order, const TrainConfig& train,
                                 const ModelConfig& model) {
  const ModelConfig config = config_for_data(model, splits);
  const MemberResult member = train_member(splits.train, splits.vocab, order, train, config);
  const std::vector<Prediction> preds = predict_dataset(member.params, member.config, splits.train, splits.test);
  return compute_metrics(predicted_labels(preds, config.n_attr), ground_truth(splits.test));
}

EnsembleReport train_and_evaluate_ensemble(const DatasetSplits& splits, std::uint64_t base_seed,
                                           const TrainConfig& train, const ModelConfig& model) {
  const ModelConfig config = config_for_data(model, splits);
  const EnsembleSpec spec = EnsembleSpec::standard(splits.vocab, base_seed);
  spec.validate(config.n_attr);
  std::vector<LoadedMember> members(spec.members.size());
  const auto n = static_cast<std::ptrdiff_t>(spec.members.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const EnsembleMember& em = spec.members[static_cast<std::size_t>(i)];
    TrainConfig tc = train;
    tc.seed = em.seed;
    MemberResult r = train_member(splits.train, splits.vocab, em.order, tc, config);
    LoadedMember& slot = members[static_cast<std::size_t>(i)];
    slot.checkpoint.params = std::move(r.params);
    slot.checkpoint.config = r.config;
    slot.label = em.order.label();
  }
  return evaluate_members(members, splits.train, splits.test);
}

namespace {

OrderSpec frequent_first(const AttributeVocab& vocab) {
  for (const OrderSpec& o : build_orders(vocab, kRandomOrders, 0)) {
    if (o.kind == OrderKind::kFrequentFirst) return o;
  }
  throw ContractError("frequent-first order unavailable");
}

std::string signed_points(double a, double b) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", 100.0 * (a - b));
  return buf;
}

std::string delta(const std::optional<double>& a, const std::optional<double>& b) {
  return a && b ? signed_points(*a, *b) : "n/a";
}

}  // namespace

AblationReport run_ablation(const DatasetSplits& splits, const TrainConfig& train, const ModelConfig& model) {
  const OrderSpec order = frequent_first(splits.vocab);
  ModelConfig full = model;
  full.encoder = true;
  full.attention = true;
  full.context = true;
  if (full.context_k == 0) full.context_k = 2;
  const MetricsReport full_report = train_and_evaluate(splits, order, train, full);

  AblationReport report;
  ModelConfig no_ac = full;
  no_ac.encoder = false;
  report.rows.push_back({"intra-person attribute context", "JRL", "No AC (mean region feature as z)", full_report,
                         train_and_evaluate(splits, order, train, no_ac)});

  ModelConfig no_sc = full;
  no_sc.context_k = 0;
  report.rows.push_back({"inter-person similarity context", "k=" + std::to_string(full.context_k), "k=0",
                         full_report, train_and_evaluate(splits, order, train, no_sc)});

  const EnsembleReport ensemble = train_and_evaluate_ensemble(splits, train.seed, train, full);
  report.rows.push_back({"model ensemble", "Ensemble (vote)", "Average of members", ensemble.voted,
                         ensemble.member_average});

  ModelConfig no_att = full;
  no_att.attention = false;
  report.rows.push_back({"recurrent attribute attention", "Attention", "No attention", full_report,
                         train_and_evaluate(splits, order, train, no_att)});
  return report;
}

std::vector<Dataset> nested_subsets(const Dataset& train, std::span<const double> fractions, std::uint64_t seed) {
  std::vector<std::size_t> perm(train.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<Dataset> out;
  for (double f : fractions) {
    require(f > 0.0 && f <= 1.0, "robustness: fractions must lie in (0, 1]");
    const auto n = static_cast<std::size_t>(std::floor(f * static_cast<double>(train.size())));
    require(n >= 1, "robustness: subset would be empty");
    std::vector<std::size_t> picked(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(picked.begin(), picked.end());
    Dataset d;
    for (std::size_t i : picked) d.samples.push_back(train.samples[i]);
    out.push_back(std::move(d));
  }
  return out;
}

RobustnessReport run_robustness(const DatasetSplits& splits, const TrainConfig& train, const ModelConfig& model,
                                std::span<const double> fractions) {
  const OrderSpec order = frequent_first(splits.vocab);
  const std::vector<Dataset> subsets = nested_subsets(splits.train, fractions, mix_seed(train.seed, 11));
  RobustnessReport report;
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    DatasetSplits s{subsets[i], splits.test, splits.vocab};
    s.vocab.train_frequency = label_frequencies(subsets[i], s.vocab.names.size());
    report.rows.push_back({fractions[i], subsets[i].size(), train_and_evaluate(s, order, train, model)});
  }
  return report;
}

std::string format_ablation(const AblationReport& report) {
  std::ostringstream os;
  for (const AblationRow& row : report.rows) {
    os << row.name << '\n';
    const MetricsRow table[] = {{row.full_label, row.full}, {row.variant_label, row.variant}};
    os << format_table(table);
    os << "delta (full - variant): mAP^cls " << delta(row.full.mean_ap, row.variant.mean_ap) << "  mPrc^ins "
       << signed_points(row.full.precision, row.variant.precision) << "  mRcl^ins "
       << signed_points(row.full.recall, row.variant.recall) << "  F1^ins "
       << signed_points(row.full.f1, row.variant.f1) << "\n\n";
  }
  return os.str();
}

std::string format_robustness(const RobustnessReport& report) {
  std::vector<MetricsRow> rows;
  for (const RobustnessRow& r : report.rows) {
    char label[64];
    std::snprintf(label, sizeof label, "%3.0f%% (%zu)", 100.0 * r.fraction, r.train_size);
    rows.push_back({label, r.report});
  }
  return format_table(rows);
}

nlohmann::json to_json(const AblationReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationRow& r : report.rows) {
    rows.push_back({{"ablation", r.name},
                    {"full_label", r.full_label},
                    {"variant_label", r.variant_label},
                    {"full", to_json(r.full)},
                    {"variant", to_json(r.variant)}});
  }
  return {{"rows", rows}};
}

nlohmann::json to_json(const RobustnessReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const RobustnessRow& r : report.rows) {
    nlohmann::json j = to_json(r.report);
    j["fraction"] = r.fraction;
    j["train_size"] = r.train_size;
    rows.push_back(std::move(j));
  }
  return {{"rows", rows}};
}

}  // namespace jrl
