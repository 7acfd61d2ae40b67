#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jrl/data.hpp"
#include "jrl/model.hpp"

namespace jrl {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam update of one tensor; `step` is the 1-based step count.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> first_moment,
                 std::span<double> second_moment, std::uint64_t step, const AdamHyper& hyper);

struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  JrlParams first_moment;
  JrlParams second_moment;

  static AdamState for_params(const JrlParams& params, const AdamHyper& hyper);
};

// Throws ContractError on shape disagreement and NumericalError (naming the
// tensor) on non-finite gradients; params are untouched in both cases.
void adam_step(AdamState& state, JrlParams& params, const JrlParams& grads);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  double learning_rate = 1e-4;
  bool dropout = true;
  bool clip = false;
  double clip_norm = 5.0;
  std::size_t context_refresh = 1;  // epochs between exemplar-context refreshes
  double validation_fraction = 0.0;
  std::size_t patience = 0;  // early-stopping patience in epochs; 0 disables

  void validate() const;
};

// Exemplar neighbourhoods (static: global features do not change) and their
// context vectors (refreshed from the current encoder).
struct ContextCache {
  ExemplarIndex index;
  std::vector<std::vector<std::size_t>> neighbours;  // per query, positions in index
  std::vector<Vec> contexts;                         // per index entry

  std::vector<Vec> exemplars_for(std::size_t query) const;
};

ExemplarIndex build_index(const Dataset& pool);
// Neighbour lists for `queries`; with exclude_self the query's own id is
// never returned.
std::vector<std::vector<std::size_t>> neighbour_lists(const ExemplarIndex& index, const Dataset& queries,
                                                      std::size_t k, bool exclude_self);
std::vector<Vec> compute_contexts(const JrlParams& params, const ModelConfig& config, const Dataset& pool);

struct MemberResult {
  JrlParams params;
  ModelConfig config;
  OrderSpec order;
  std::uint64_t seed = 0;
  std::vector<double> loss_log;        // one entry per epoch
  std::vector<double> validation_log;  // empty unless a validation split is used
  double final_loss = 0.0;
};

MemberResult train_member(const Dataset& train, const AttributeVocab& vocab, const OrderSpec& order,
                          const TrainConfig& config, const ModelConfig& model_config);

// Mean per-step loss over `data` without dropout.
double dataset_loss(const JrlParams& params, const ModelConfig& config, const Dataset& data, const OrderSpec& order,
                    const ContextCache* context);

struct EnsembleMember {
  OrderSpec order;
  std::uint64_t seed = 0;
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;

  // The ten standard orders with seeds base_seed, base_seed + 1, ...
  static EnsembleSpec standard(const AttributeVocab& vocab, std::uint64_t base_seed);
  void validate(std::size_t n_attr) const;
};

struct ManifestEntry {
  OrderSpec order;
  std::uint64_t seed = 0;
  std::string checkpoint;  // relative to the manifest's directory
  std::string loss_log;
  std::string status = "pending";  // ok | failed | pending
  std::string error;
  double final_loss = 0.0;
  std::string checkpoint_hash;
};

struct Manifest {
  ModelConfig config;
  std::vector<ManifestEntry> members;
  bool complete = false;
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

void write_loss_log(const std::vector<double>& losses, const std::filesystem::path& path);
nlohmann::json order_to_json(const OrderSpec& order);
OrderSpec order_from_json(const nlohmann::json& j);

// Trains every member (in parallel where threads allow) and writes
// member_XX.ckpt, member_XX_loss.csv and manifest.json into out_dir.
// A failing member is recorded in the manifest instead of aborting the rest.
Manifest train_ensemble(const Dataset& train, const AttributeVocab& vocab, const EnsembleSpec& spec,
                        const TrainConfig& config, const ModelConfig& model_config,
                        const std::filesystem::path& out_dir);

}  // namespace jrl
