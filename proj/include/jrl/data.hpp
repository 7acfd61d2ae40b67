#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "jrl/numerics.hpp"

namespace jrl {

// m region feature vectors, top-down.
using RegionSequence = std::vector<Vec>;
// Binary label vector over n_attr attributes.
using AttributeLabels = std::vector<int>;

enum class Granularity { kGlobal, kLocal };

struct AttributeVocab {
  std::vector<std::string> names;
  std::vector<double> train_frequency;
  // Both metadata vectors are either empty (absent) or n_attr long.
  std::vector<int> region_hint;
  std::vector<Granularity> granularity;

  std::size_t size() const { return names.size(); }
  bool has_region_hints() const { return !region_hint.empty(); }
  bool has_granularity() const { return !granularity.empty(); }
  void validate() const;
};

// Attribute emission order. Token values: attribute indices in [0, n_attr);
// the stop token is n_attr.
struct AttributeSequence {
  std::vector<int> attributes;  // stop is implicit after the last attribute

  static AttributeSequence from_tokens(const std::vector<int>& tokens, std::size_t n_attr);
  std::vector<int> tokens(std::size_t n_attr) const;
  std::size_t length() const { return attributes.size() + 1; }
  void validate(std::size_t n_attr) const;

  bool operator==(const AttributeSequence&) const = default;
};

enum class OrderKind { kRareFirst, kFrequentFirst, kTopDown, kBottomUp, kGlobalLocal, kLocalGlobal, kRandom };

std::string to_string(OrderKind kind);
OrderKind order_kind_from_string(const std::string& name);

struct OrderSpec {
  OrderKind kind = OrderKind::kRandom;
  std::uint64_t seed = 0;        // only meaningful for kRandom
  std::vector<int> permutation;  // permutation[rank] = attribute index

  std::string label() const;
  void validate(std::size_t n_attr) const;
};

struct Sample {
  std::string id;
  RegionSequence regions;
  Vec global_feature;
  AttributeLabels labels;
};

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t regions() const;
  std::size_t region_dim() const;
  std::size_t global_dim() const;
  std::size_t n_attr() const;
  void validate() const;
};

struct DatasetSplits {
  Dataset train;
  Dataset test;
  AttributeVocab vocab;
};

inline constexpr std::size_t kEnsembleSize = 10;
inline constexpr std::size_t kRandomOrders = 4;

// Ten orders: rare-first, frequent-first, top-down, bottom-up, global-local,
// local-global and n_random random permutations seeded base_seed, base_seed+1,
// .... Orders whose metadata is missing are replaced by further random
// permutations so the ensemble size stays at ten.
std::vector<OrderSpec> build_orders(const AttributeVocab& vocab, std::size_t n_random = kRandomOrders,
                                    std::uint64_t base_seed = 0);
OrderSpec random_order(std::size_t n_attr, std::uint64_t seed);

AttributeSequence labels_to_sequence(const AttributeLabels& labels, const OrderSpec& order);
AttributeLabels sequence_to_labels(const AttributeSequence& seq, std::size_t n_attr);

// Per-attribute positive rate.
std::vector<double> label_frequencies(const Dataset& data, std::size_t n_attr);

// JSON-lines dataset and vocab sidecar.
Dataset read_dataset(const std::filesystem::path& path);
void write_dataset(const Dataset& data, const std::filesystem::path& path);
AttributeVocab read_vocab(const std::filesystem::path& path);
void write_vocab(const AttributeVocab& vocab, const std::filesystem::path& path);

// Directory layout used by the CLI: train.jsonl, test.jsonl, vocab.json.
// Frequencies are recomputed from the training split on load.
DatasetSplits read_splits(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& vocab_path);
void write_splits(const DatasetSplits& splits, const std::filesystem::path& dir);

struct SynthSpec {
  std::size_t n_attr = 12;
  std::size_t regions = 6;
  std::size_t region_dim = 16;
  std::size_t global_dim = 16;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  double noise_sigma = 0.6;
  // P(y_j = 1 | y_{j-1}) = (1 - s) p_j + s y_{j-1}.
  double correlation_strength = 0.6;
  // Attributes whose signature is spread over every region; the rest are
  // confined to a single region.
  std::size_t global_attributes = 3;
  bool orthonormal_signatures = false;
  double base_rate_min = 0.1;
  double base_rate_max = 0.5;

  void validate() const;
};

struct SyntheticData {
  DatasetSplits splits;
  std::vector<Vec> signatures;   // one per attribute, length region_dim
  std::vector<int> span_begin;   // first region an attribute's signature touches
  std::vector<int> span_end;     // one past the last
  std::vector<double> base_rates;
};

SyntheticData generate_synthetic(const SynthSpec& spec, Rng& rng);

}  // namespace jrl
