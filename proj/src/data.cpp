#include "jrl/data.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "jrl/errors.hpp"

namespace jrl {

using nlohmann::json;

void AttributeVocab::validate() const {
  const std::size_t n = names.size();
  require(n > 0, "vocab: no attributes");
  std::set<std::string> unique(names.begin(), names.end());
  require(unique.size() == n, "vocab: attribute names are not unique");
  require(train_frequency.empty() || train_frequency.size() == n, "vocab: frequency count mismatch");
  for (double f : train_frequency) require(f >= 0.0 && f <= 1.0, "vocab: frequency outside [0,1]");
  require(region_hint.empty() || region_hint.size() == n, "vocab: region_hint count mismatch");
  for (int r : region_hint) require(r >= 0, "vocab: negative region hint");
  require(granularity.empty() || granularity.size() == n, "vocab: granularity count mismatch");
}

AttributeSequence AttributeSequence::from_tokens(const std::vector<int>& tokens, std::size_t n_attr) {
  require(!tokens.empty() && tokens.back() == static_cast<int>(n_attr),
          "attribute sequence must end with the stop token");
  AttributeSequence seq{std::vector<int>(tokens.begin(), tokens.end() - 1)};
  seq.validate(n_attr);
  return seq;
}

std::vector<int> AttributeSequence::tokens(std::size_t n_attr) const {
  std::vector<int> out = attributes;
  out.push_back(static_cast<int>(n_attr));
  return out;
}

void AttributeSequence::validate(std::size_t n_attr) const {
  std::vector<bool> seen(n_attr, false);
  for (int a : attributes) {
    if (a == static_cast<int>(n_attr)) throw ContractError("attribute sequence: stop token before the end");
    if (a < 0 || a > static_cast<int>(n_attr)) {
      throw ContractError("attribute sequence: token " + std::to_string(a) + " out of range");
    }
    if (seen[static_cast<std::size_t>(a)]) {
      throw ContractError("attribute sequence: duplicate attribute " + std::to_string(a));
    }
    seen[static_cast<std::size_t>(a)] = true;
  }
}

std::string to_string(OrderKind kind) {
  switch (kind) {
    case OrderKind::kRareFirst: return "rare_first";
    case OrderKind::kFrequentFirst: return "frequent_first";
    case OrderKind::kTopDown: return "top_down";
    case OrderKind::kBottomUp: return "bottom_up";
    case OrderKind::kGlobalLocal: return "global_local";
    case OrderKind::kLocalGlobal: return "local_global";
    case OrderKind::kRandom: return "random";
  }
  return "random";
}

OrderKind order_kind_from_string(const std::string& name) {
  for (OrderKind k : {OrderKind::kRareFirst, OrderKind::kFrequentFirst, OrderKind::kTopDown, OrderKind::kBottomUp,
                      OrderKind::kGlobalLocal, OrderKind::kLocalGlobal, OrderKind::kRandom}) {
    if (to_string(k) == name) return k;
  }
  throw ContractError("unknown order kind '" + name + "'");
}

std::string OrderSpec::label() const {
  if (kind == OrderKind::kRandom) return "random(" + std::to_string(seed) + ")";
  return to_string(kind);
}

void OrderSpec::validate(std::size_t n_attr) const {
  require(permutation.size() == n_attr, "order: permutation length does not match n_attr");
  std::vector<bool> seen(n_attr, false);
  for (int a : permutation) {
    require(a >= 0 && static_cast<std::size_t>(a) < n_attr, "order: index out of range");
    require(!seen[static_cast<std::size_t>(a)], "order: permutation is not a bijection");
    seen[static_cast<std::size_t>(a)] = true;
  }
}

std::size_t Dataset::regions() const { return samples.empty() ? 0 : samples.front().regions.size(); }
std::size_t Dataset::region_dim() const {
  return samples.empty() || samples.front().regions.empty() ? 0 : samples.front().regions.front().size();
}
std::size_t Dataset::global_dim() const { return samples.empty() ? 0 : samples.front().global_feature.size(); }
std::size_t Dataset::n_attr() const { return samples.empty() ? 0 : samples.front().labels.size(); }

void Dataset::validate() const {
  const std::size_t m = regions(), dr = region_dim(), dg = global_dim(), n = n_attr();
  std::set<std::string> ids;
  for (const Sample& s : samples) {
    require(ids.insert(s.id).second, "dataset: duplicate id '" + s.id + "'");
    require(s.regions.size() == m, "dataset: sample '" + s.id + "' has a different region count");
    for (const Vec& r : s.regions) {
      require(r.size() == dr, "dataset: sample '" + s.id + "' has a different region feature size");
      require(all_finite(r), "dataset: sample '" + s.id + "' has non-finite region features");
    }
    require(s.global_feature.size() == dg, "dataset: sample '" + s.id + "' has a different global feature size");
    require(all_finite(s.global_feature), "dataset: sample '" + s.id + "' has a non-finite global feature");
    require(s.labels.size() == n, "dataset: sample '" + s.id + "' has a different label count");
    for (int y : s.labels) require(y == 0 || y == 1, "dataset: sample '" + s.id + "' has a non-binary label");
  }
}

namespace {

std::vector<int> sorted_indices(std::size_t n, auto&& less) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), less);
  return idx;
}

OrderSpec make_order(OrderKind kind, std::vector<int> permutation) {
  return OrderSpec{kind, 0, std::move(permutation)};
}

}  // namespace

OrderSpec random_order(std::size_t n_attr, std::uint64_t seed) {
  std::vector<int> perm(n_attr);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<int>(perm));
  return OrderSpec{OrderKind::kRandom, seed, std::move(perm)};
}

std::vector<OrderSpec> build_orders(const AttributeVocab& vocab, std::size_t n_random, std::uint64_t base_seed) {
  vocab.validate();
  const std::size_t n = vocab.size();
  require(vocab.train_frequency.size() == n, "build_orders: vocab frequencies are not populated");
  const auto& freq = vocab.train_frequency;

  std::vector<OrderSpec> orders;
  // stable_sort over the identity keeps ties in index order.
  orders.push_back(make_order(OrderKind::kRareFirst, sorted_indices(n, [&](int a, int b) { return freq[a] < freq[b]; })));
  orders.push_back(
      make_order(OrderKind::kFrequentFirst, sorted_indices(n, [&](int a, int b) { return freq[a] > freq[b]; })));

  std::size_t missing = 0;
  if (vocab.has_region_hints()) {
    const auto& hint = vocab.region_hint;
    orders.push_back(make_order(OrderKind::kTopDown, sorted_indices(n, [&](int a, int b) { return hint[a] < hint[b]; })));
    orders.push_back(
        make_order(OrderKind::kBottomUp, sorted_indices(n, [&](int a, int b) { return hint[a] > hint[b]; })));
  } else {
    missing += 2;
  }
  if (vocab.has_granularity()) {
    const auto& gran = vocab.granularity;
    auto grouped = [&](Granularity first) {
      return sorted_indices(n, [&](int a, int b) {
        const bool ga = gran[a] == first, gb = gran[b] == first;
        if (ga != gb) return ga;
        return freq[a] > freq[b];
      });
    };
    orders.push_back(make_order(OrderKind::kGlobalLocal, grouped(Granularity::kGlobal)));
    orders.push_back(make_order(OrderKind::kLocalGlobal, grouped(Granularity::kLocal)));
  } else {
    missing += 2;
  }
  const std::size_t randoms = n_random + missing;
  for (std::size_t r = 0; r < randoms; ++r) orders.push_back(random_order(n, base_seed + r));
  for (const OrderSpec& o : orders) o.validate(n);
  return orders;
}

AttributeSequence labels_to_sequence(const AttributeLabels& labels, const OrderSpec& order) {
  order.validate(labels.size());
  AttributeSequence seq;
  for (int a : order.permutation) {
    const int y = labels[static_cast<std::size_t>(a)];
    require(y == 0 || y == 1, "labels_to_sequence: non-binary label");
    if (y == 1) seq.attributes.push_back(a);
  }
  return seq;
}

AttributeLabels sequence_to_labels(const AttributeSequence& seq, std::size_t n_attr) {
  seq.validate(n_attr);
  AttributeLabels labels(n_attr, 0);
  for (int a : seq.attributes) labels[static_cast<std::size_t>(a)] = 1;
  return labels;
}

std::vector<double> label_frequencies(const Dataset& data, std::size_t n_attr) {
  std::vector<double> freq(n_attr, 0.0);
  if (data.samples.empty()) return freq;
  for (const Sample& s : data.samples) {
    for (std::size_t j = 0; j < n_attr; ++j) freq[j] += s.labels[j];
  }
  for (double& f : freq) f /= static_cast<double>(data.samples.size());
  return freq;
}

namespace {

Vec vec_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw ContractError(what + " is not an array");
  std::vector<double> v;
  v.reserve(j.size());
  for (const json& x : j) {
    if (!x.is_number()) throw ContractError(what + " contains a non-number");
    v.push_back(x.get<double>());
  }
  return Vec(std::move(v));
}

json vec_to_json(const Vec& v) { return json(std::vector<double>(v.begin(), v.end())); }

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "': path not found or unreadable");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw IoError(where + ": malformed JSON (" + e.what() + ")");
    }
    try {
      Sample s;
      s.id = j.at("id").get<std::string>();
      for (const json& r : j.at("regions")) s.regions.push_back(vec_from_json(r, where + " regions"));
      s.global_feature = vec_from_json(j.at("global"), where + " global");
      s.labels = j.at("attrs").get<std::vector<int>>();
      data.samples.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ContractError(where + ": " + e.what());
    }
  }
  data.validate();
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  for (const Sample& s : data.samples) {
    json j;
    j["id"] = s.id;
    json regions = json::array();
    for (const Vec& r : s.regions) regions.push_back(vec_to_json(r));
    j["regions"] = std::move(regions);
    j["global"] = vec_to_json(s.global_feature);
    j["attrs"] = s.labels;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

AttributeVocab read_vocab(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": malformed JSON (" + e.what() + ")");
  }
  AttributeVocab vocab;
  try {
    vocab.names = j.at("names").get<std::vector<std::string>>();
    if (j.contains("region_hint") && !j["region_hint"].is_null()) {
      const json& hints = j["region_hint"];
      const bool complete = std::all_of(hints.begin(), hints.end(), [](const json& h) { return h.is_number_integer(); });
      if (complete) vocab.region_hint = hints.get<std::vector<int>>();
    }
    if (j.contains("granularity") && !j["granularity"].is_null()) {
      const json& gran = j["granularity"];
      const bool complete = std::all_of(gran.begin(), gran.end(), [](const json& g) { return g.is_string(); });
      if (complete) {
        for (const json& g : gran) {
          const auto s = g.get<std::string>();
          if (s == "global") {
            vocab.granularity.push_back(Granularity::kGlobal);
          } else if (s == "local") {
            vocab.granularity.push_back(Granularity::kLocal);
          } else {
            throw ContractError(path.string() + ": granularity must be \"global\" or \"local\", got \"" + s + "\"");
          }
        }
      }
    }
  } catch (const json::exception& e) {
    throw ContractError(path.string() + ": " + e.what());
  }
  vocab.validate();
  return vocab;
}

void write_vocab(const AttributeVocab& vocab, const std::filesystem::path& path) {
  json j;
  j["names"] = vocab.names;
  if (vocab.has_region_hints()) j["region_hint"] = vocab.region_hint;
  if (vocab.has_granularity()) {
    json gran = json::array();
    for (Granularity g : vocab.granularity) gran.push_back(g == Granularity::kGlobal ? "global" : "local");
    j["granularity"] = std::move(gran);
  }
  std::ofstream out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

DatasetSplits read_splits(const std::filesystem::path& dir, const std::optional<std::filesystem::path>& vocab_path) {
  DatasetSplits splits;
  splits.train = read_dataset(dir / "train.jsonl");
  splits.test = read_dataset(dir / "test.jsonl");
  splits.vocab = read_vocab(vocab_path.value_or(dir / "vocab.json"));
  const std::size_t n = splits.vocab.size();
  require(splits.train.n_attr() == n, "dataset: training labels do not match the vocab size");
  require(splits.test.size() == 0 || splits.test.n_attr() == n, "dataset: test labels do not match the vocab size");
  require(splits.test.size() == 0 || (splits.test.regions() == splits.train.regions() &&
                                      splits.test.region_dim() == splits.train.region_dim() &&
                                      splits.test.global_dim() == splits.train.global_dim()),
          "dataset: train and test feature shapes differ");
  splits.vocab.train_frequency = label_frequencies(splits.train, n);
  return splits;
}

void write_splits(const DatasetSplits& splits, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_dataset(splits.train, dir / "train.jsonl");
  write_dataset(splits.test, dir / "test.jsonl");
  write_vocab(splits.vocab, dir / "vocab.json");
}

}  // namespace jrl
