#include "jrl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <omp.h>

#include "jrl/errors.hpp"
#include "jrl/hash.hpp"

namespace jrl {

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> first_moment,
                 std::span<double> second_moment, std::uint64_t step, const AdamHyper& hyper) {
  require(step >= 1, "adam_update: step count starts at 1");
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    first_moment[i] = hyper.beta1 * first_moment[i] + (1.0 - hyper.beta1) * grad[i];
    second_moment[i] = hyper.beta2 * second_moment[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double m_hat = first_moment[i] / c1;
    const double v_hat = second_moment[i] / c2;
    param[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
  }
}

AdamState AdamState::for_params(const JrlParams& params, const AdamHyper& hyper) {
  AdamState state;
  state.hyper = hyper;
  state.first_moment = params;
  state.second_moment = params;
  scale_in_place(state.first_moment, 0.0);
  scale_in_place(state.second_moment, 0.0);
  return state;
}

void adam_step(AdamState& state, JrlParams& params, const JrlParams& grads) {
  struct Slot {
    std::string name;
    std::span<double> param;
    std::span<const double> grad;
    std::span<double> m, v;
  };
  std::vector<Slot> slots;
  for_each_tensor(params, [&](const std::string& name, auto& t) { slots.push_back({name, t.values(), {}, {}, {}}); });
  std::size_t k = 0;
  auto expect = [&](std::size_t size, const char* what) {
    require(k < slots.size() && slots[k].param.size() == size,
            std::string("adam_step: ") + what + " shape mismatch at " + (k < slots.size() ? slots[k].name : "?"));
  };
  for_each_tensor(grads, [&](const std::string&, const auto& t) {
    expect(t.values().size(), "gradient");
    slots[k++].grad = t.values();
  });
  require(k == slots.size(), "adam_step: gradient tensor count mismatch");
  k = 0;
  for_each_tensor(state.first_moment, [&](const std::string&, auto& t) {
    expect(t.values().size(), "first moment");
    slots[k++].m = t.values();
  });
  k = 0;
  for_each_tensor(state.second_moment, [&](const std::string&, auto& t) {
    expect(t.values().size(), "second moment");
    slots[k++].v = t.values();
  });
  for (const Slot& s : slots) {
    if (!all_finite(s.grad)) throw NumericalError("adam_step: non-finite gradient in tensor " + s.name);
  }
  ++state.step;
  for (const Slot& s : slots) adam_update(s.param, s.grad, s.m, s.v, state.step, state.hyper);
}

void TrainConfig::validate() const {
  require(batch_size >= 1, "train config: batch size must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "train config: learning rate must be positive");
  require(context_refresh >= 1, "train config: context refresh cadence must be >= 1");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, "train config: validation fraction in [0,1)");
  require(clip_norm > 0.0, "train config: clip threshold must be positive");
}

std::vector<Vec> ContextCache::exemplars_for(std::size_t query) const {
  std::vector<Vec> out;
  if (query >= neighbours.size()) return out;
  out.reserve(neighbours[query].size());
  for (std::size_t pos : neighbours[query]) out.push_back(contexts[pos]);
  return out;
}

ExemplarIndex build_index(const Dataset& pool) {
  std::vector<std::string> ids;
  std::vector<Vec> features;
  ids.reserve(pool.size());
  features.reserve(pool.size());
  for (const Sample& s : pool.samples) {
    ids.push_back(s.id);
    features.push_back(s.global_feature);
  }
  return ExemplarIndex(std::move(ids), std::move(features));
}

std::vector<std::vector<std::size_t>> neighbour_lists(const ExemplarIndex& index, const Dataset& queries,
                                                      std::size_t k, bool exclude_self) {
  std::vector<std::vector<std::size_t>> out(queries.size());
  const auto n = static_cast<std::ptrdiff_t>(queries.size());
  std::vector<std::string> errors(queries.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t q = 0; q < n; ++q) {
    const Sample& s = queries.samples[static_cast<std::size_t>(q)];
    try {
      out[static_cast<std::size_t>(q)] =
          index.nearest(s.global_feature, k, exclude_self ? std::optional<std::string>(s.id) : std::nullopt);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(q)] = e.what();
    }
  }
  for (const std::string& e : errors) {
    if (!e.empty()) throw ContractError(e);
  }
  return out;
}

std::vector<Vec> compute_contexts(const JrlParams& params, const ModelConfig& config, const Dataset& pool) {
  std::vector<Vec> out(pool.size());
  const auto n = static_cast<std::ptrdiff_t>(pool.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = encode(params, config, pool.samples[static_cast<std::size_t>(i)].regions).context;
  }
  return out;
}

double dataset_loss(const JrlParams& params, const ModelConfig& config, const Dataset& data, const OrderSpec& order,
                    const ContextCache* context) {
  if (data.size() == 0) return 0.0;
  std::vector<double> losses(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const Sample& s = data.samples[idx];
    const std::vector<Vec> exemplars = context != nullptr ? context->exemplars_for(idx) : std::vector<Vec>{};
    const SampleForward fwd =
        forward_sample(params, config, s.regions, exemplars, labels_to_sequence(s.labels, order), nullptr);
    losses[idx] = fwd.decode.loss;
  }
  return std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(losses.size());
}

namespace {

// Samples per gradient buffer. Chunks are reduced in index order, so the
// summed gradient does not depend on the thread count.
constexpr std::size_t kChunk = 4;

struct BatchWork {
  const JrlParams& params;
  const ModelConfig& config;
  const Dataset& data;
  const std::vector<AttributeSequence>& targets;
  const ContextCache* context;
  bool dropout;
  std::uint64_t dropout_seed;
};

// Accumulates the batch-mean gradient into `grads` and returns the summed
// per-sample loss.
double run_batch(const BatchWork& w, std::span<const std::size_t> batch, std::vector<JrlParams>& buffers,
                 JrlParams& grads, std::size_t epoch) {
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  while (buffers.size() < chunks) buffers.push_back(JrlParams::zeros(w.config));
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<std::string> errors(chunks);
  const double scale = 1.0 / static_cast<double>(batch.size());

#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
    JrlParams& buffer = buffers[static_cast<std::size_t>(c)];
    scale_in_place(buffer, 0.0);
    const std::size_t begin = static_cast<std::size_t>(c) * kChunk;
    const std::size_t end = std::min(batch.size(), begin + kChunk);
    try {
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = batch[b];
        const Sample& s = w.data.samples[idx];
        Rng dropout_rng(mix_seed(w.dropout_seed, idx));
        const std::vector<Vec> exemplars = w.context != nullptr ? w.context->exemplars_for(idx) : std::vector<Vec>{};
        SampleForward fwd = forward_sample(w.params, w.config, s.regions, exemplars, w.targets[idx],
                                           w.dropout ? &dropout_rng : nullptr);
        losses[b] = fwd.decode.loss;
        if (!std::isfinite(losses[b])) {
          throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " on sample '" + s.id + "'");
        }
        backward_full(w.params, w.config, std::move(fwd), scale, buffer);
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(c)] = e.what();
    }
  }
  for (const std::string& e : errors) {
    if (!e.empty()) throw NumericalError(e);
  }
  scale_in_place(grads, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) add_scaled(grads, buffers[c]);
  return std::accumulate(losses.begin(), losses.end(), 0.0);
}

Dataset subset(const Dataset& data, std::span<const std::size_t> indices) {
  Dataset out;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(data.samples[i]);
  return out;
}

}  // namespace

MemberResult train_member(const Dataset& train_all, const AttributeVocab& vocab, const OrderSpec& order,
                          const TrainConfig& config, const ModelConfig& model_config) {
  config.validate();
  model_config.validate();
  train_all.validate();
  require(train_all.size() > 0, "train_member: empty training set");
  require(train_all.n_attr() == model_config.n_attr && vocab.size() == model_config.n_attr,
          "train_member: dataset/vocab attribute count does not match the model config");
  require(train_all.regions() == model_config.regions && train_all.region_dim() == model_config.region_dim,
          "train_member: dataset region shape does not match the model config");
  order.validate(model_config.n_attr);

  // Optional validation split, drawn from a dedicated stream.
  Dataset train = train_all;
  Dataset validation;
  if (config.validation_fraction > 0.0) {
    std::vector<std::size_t> idx(train_all.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng split_rng(mix_seed(config.seed, 7));
    split_rng.shuffle(std::span<std::size_t>(idx));
    const auto n_val = static_cast<std::size_t>(config.validation_fraction * static_cast<double>(idx.size()));
    require(n_val < idx.size(), "train_member: validation split leaves no training data");
    std::sort(idx.begin(), idx.end() - static_cast<std::ptrdiff_t>(n_val));
    std::sort(idx.end() - static_cast<std::ptrdiff_t>(n_val), idx.end());
    train = subset(train_all, std::span(idx).first(idx.size() - n_val));
    validation = subset(train_all, std::span(idx).last(n_val));
  }

  MemberResult result;
  result.config = model_config;
  result.order = order;
  result.seed = config.seed;
  result.params = init_params(model_config, mix_seed(config.seed, 0));

  std::vector<AttributeSequence> targets;
  targets.reserve(train.size());
  for (const Sample& s : train.samples) targets.push_back(labels_to_sequence(s.labels, order));

  const bool use_context = model_config.context && model_config.context_k > 0;
  ContextCache cache;
  ContextCache validation_cache;
  if (use_context) {
    cache.index = build_index(train);
    cache.neighbours = neighbour_lists(cache.index, train, model_config.context_k, true);
    if (validation.size() > 0) {
      validation_cache.index = cache.index;
      validation_cache.neighbours = neighbour_lists(cache.index, validation, model_config.context_k, false);
    }
  }

  AdamHyper hyper;
  hyper.learning_rate = config.learning_rate;
  AdamState adam = AdamState::for_params(result.params, hyper);
  JrlParams grads = JrlParams::zeros(model_config);
  std::vector<JrlParams> buffers;

  std::vector<std::size_t> sample_order(train.size());
  std::iota(sample_order.begin(), sample_order.end(), std::size_t{0});
  Rng shuffle_rng(mix_seed(config.seed, 1));

  double best_validation = std::numeric_limits<double>::infinity();
  JrlParams best_params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (use_context && epoch % config.context_refresh == 0) {
      cache.contexts = compute_contexts(result.params, model_config, train);
    }
    shuffle_rng.shuffle(std::span<std::size_t>(sample_order));
    const BatchWork work{result.params, model_config, train, targets, use_context ? &cache : nullptr,
                         config.dropout && model_config.dropout > 0.0, mix_seed(config.seed, 2 + epoch)};
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < sample_order.size(); begin += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, sample_order.size() - begin);
      epoch_loss += run_batch(work, std::span(sample_order).subspan(begin, len), buffers, grads, epoch);
      if (config.clip) {
        const double norm = std::sqrt(squared_norm(grads));
        if (norm > config.clip_norm) scale_in_place(grads, config.clip_norm / norm);
      }
      adam_step(adam, result.params, grads);
    }
    epoch_loss /= static_cast<double>(train.size());
    if (!std::isfinite(epoch_loss)) throw NumericalError("non-finite epoch loss at epoch " + std::to_string(epoch));
    result.loss_log.push_back(epoch_loss);

    if (validation.size() > 0) {
      if (use_context) validation_cache.contexts = compute_contexts(result.params, model_config, train);
      const double val = dataset_loss(result.params, model_config, validation, order,
                                      use_context ? &validation_cache : nullptr);
      result.validation_log.push_back(val);
      if (val < best_validation) {
        best_validation = val;
        best_params = result.params;
        since_best = 0;
      } else if (config.patience > 0 && ++since_best >= config.patience) {
        break;
      }
    }
  }
  if (config.patience > 0 && !result.validation_log.empty()) result.params = best_params;
  result.final_loss = result.loss_log.empty() ? 0.0 : result.loss_log.back();
  return result;
}

EnsembleSpec EnsembleSpec::standard(const AttributeVocab& vocab, std::uint64_t base_seed) {
  EnsembleSpec spec;
  const std::vector<OrderSpec> orders = build_orders(vocab, kRandomOrders, base_seed);
  for (std::size_t i = 0; i < orders.size(); ++i) spec.members.push_back({orders[i], base_seed + i});
  return spec;
}

void EnsembleSpec::validate(std::size_t n_attr) const {
  require(members.size() == kEnsembleSize, "ensemble spec: expected exactly " + std::to_string(kEnsembleSize) +
                                               " members, got " + std::to_string(members.size()));
  std::set<std::uint64_t> seeds;
  for (const EnsembleMember& m : members) {
    m.order.validate(n_attr);
    require(seeds.insert(m.seed).second, "ensemble spec: member seeds must be distinct");
  }
}

nlohmann::json order_to_json(const OrderSpec& order) {
  return {{"kind", to_string(order.kind)}, {"seed", order.seed}, {"permutation", order.permutation}};
}

OrderSpec order_from_json(const nlohmann::json& j) {
  OrderSpec o;
  o.kind = order_kind_from_string(j.at("kind").get<std::string>());
  o.seed = j.at("seed").get<std::uint64_t>();
  o.permutation = j.at("permutation").get<std::vector<int>>();
  return o;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json members = nlohmann::json::array();
  for (const ManifestEntry& e : manifest.members) {
    members.push_back({{"order", order_to_json(e.order)},
                       {"order_kind", to_string(e.order.kind)},
                       {"seed", e.seed},
                       {"checkpoint", e.checkpoint},
                       {"loss_log", e.loss_log},
                       {"status", e.status},
                       {"error", e.error},
                       {"final_loss", e.final_loss},
                       {"checkpoint_hash", e.checkpoint_hash}});
  }
  const nlohmann::json j = {{"config", to_json(manifest.config)}, {"complete", manifest.complete}, {"members", members}};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "': path not found or unreadable");
  Manifest m;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    m.config = model_config_from_json(j.at("config"));
    m.complete = j.at("complete").get<bool>();
    for (const nlohmann::json& e : j.at("members")) {
      ManifestEntry entry;
      entry.order = order_from_json(e.at("order"));
      entry.seed = e.at("seed").get<std::uint64_t>();
      entry.checkpoint = e.at("checkpoint").get<std::string>();
      entry.loss_log = e.value("loss_log", "");
      entry.status = e.at("status").get<std::string>();
      entry.error = e.value("error", "");
      entry.final_loss = e.value("final_loss", 0.0);
      entry.checkpoint_hash = e.value("checkpoint_hash", "");
      m.members.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest '" + path.string() + "' is malformed: " + e.what());
  }
  return m;
}

void write_loss_log(const std::vector<double>& losses, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write loss log '" + path.string() + "'");
  out << "epoch,loss\n";
  out << std::setprecision(17);
  for (std::size_t e = 0; e < losses.size(); ++e) out << e + 1 << ',' << losses[e] << '\n';
}

Manifest train_ensemble(const Dataset& train, const AttributeVocab& vocab, const EnsembleSpec& spec,
                        const TrainConfig& config, const ModelConfig& model_config,
                        const std::filesystem::path& out_dir) {
  spec.validate(model_config.n_attr);
  std::filesystem::create_directories(out_dir);
  Manifest manifest;
  manifest.config = model_config;
  manifest.members.resize(spec.members.size());

  const auto n = static_cast<std::ptrdiff_t>(spec.members.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const EnsembleMember& member = spec.members[idx];
    ManifestEntry& entry = manifest.members[idx];
    std::ostringstream stem;
    stem << "member_" << std::setw(2) << std::setfill('0') << idx;
    entry.order = member.order;
    entry.seed = member.seed;
    entry.checkpoint = stem.str() + ".ckpt";
    entry.loss_log = stem.str() + "_loss.csv";
    try {
      TrainConfig member_config = config;
      member_config.seed = member.seed;
      const MemberResult result = train_member(train, vocab, member.order, member_config, model_config);
      const nlohmann::json meta = {{"order", order_to_json(member.order)}, {"seed", member.seed}};
      save_checkpoint(result.params, model_config, out_dir / entry.checkpoint, meta);
      write_loss_log(result.loss_log, out_dir / entry.loss_log);
      entry.final_loss = result.final_loss;
      entry.checkpoint_hash = file_hash(out_dir / entry.checkpoint);
      entry.status = "ok";
    } catch (const std::exception& e) {
      entry.status = "failed";
      entry.error = e.what();
    }
  }
  manifest.complete = std::all_of(manifest.members.begin(), manifest.members.end(),
                                  [](const ManifestEntry& e) { return e.status == "ok"; });
  write_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace jrl
