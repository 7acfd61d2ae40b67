#include <cmath>
#include <cstdio>
#include <numeric>

#include "jrl/data.hpp"
#include "jrl/errors.hpp"

namespace jrl {

void SynthSpec::validate() const {
  require(n_attr >= 1 && regions >= 1 && region_dim >= 1, "synth: n_attr, regions and region_dim must be positive");
  require(global_dim == region_dim, "synth: the global feature is the region mean, so global_dim must equal region_dim");
  require(n_train >= 1, "synth: n_train must be positive");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "synth: noise_sigma must be finite and >= 0");
  require(correlation_strength >= 0.0 && correlation_strength <= 1.0, "synth: correlation_strength must be in [0,1]");
  require(global_attributes <= n_attr, "synth: more global attributes than attributes");
  require(!orthonormal_signatures || n_attr <= region_dim, "synth: orthonormal signatures need n_attr <= region_dim");
  require(0.0 <= base_rate_min && base_rate_min <= base_rate_max && base_rate_max <= 1.0,
          "synth: base rates must satisfy 0 <= min <= max <= 1");
}

namespace {

std::vector<Vec> make_signatures(const SynthSpec& spec, Rng& rng) {
  std::vector<Vec> sigs;
  for (std::size_t a = 0; a < spec.n_attr; ++a) {
    Vec s(spec.region_dim);
    for (double& x : s) x = rng.normal();
    if (spec.orthonormal_signatures) {
      for (const Vec& prev : sigs) axpy(-dot(s, prev), prev, s);
    }
    s *= 1.0 / std::sqrt(dot(s, s));
    sigs.push_back(std::move(s));
  }
  return sigs;
}

Sample draw_sample(const SynthSpec& spec, const SyntheticData& world, std::string id, Rng& rng) {
  Sample s;
  s.id = std::move(id);
  s.labels.assign(spec.n_attr, 0);
  const double strength = spec.correlation_strength;
  for (std::size_t j = 0; j < spec.n_attr; ++j) {
    double p = world.base_rates[j];
    if (j > 0) p = (1.0 - strength) * p + strength * s.labels[j - 1];
    s.labels[j] = rng.bernoulli(p) ? 1 : 0;
  }
  s.regions.assign(spec.regions, Vec(spec.region_dim));
  for (std::size_t r = 0; r < spec.regions; ++r) {
    Vec& region = s.regions[r];
    for (std::size_t j = 0; j < spec.n_attr; ++j) {
      if (s.labels[j] == 0) continue;
      if (static_cast<int>(r) < world.span_begin[j] || static_cast<int>(r) >= world.span_end[j]) continue;
      region += world.signatures[j];
    }
    for (double& x : region) x += spec.noise_sigma * rng.normal();
  }
  s.global_feature = Vec(spec.region_dim);
  for (const Vec& region : s.regions) s.global_feature += region;
  s.global_feature *= 1.0 / static_cast<double>(spec.regions);
  return s;
}

std::string make_id(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%06zu", prefix, i);
  return buf;
}

}  // namespace

SyntheticData generate_synthetic(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  SyntheticData world;
  world.signatures = make_signatures(spec, rng);
  for (std::size_t j = 0; j < spec.n_attr; ++j) {
    world.base_rates.push_back(rng.uniform(spec.base_rate_min, spec.base_rate_max));
  }

  std::vector<int> order(spec.n_attr);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<int>(order));
  std::vector<bool> is_global(spec.n_attr, false);
  for (std::size_t g = 0; g < spec.global_attributes; ++g) is_global[static_cast<std::size_t>(order[g])] = true;

  AttributeVocab& vocab = world.splits.vocab;
  for (std::size_t j = 0; j < spec.n_attr; ++j) {
    char name[32];
    std::snprintf(name, sizeof name, "attr_%02zu", j);
    vocab.names.emplace_back(name);
    if (is_global[j]) {
      world.span_begin.push_back(0);
      world.span_end.push_back(static_cast<int>(spec.regions));
    } else {
      const int r = static_cast<int>(rng.below(spec.regions));
      world.span_begin.push_back(r);
      world.span_end.push_back(r + 1);
    }
    vocab.region_hint.push_back(world.span_begin.back());
    vocab.granularity.push_back(is_global[j] ? Granularity::kGlobal : Granularity::kLocal);
  }

  for (std::size_t i = 0; i < spec.n_train; ++i) {
    world.splits.train.samples.push_back(draw_sample(spec, world, make_id("train", i), rng));
  }
  for (std::size_t i = 0; i < spec.n_test; ++i) {
    world.splits.test.samples.push_back(draw_sample(spec, world, make_id("test", i), rng));
  }
  vocab.train_frequency = label_frequencies(world.splits.train, spec.n_attr);
  return world;
}

}  // namespace jrl
