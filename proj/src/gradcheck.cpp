#include "jrl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace jrl {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

namespace {
constexpr double kScale = 0.8;
}  // namespace

GradCheckInstance make_gradcheck_instance(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  GradCheckInstance inst;
  inst.params = JrlParams::zeros(config);
  Rng rng(mix_seed(seed, 99));
  // Weights larger than the training init keep the attention scores spread
  // out; near-uniform softmax weights make some gradients vanish below the
  // resolution of central differences.
  for_each_tensor(inst.params, [&](const std::string&, auto& t) {
    for (double& x : t.values()) x = rng.uniform(-kScale, kScale);
  });
  auto random_regions = [&] {
    RegionSequence r(config.regions, Vec(config.region_dim));
    for (Vec& v : r) {
      for (double& x : v) x = rng.normal();
    }
    return r;
  };
  inst.regions = random_regions();
  for (std::size_t e = 0; e < config.context_k; ++e) {
    inst.exemplars.push_back(encode(inst.params, config, random_regions()).context);
  }
  AttributeLabels labels(config.n_attr, 0);
  for (int& y : labels) y = rng.bernoulli(0.5) ? 1 : 0;
  if (config.n_attr >= 2 && std::accumulate(labels.begin(), labels.end(), 0) < 2) {
    labels[0] = 1;
    labels[1] = 1;
  }
  inst.target = labels_to_sequence(labels, random_order(config.n_attr, mix_seed(seed, 5)));
  return inst;
}

GradCheckReport gradient_check(const ModelConfig& config, const GradCheckInstance& inst, double epsilon) {
  JrlParams grads = JrlParams::zeros(config);
  backward_full(inst.params, config,
                forward_sample(inst.params, config, inst.regions, inst.exemplars, inst.target, nullptr), 1.0, grads);

  JrlParams probe = inst.params;
  auto loss = [&] { return forward_sample(probe, config, inst.regions, inst.exemplars, inst.target, nullptr).decode.loss; };

  std::vector<std::span<double>> probe_tensors;
  for_each_tensor(probe, [&](const std::string&, auto& t) { probe_tensors.push_back(t.values()); });

  GradCheckReport report;
  std::size_t k = 0;
  for_each_tensor(grads, [&](const std::string& name, const auto& g) {
    std::span<double> values = probe_tensors[k++];
    TensorCheck tc{name, values.size(), 0.0};
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = loss();
      values[i] = saved - epsilon;
      const double down = loss();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = g.values()[i];
      const double err = relative_error(analytic, numeric);
      tc.max_relative_error = std::max(tc.max_relative_error, err);
      if (err > report.max_relative_error || report.checked == 0) {
        report.max_relative_error = err;
        report.worst_tensor = name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
      ++report.checked;
    }
    report.tensors.push_back(tc);
  });
  return report;
}

}  // namespace jrl
