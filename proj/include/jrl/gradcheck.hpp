#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "jrl/model.hpp"

namespace jrl {

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

struct TensorCheck {
  std::string name;
  std::size_t count = 0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::vector<TensorCheck> tensors;
};

// A random instance for the full model: parameters, one region sequence,
// exemplar contexts (frozen) and a target attribute sequence.
struct GradCheckInstance {
  JrlParams params;
  RegionSequence regions;
  std::vector<Vec> exemplars;
  AttributeSequence target;
};

GradCheckInstance make_gradcheck_instance(const ModelConfig& config, std::uint64_t seed);

// Compares backward_full against central differences of the forward loss
// for every parameter entry. Dropout is not applied.
GradCheckReport gradient_check(const ModelConfig& config, const GradCheckInstance& instance, double epsilon = 1e-5);

}  // namespace jrl
