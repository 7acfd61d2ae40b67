#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jrl/numerics.hpp"

namespace jrl {

// Exemplar pool for similarity search in global-feature space. Built from
// the training split only and immutable afterwards.
class ExemplarIndex {
 public:
  ExemplarIndex() = default;
  ExemplarIndex(std::vector<std::string> ids, std::vector<Vec> features);

  std::size_t size() const { return ids_.size(); }
  const std::string& id(std::size_t i) const { return ids_[i]; }
  const Vec& feature(std::size_t i) const { return features_[i]; }
  std::optional<std::size_t> position(const std::string& id) const;

  // Positions of the k nearest entries by L2 distance, ascending distance,
  // ties broken by ascending id. `exclude_id` is never returned.
  std::vector<std::size_t> nearest(const Vec& query, std::size_t k,
                                   const std::optional<std::string>& exclude_id = std::nullopt) const;

 private:
  std::vector<std::string> ids_;
  std::vector<Vec> features_;
  std::vector<std::size_t> by_id_;  // positions sorted by id
};

std::vector<std::string> knn(const ExemplarIndex& index, const Vec& query, std::size_t k,
                             const std::optional<std::string>& exclude_id = std::nullopt);

// Per component: true when the query itself attained the maximum (ties go to
// the query).
struct FuseTape {
  bool live = false;
  std::vector<bool> query_wins;
};

struct Fused {
  Vec context;  // z*
  FuseTape tape;
};

// Element-wise max over the query context and its exemplar contexts.
Fused max_fuse(const Vec& z, std::span<const Vec> exemplar_contexts);

// Subgradient of max_fuse with respect to the query context only; exemplar
// contexts are treated as constants.
Vec max_fuse_backward(FuseTape&& tape, const Vec& grad_fused);

}  // namespace jrl
