#include "jrl/context.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "jrl/errors.hpp"

namespace jrl {

ExemplarIndex::ExemplarIndex(std::vector<std::string> ids, std::vector<Vec> features)
    : ids_(std::move(ids)), features_(std::move(features)) {
  require(ids_.size() == features_.size(), "ExemplarIndex: id/feature count mismatch");
  if (!features_.empty()) {
    const std::size_t dim = features_.front().size();
    for (const Vec& f : features_) {
      require(f.size() == dim, "ExemplarIndex: global feature dimension varies");
      require(all_finite(f), "ExemplarIndex: non-finite global feature");
    }
  }
  by_id_.resize(ids_.size());
  std::iota(by_id_.begin(), by_id_.end(), std::size_t{0});
  std::sort(by_id_.begin(), by_id_.end(), [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });
  for (std::size_t i = 1; i < by_id_.size(); ++i) {
    require(ids_[by_id_[i - 1]] != ids_[by_id_[i]], "ExemplarIndex: duplicate id '" + ids_[by_id_[i]] + "'");
  }
}

std::optional<std::size_t> ExemplarIndex::position(const std::string& id) const {
  auto it = std::lower_bound(by_id_.begin(), by_id_.end(), id,
                             [&](std::size_t pos, const std::string& key) { return ids_[pos] < key; });
  if (it == by_id_.end() || ids_[*it] != id) return std::nullopt;
  return *it;
}

std::vector<std::size_t> ExemplarIndex::nearest(const Vec& query, std::size_t k,
                                                const std::optional<std::string>& exclude_id) const {
  std::optional<std::size_t> excluded;
  if (exclude_id) excluded = position(*exclude_id);
  const std::size_t available = size() - (excluded ? 1 : 0);
  if (k > available) {
    throw ContractError("knn: k = " + std::to_string(k) + " exceeds the " + std::to_string(available) +
                        " available exemplars");
  }
  if (k == 0) return {};

  struct Candidate {
    double distance;
    std::size_t pos;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    if (excluded && *excluded == i) continue;
    const Vec& f = features_[i];
    require(f.size() == query.size(), "knn: query dimension does not match the index");
    double sq = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double diff = f[j] - query[j];
      sq += diff * diff;
    }
    candidates.push_back({sq, i});
  }
  auto closer = [&](const Candidate& a, const Candidate& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return ids_[a.pos] < ids_[b.pos];
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), closer);
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = candidates[i].pos;
  return out;
}

std::vector<std::string> knn(const ExemplarIndex& index, const Vec& query, std::size_t k,
                             const std::optional<std::string>& exclude_id) {
  std::vector<std::string> ids;
  for (std::size_t pos : index.nearest(query, k, exclude_id)) ids.push_back(index.id(pos));
  return ids;
}

Fused max_fuse(const Vec& z, std::span<const Vec> exemplar_contexts) {
  Fused out{z, {true, std::vector<bool>(z.size(), true)}};
  for (const Vec& e : exemplar_contexts) {
    require(e.size() == z.size(), "max_fuse: exemplar context length " + std::to_string(e.size()) +
                                      " does not match " + std::to_string(z.size()));
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (e[j] > out.context[j]) {
        out.context[j] = e[j];
        out.tape.query_wins[j] = false;
      }
    }
  }
  return out;
}

Vec max_fuse_backward(FuseTape&& tape, const Vec& grad_fused) {
  require(tape.live, "max_fuse_backward: tape was not produced by max_fuse (or already consumed)");
  require(tape.query_wins.size() == grad_fused.size(), "max_fuse_backward: gradient length mismatch");
  Vec grad(grad_fused.size());
  for (std::size_t j = 0; j < grad.size(); ++j) {
    if (tape.query_wins[j]) grad[j] = grad_fused[j];
  }
  tape.live = false;
  return grad;
}

}  // namespace jrl
