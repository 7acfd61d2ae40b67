#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jrl/numerics.hpp"

namespace jrl {

// Additive scorer over [h_de_prev ; h_i]:
//   alpha_i = v_a . tanh(W_a [h_de_prev ; h_i] + b_a)
// W_a is A x 2d; the first d columns read the decoder state.
struct AttentionParams {
  Mat W_a;
  Vec v_a;
  Vec b_a;

  static AttentionParams zeros(std::size_t width, std::size_t hidden);
  std::size_t width() const { return v_a.size(); }
  std::size_t hidden() const { return W_a.cols() / 2; }
};

// Encoder-side half of the scorer pre-activation, W_a[:, d:] h_i, for every
// region. It does not depend on the decode step, so callers that attend many
// times over the same H compute it once.
struct AttentionKeys {
  std::vector<Vec> projected;
};

struct AttentionTape {
  bool live = false;
  Vec h_de_prev;
  std::vector<Vec> encoder_outputs;
  std::vector<Vec> hidden;  // tanh activations, one per region
  Vec weights;
};

struct Attended {
  Vec context;  // z_t
  Vec weights;  // w_t, a distribution over regions
  AttentionTape tape;
};

struct AttentionInputGrads {
  Vec h_de_prev;
  std::vector<Vec> encoder_outputs;
};

AttentionKeys project_keys(const AttentionParams& p, std::span<const Vec> encoder_outputs);

Attended attend(const AttentionParams& p, const Vec& h_de_prev, std::span<const Vec> encoder_outputs);
Attended attend(const AttentionParams& p, const Vec& h_de_prev, std::span<const Vec> encoder_outputs,
                const AttentionKeys& keys);

// Parameter gradients are added into `grads`.
AttentionInputGrads attend_backward(const AttentionParams& p, AttentionTape&& tape, const Vec& grad_context,
                                    AttentionParams& grads);

template <typename Params, typename Fn>
void for_each_attention_tensor(Params& p, Fn&& fn) {
  fn(std::string("W_a"), p.W_a);
  fn(std::string("v_a"), p.v_a);
  fn(std::string("b_a"), p.b_a);
}

}  // namespace jrl
