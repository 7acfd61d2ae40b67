#pragma once

#include <cstddef>
#include <string>
#include <type_traits>
#include <vector>

#include "jrl/numerics.hpp"

namespace jrl {

// One input stream's contribution to the four LSTM gates
// (forget, input, output, input-modulation).
struct GateWeights {
  Mat f, i, o, g;

  static GateWeights zeros(std::size_t hidden, std::size_t input);
};

struct GateBiases {
  Vec f, i, o, g;

  static GateBiases zeros(std::size_t hidden);
};

// Encoder LSTM: gates read the region feature x_t and h_{t-1}.
// input.f is W_fx, recurrent.f is W_fh, bias.f is b_f, and so on.
struct EncoderCellParams {
  GateWeights input;      // d x D_region
  GateWeights recurrent;  // d x d
  GateBiases bias;

  static EncoderCellParams zeros(std::size_t hidden, std::size_t region_dim);
  std::size_t hidden() const { return bias.f.size(); }
  std::size_t input_dim() const { return input.f.cols(); }
};

// Decoder LSTM: gates additionally read the context z and the embedding of
// the previous prediction.
struct DecoderCellParams {
  GateWeights context;    // d x d   (W_*z)
  GateWeights recurrent;  // d x d   (W_*h)
  GateWeights embed;      // d x E   (W_*y)
  GateBiases bias;

  static DecoderCellParams zeros(std::size_t hidden, std::size_t embed_dim);
  std::size_t hidden() const { return bias.f.size(); }
  std::size_t embed_dim() const { return embed.f.cols(); }
};

struct CellState {
  Vec h;
  Vec c;

  static CellState zeros(std::size_t hidden) { return {Vec(hidden), Vec(hidden)}; }
};

enum class CellKind { kNone, kEncoder, kDecoder };

// Everything one forward step needs to be differentiated. A tape is consumed
// by exactly one backward call; afterwards its kind is reset to kNone.
struct StepTape {
  CellKind kind = CellKind::kNone;
  std::vector<Vec> inputs;  // encoder: {x}; decoder: {z, y_prev}
  Vec h_prev, c_prev;
  Vec f, i, o, g;
  Vec tanh_c;
};

struct CellStep {
  CellState state;
  StepTape tape;
};

struct EncoderStepGrads {
  Vec h_prev;
  Vec c_prev;
  Vec x;
};

struct DecoderStepGrads {
  Vec h_prev;
  Vec c_prev;
  Vec z;
  Vec y_prev;
};

CellStep encoder_step(const EncoderCellParams& p, const CellState& prev, const Vec& x);
CellStep decoder_step(const DecoderCellParams& p, const CellState& prev, const Vec& z,
                         const Vec& y_prev_embed);

// Backward through one step. Parameter gradients are added into `grads`;
// the returned gradients are with respect to the step's inputs and state.
EncoderStepGrads encoder_backward(const EncoderCellParams& p, StepTape&& tape, const Vec& grad_h,
                                  const Vec& grad_c, EncoderCellParams& grads);
DecoderStepGrads decoder_backward(const DecoderCellParams& p, StepTape&& tape, const Vec& grad_h,
                                  const Vec& grad_c, DecoderCellParams& grads);

namespace detail {
template <typename Weights, typename Fn>
void visit_gates(Weights& w, const char* stream, Fn& fn) {
  const std::string s(stream);
  fn("W_f" + s, w.f);
  fn("W_i" + s, w.i);
  fn("W_o" + s, w.o);
  fn("W_g" + s, w.g);
}

template <typename Biases, typename Fn>
void visit_biases(Biases& b, Fn& fn) {
  fn(std::string("b_f"), b.f);
  fn(std::string("b_i"), b.i);
  fn(std::string("b_o"), b.o);
  fn(std::string("b_g"), b.g);
}
}  // namespace detail

// Calls fn(name, tensor) for every tensor in a fixed order; names follow the
// gate symbols (W_fx, W_fh, b_f, ...). Works on const and mutable params.
template <typename Params, typename Fn>
  requires std::is_same_v<std::remove_const_t<Params>, EncoderCellParams>
void for_each_cell_tensor(Params& p, Fn&& fn) {
  detail::visit_gates(p.input, "x", fn);
  detail::visit_gates(p.recurrent, "h", fn);
  detail::visit_biases(p.bias, fn);
}

template <typename Params, typename Fn>
  requires std::is_same_v<std::remove_const_t<Params>, DecoderCellParams>
void for_each_cell_tensor(Params& p, Fn&& fn) {
  detail::visit_gates(p.context, "z", fn);
  detail::visit_gates(p.recurrent, "h", fn);
  detail::visit_gates(p.embed, "y", fn);
  detail::visit_biases(p.bias, fn);
}

}  // namespace jrl
