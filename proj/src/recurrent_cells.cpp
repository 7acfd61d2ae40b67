#include "jrl/recurrent_cells.hpp"

#include <array>
#include <cmath>
#include <span>

#include "jrl/errors.hpp"

namespace jrl {

GateWeights GateWeights::zeros(std::size_t hidden, std::size_t input) {
  return {Mat(hidden, input), Mat(hidden, input), Mat(hidden, input), Mat(hidden, input)};
}

GateBiases GateBiases::zeros(std::size_t hidden) {
  return {Vec(hidden), Vec(hidden), Vec(hidden), Vec(hidden)};
}

EncoderCellParams EncoderCellParams::zeros(std::size_t hidden, std::size_t region_dim) {
  return {GateWeights::zeros(hidden, region_dim), GateWeights::zeros(hidden, hidden), GateBiases::zeros(hidden)};
}

DecoderCellParams DecoderCellParams::zeros(std::size_t hidden, std::size_t embed_dim) {
  return {GateWeights::zeros(hidden, hidden), GateWeights::zeros(hidden, hidden),
          GateWeights::zeros(hidden, embed_dim), GateBiases::zeros(hidden)};
}

namespace {

struct Stream {
  const GateWeights* weights;
  const Vec* input;
};

void check_stream(const GateWeights& w, const Vec& x, std::size_t hidden, const char* name) {
  if (w.f.rows() != hidden || w.f.cols() != x.size()) {
    throw ContractError(std::string("lstm step: input '") + name + "' has length " + std::to_string(x.size()) +
                        ", weights are " + shape_string(w.f));
  }
  if (!all_finite(x)) throw ContractError(std::string("lstm step: non-finite input '") + name + "'");
}

void check_state(const CellState& prev, std::size_t hidden) {
  require(prev.h.size() == hidden && prev.c.size() == hidden, "lstm step: state size does not match hidden size");
  require(all_finite(prev.h) && all_finite(prev.c), "lstm step: non-finite previous state");
}

CellStep lstm_forward(std::span<const Stream> streams, const GateWeights& recurrent, const GateBiases& bias,
                      const CellState& prev, CellKind kind) {
  Vec af = bias.f, ai = bias.i, ao = bias.o, ag = bias.g;
  for (const Stream& s : streams) {
    matvec_accumulate(s.weights->f, *s.input, af);
    matvec_accumulate(s.weights->i, *s.input, ai);
    matvec_accumulate(s.weights->o, *s.input, ao);
    matvec_accumulate(s.weights->g, *s.input, ag);
  }
  matvec_accumulate(recurrent.f, prev.h, af);
  matvec_accumulate(recurrent.i, prev.h, ai);
  matvec_accumulate(recurrent.o, prev.h, ao);
  matvec_accumulate(recurrent.g, prev.h, ag);

  CellStep step;
  StepTape& t = step.tape;
  t.kind = kind;
  t.f = sigmoid(af);
  t.i = sigmoid(ai);
  t.o = sigmoid(ao);
  t.g = tanh(ag);

  const std::size_t d = prev.h.size();
  step.state.c = Vec(d);
  step.state.h = Vec(d);
  t.tanh_c = Vec(d);
  for (std::size_t j = 0; j < d; ++j) {
    step.state.c[j] = t.f[j] * prev.c[j] + t.i[j] * t.g[j];
    t.tanh_c[j] = std::tanh(step.state.c[j]);
    step.state.h[j] = t.o[j] * t.tanh_c[j];
  }
  t.h_prev = prev.h;
  t.c_prev = prev.c;
  for (const Stream& s : streams) t.inputs.push_back(*s.input);
  return step;
}

struct GatePreGrads {
  Vec f, i, o, g;
};

// Gradients at the gate pre-activations, plus dc_prev.
GatePreGrads lstm_gate_grads(const StepTape& t, const Vec& grad_h, const Vec& grad_c, Vec& grad_c_prev) {
  const std::size_t d = t.f.size();
  GatePreGrads a{Vec(d), Vec(d), Vec(d), Vec(d)};
  grad_c_prev = Vec(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double dc = grad_c[j] + grad_h[j] * t.o[j] * (1.0 - t.tanh_c[j] * t.tanh_c[j]);
    const double d_o = grad_h[j] * t.tanh_c[j];
    const double d_f = dc * t.c_prev[j];
    const double d_i = dc * t.g[j];
    const double d_g = dc * t.i[j];
    grad_c_prev[j] = dc * t.f[j];
    a.f[j] = d_f * t.f[j] * (1.0 - t.f[j]);
    a.i[j] = d_i * t.i[j] * (1.0 - t.i[j]);
    a.o[j] = d_o * t.o[j] * (1.0 - t.o[j]);
    a.g[j] = d_g * (1.0 - t.g[j] * t.g[j]);
  }
  return a;
}

// Adds dW += a x^T for each gate and returns W^T a summed over gates.
Vec stream_backward(const GateWeights& w, const GatePreGrads& a, const Vec& x, GateWeights& grads) {
  add_outer(grads.f, a.f, x);
  add_outer(grads.i, a.i, x);
  add_outer(grads.o, a.o, x);
  add_outer(grads.g, a.g, x);
  Vec gx(x.size());
  matvec_transposed_accumulate(w.f, a.f, gx);
  matvec_transposed_accumulate(w.i, a.i, gx);
  matvec_transposed_accumulate(w.o, a.o, gx);
  matvec_transposed_accumulate(w.g, a.g, gx);
  return gx;
}

void check_tape(const StepTape& tape, CellKind kind, std::size_t hidden, const Vec& grad_h, const Vec& grad_c) {
  require(tape.kind == kind, "lstm backward: tape was not produced by a matching forward step (or already consumed)");
  require(tape.f.size() == hidden, "lstm backward: tape hidden size does not match params");
  require(grad_h.size() == hidden && grad_c.size() == hidden, "lstm backward: upstream gradient size mismatch");
}

void add_biases(GateBiases& b, const GatePreGrads& a) {
  b.f += a.f;
  b.i += a.i;
  b.o += a.o;
  b.g += a.g;
}

}  // namespace

CellStep encoder_step(const EncoderCellParams& p, const CellState& prev, const Vec& x) {
  const std::size_t d = p.hidden();
  check_stream(p.input, x, d, "x");
  check_state(prev, d);
  const std::array<Stream, 1> streams{Stream{&p.input, &x}};
  return lstm_forward(streams, p.recurrent, p.bias, prev, CellKind::kEncoder);
}

CellStep decoder_step(const DecoderCellParams& p, const CellState& prev, const Vec& z, const Vec& y_prev_embed) {
  const std::size_t d = p.hidden();
  check_stream(p.context, z, d, "z");
  check_stream(p.embed, y_prev_embed, d, "y_prev");
  check_state(prev, d);
  const std::array<Stream, 2> streams{Stream{&p.context, &z}, Stream{&p.embed, &y_prev_embed}};
  return lstm_forward(streams, p.recurrent, p.bias, prev, CellKind::kDecoder);
}

EncoderStepGrads encoder_backward(const EncoderCellParams& p, StepTape&& tape, const Vec& grad_h, const Vec& grad_c,
                                  EncoderCellParams& grads) {
  check_tape(tape, CellKind::kEncoder, p.hidden(), grad_h, grad_c);
  require(tape.inputs.size() == 1 && tape.inputs[0].size() == p.input_dim(), "encoder_backward: tape input mismatch");
  EncoderStepGrads out;
  const GatePreGrads a = lstm_gate_grads(tape, grad_h, grad_c, out.c_prev);
  out.x = stream_backward(p.input, a, tape.inputs[0], grads.input);
  out.h_prev = stream_backward(p.recurrent, a, tape.h_prev, grads.recurrent);
  add_biases(grads.bias, a);
  tape.kind = CellKind::kNone;
  return out;
}

DecoderStepGrads decoder_backward(const DecoderCellParams& p, StepTape&& tape, const Vec& grad_h, const Vec& grad_c,
                                  DecoderCellParams& grads) {
  check_tape(tape, CellKind::kDecoder, p.hidden(), grad_h, grad_c);
  require(tape.inputs.size() == 2 && tape.inputs[1].size() == p.embed_dim(), "decoder_backward: tape input mismatch");
  DecoderStepGrads out;
  const GatePreGrads a = lstm_gate_grads(tape, grad_h, grad_c, out.c_prev);
  out.z = stream_backward(p.context, a, tape.inputs[0], grads.context);
  out.y_prev = stream_backward(p.embed, a, tape.inputs[1], grads.embed);
  out.h_prev = stream_backward(p.recurrent, a, tape.h_prev, grads.recurrent);
  add_biases(grads.bias, a);
  tape.kind = CellKind::kNone;
  return out;
}

}  // namespace jrl
