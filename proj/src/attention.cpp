#include "jrl/attention.hpp"

#include <cmath>

#include "jrl/errors.hpp"

namespace jrl {

AttentionParams AttentionParams::zeros(std::size_t width, std::size_t hidden) {
  return {Mat(width, 2 * hidden), Vec(width), Vec(width)};
}

namespace {

// out += W_a[:, offset : offset + d] x
void half_matvec(const Mat& w, std::size_t offset, const Vec& x, Vec& out) {
  const std::size_t d = x.size();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    double sum = 0.0;
    for (std::size_t c = 0; c < d; ++c) sum += row[offset + c] * x[c];
    out[r] += sum;
  }
}

// out += W_a[:, offset : offset + d]^T a
void half_matvec_t(const Mat& w, std::size_t offset, const Vec& a, Vec& out) {
  const std::size_t d = out.size();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    const auto row = w.row(r);
    const double ar = a[r];
    if (ar == 0.0) continue;
    for (std::size_t c = 0; c < d; ++c) out[c] += row[offset + c] * ar;
  }
}

void half_outer(Mat& w, std::size_t offset, const Vec& a, const Vec& x) {
  for (std::size_t r = 0; r < w.rows(); ++r) {
    auto row = w.row(r);
    const double ar = a[r];
    if (ar == 0.0) continue;
    for (std::size_t c = 0; c < x.size(); ++c) row[offset + c] += ar * x[c];
  }
}

void check_inputs(const AttentionParams& p, const Vec& h_de_prev, std::span<const Vec> encoder_outputs) {
  require(!encoder_outputs.empty(), "attend: empty encoder outputs");
  const std::size_t d = p.hidden();
  require(p.W_a.cols() == 2 * d && p.W_a.rows() == p.width() && p.b_a.size() == p.width(),
          "attend: inconsistent scorer parameter shapes");
  require(h_de_prev.size() == d, "attend: decoder state length " + std::to_string(h_de_prev.size()) +
                                     " does not match hidden size " + std::to_string(d));
  for (const Vec& h : encoder_outputs) {
    require(h.size() == d, "attend: encoder output length does not match hidden size");
  }
}

}  // namespace

AttentionKeys project_keys(const AttentionParams& p, std::span<const Vec> encoder_outputs) {
  AttentionKeys keys;
  keys.projected.reserve(encoder_outputs.size());
  for (const Vec& h : encoder_outputs) {
    require(h.size() == p.hidden(), "project_keys: encoder output length does not match hidden size");
    Vec k(p.width());
    half_matvec(p.W_a, p.hidden(), h, k);
    keys.projected.push_back(std::move(k));
  }
  return keys;
}

Attended attend(const AttentionParams& p, const Vec& h_de_prev, std::span<const Vec> encoder_outputs) {
  check_inputs(p, h_de_prev, encoder_outputs);
  return attend(p, h_de_prev, encoder_outputs, project_keys(p, encoder_outputs));
}

Attended attend(const AttentionParams& p, const Vec& h_de_prev, std::span<const Vec> encoder_outputs,
                const AttentionKeys& keys) {
  check_inputs(p, h_de_prev, encoder_outputs);
  require(keys.projected.size() == encoder_outputs.size(), "attend: key count does not match encoder outputs");
  const std::size_t m = encoder_outputs.size();
  const std::size_t d = p.hidden();

  Vec query = p.b_a;
  half_matvec(p.W_a, 0, h_de_prev, query);

  Attended out;
  AttentionTape& tape = out.tape;
  tape.hidden.reserve(m);
  Vec scores(m);
  for (std::size_t i = 0; i < m; ++i) {
    Vec u = query + keys.projected[i];
    for (double& x : u) x = std::tanh(x);
    scores[i] = dot(p.v_a, u);
    tape.hidden.push_back(std::move(u));
  }
  out.weights = softmax(scores);
  out.context = Vec(d);
  for (std::size_t i = 0; i < m; ++i) axpy(out.weights[i], encoder_outputs[i], out.context);

  tape.live = true;
  tape.h_de_prev = h_de_prev;
  tape.encoder_outputs.assign(encoder_outputs.begin(), encoder_outputs.end());
  tape.weights = out.weights;
  return out;
}

AttentionInputGrads attend_backward(const AttentionParams& p, AttentionTape&& tape, const Vec& grad_context,
                                    AttentionParams& grads) {
  require(tape.live, "attend_backward: tape was not produced by attend (or already consumed)");
  const std::size_t d = p.hidden();
  const std::size_t m = tape.encoder_outputs.size();
  require(tape.h_de_prev.size() == d && tape.hidden.size() == m && tape.weights.size() == m,
          "attend_backward: tape does not match params");
  require(grad_context.size() == d, "attend_backward: gradient length does not match hidden size");

  AttentionInputGrads out;
  out.h_de_prev = Vec(d);
  out.encoder_outputs.reserve(m);

  // Convex combination: dz/dw_i = h_i, dz/dh_i = w_i.
  Vec grad_w(m);
  for (std::size_t i = 0; i < m; ++i) {
    grad_w[i] = dot(grad_context, tape.encoder_outputs[i]);
    out.encoder_outputs.push_back(tape.weights[i] * grad_context);
  }
  // Softmax Jacobian.
  const double mean = dot(tape.weights, grad_w);
  for (std::size_t i = 0; i < m; ++i) {
    const double grad_score = tape.weights[i] * (grad_w[i] - mean);
    if (grad_score == 0.0) continue;
    const Vec& u = tape.hidden[i];
    axpy(grad_score, u, grads.v_a);
    Vec grad_pre(p.width());
    for (std::size_t a = 0; a < p.width(); ++a) grad_pre[a] = grad_score * p.v_a[a] * (1.0 - u[a] * u[a]);
    grads.b_a += grad_pre;
    half_outer(grads.W_a, 0, grad_pre, tape.h_de_prev);
    half_outer(grads.W_a, d, grad_pre, tape.encoder_outputs[i]);
    half_matvec_t(p.W_a, 0, grad_pre, out.h_de_prev);
    half_matvec_t(p.W_a, d, grad_pre, out.encoder_outputs[i]);
  }
  tape.live = false;
  return out;
}

}  // namespace jrl
