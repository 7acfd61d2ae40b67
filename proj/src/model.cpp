#include "jrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "jrl/errors.hpp"

namespace jrl {

ModelConfig ModelConfig::resolved() const {
  ModelConfig out = *this;
  if (out.embed_dim == 0) out.embed_dim = std::min<std::size_t>(out.hidden, 128);
  if (out.attention_width == 0) out.attention_width = out.hidden;
  return out;
}

void ModelConfig::validate() const {
  require(hidden >= 1, "model config: hidden size must be >= 1");
  require(regions >= 1, "model config: region count must be >= 1");
  require(region_dim >= 1, "model config: region feature size must be >= 1");
  require(n_attr >= 1, "model config: n_attr must be >= 1");
  require(embed_dim >= 1, "model config: embedding dimension must be >= 1 (resolve defaults first)");
  require(attention_width >= 1, "model config: attention width must be >= 1 (resolve defaults first)");
  require(dropout >= 0.0 && dropout < 1.0, "model config: dropout must be in [0, 1)");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"hidden", c.hidden},
          {"regions", c.regions},
          {"region_dim", c.region_dim},
          {"n_attr", c.n_attr},
          {"embed_dim", c.embed_dim},
          {"attention_width", c.attention_width},
          {"context_k", c.context_k},
          {"attention", c.attention},
          {"context", c.context},
          {"encoder", c.encoder},
          {"dropout", c.dropout}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.hidden = j.at("hidden").get<std::size_t>();
  c.regions = j.at("regions").get<std::size_t>();
  c.region_dim = j.at("region_dim").get<std::size_t>();
  c.n_attr = j.at("n_attr").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.attention_width = j.at("attention_width").get<std::size_t>();
  c.context_k = j.at("context_k").get<std::size_t>();
  c.attention = j.at("attention").get<bool>();
  c.context = j.at("context").get<bool>();
  c.encoder = j.at("encoder").get<bool>();
  c.dropout = j.at("dropout").get<double>();
  return c;
}

JrlParams JrlParams::zeros(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.hidden;
  JrlParams p;
  if (config.encoder) {
    p.encoder = EncoderCellParams::zeros(d, config.region_dim);
  } else {
    p.encoder = EncoderCellParams::zeros(0, 0);
    p.bypass_W = Mat(d, config.region_dim);
    p.bypass_b = Vec(d);
  }
  p.decoder = DecoderCellParams::zeros(d, config.embed_dim);
  p.attention = config.attention ? AttentionParams::zeros(config.attention_width, d) : AttentionParams::zeros(0, 0);
  p.embedding = Mat(config.classes(), config.embed_dim);
  p.W_y = Mat(config.classes(), d);
  p.b_y = Vec(config.classes());
  return p;
}

JrlParams init_params(const ModelConfig& config, std::uint64_t seed) {
  JrlParams p = JrlParams::zeros(config);
  Rng rng(seed);
  const double radius = 1.0 / std::sqrt(static_cast<double>(config.hidden));
  for_each_tensor(p, [&](const std::string& name, auto& t) {
    if constexpr (std::is_same_v<std::remove_cvref_t<decltype(t)>, Mat>) {
      fill_uniform(t, rng, radius);
    } else if (name == "attention.v_a") {
      fill_uniform(t, rng, radius);
    } else if (name == "encoder.b_f" || name == "decoder.b_f") {
      t.fill(1.0);
    }
  });
  return p;
}

std::size_t parameter_count(const JrlParams& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const auto& t) { n += t.values().size(); });
  return n;
}

namespace {

template <typename Fn>
void zip_tensors(JrlParams& a, const JrlParams& b, Fn&& fn) {
  std::vector<std::span<const double>> rhs;
  for_each_tensor(b, [&](const std::string&, const auto& t) { rhs.push_back(t.values()); });
  std::size_t k = 0;
  for_each_tensor(a, [&](const std::string& name, auto& t) {
    require(t.values().size() == rhs[k].size(), "parameter sets differ in shape at " + name);
    fn(t.values(), rhs[k]);
    ++k;
  });
}

}  // namespace

void scale_in_place(JrlParams& p, double s) {
  for_each_tensor(p, [&](const std::string&, auto& t) {
    for (double& x : t.values()) x *= s;
  });
}

void add_scaled(JrlParams& a, const JrlParams& b, double s) {
  zip_tensors(a, b, [&](std::span<double> x, std::span<const double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += s * y[i];
  });
}

double squared_norm(const JrlParams& p) {
  double sum = 0.0;
  for_each_tensor(p, [&](const std::string&, const auto& t) {
    for (double x : t.values()) sum += x * x;
  });
  return sum;
}

bool bitwise_equal(const JrlParams& a, const JrlParams& b) {
  std::vector<std::span<const double>> lhs, rhs;
  for_each_tensor(a, [&](const std::string&, const auto& t) { lhs.push_back(t.values()); });
  for_each_tensor(b, [&](const std::string&, const auto& t) { rhs.push_back(t.values()); });
  if (lhs.size() != rhs.size()) return false;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (lhs[i].size() != rhs[i].size()) return false;
    if (!lhs[i].empty() && std::memcmp(lhs[i].data(), rhs[i].data(), lhs[i].size_bytes()) != 0) return false;
  }
  return true;
}

Encoding encode(const JrlParams& params, const ModelConfig& config, const RegionSequence& regions) {
  require(regions.size() == config.regions, "encode: expected " + std::to_string(config.regions) +
                                                " regions, got " + std::to_string(regions.size()));
  for (const Vec& r : regions) {
    require(r.size() == config.region_dim, "encode: region feature size " + std::to_string(r.size()) +
                                               " does not match " + std::to_string(config.region_dim));
  }
  Encoding enc;
  if (!config.encoder) {
    enc.region_mean = Vec(config.region_dim);
    for (const Vec& r : regions) enc.region_mean += r;
    enc.region_mean *= 1.0 / static_cast<double>(regions.size());
    require(all_finite(enc.region_mean), "encode: non-finite region features");
    enc.context = params.bypass_b;
    matvec_accumulate(params.bypass_W, enc.region_mean, enc.context);
    enc.outputs.push_back(enc.context);
    return enc;
  }
  CellState state = CellState::zeros(config.hidden);
  enc.outputs.reserve(regions.size());
  enc.tapes.reserve(regions.size());
  for (const Vec& x : regions) {
    CellStep step = encoder_step(params.encoder, state, x);
    state = std::move(step.state);
    enc.outputs.push_back(state.h);
    enc.tapes.push_back(std::move(step.tape));
  }
  enc.context = state.h;
  return enc;
}

namespace {

const Vec& embedding_row(const Mat& table, std::size_t row, Vec& scratch) {
  const auto r = table.row(row);
  scratch = Vec(std::vector<double>(r.begin(), r.end()));
  return scratch;
}

Vec head_logits(const JrlParams& params, const Vec& h) {
  Vec logits = params.b_y;
  matvec_accumulate(params.W_y, h, logits);
  return logits;
}

}  // namespace

DecodeTrace decode_train(const JrlParams& params, const ModelConfig& config, std::span<const Vec> encoder_outputs,
                         const Vec& z, const Vec& z_star, const AttributeSequence& target, Rng* dropout_rng) {
  target.validate(config.n_attr);
  require(z.size() == config.hidden && z_star.size() == config.hidden, "decode_train: context length mismatch");
  require(!encoder_outputs.empty(), "decode_train: no encoder outputs");

  const std::vector<int> tokens = target.tokens(config.n_attr);
  const std::size_t steps = tokens.size();
  const bool use_dropout = dropout_rng != nullptr && config.dropout > 0.0;
  const double keep_scale = 1.0 / (1.0 - config.dropout);

  DecodeTrace trace;
  trace.target = target;
  AttentionKeys keys;
  if (config.attention) keys = project_keys(params.attention, encoder_outputs);

  CellState state{z_star, Vec(config.hidden)};
  Vec y_prev(config.embed_dim);
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) embedding_row(params.embedding, static_cast<std::size_t>(tokens[t - 1]), y_prev);
    Vec step_context;
    if (config.attention) {
      Attended att = attend(params.attention, state.h, encoder_outputs, keys);
      step_context = std::move(att.context);
      trace.attention_tapes.push_back(std::move(att.tape));
    }
    CellStep step = decoder_step(params.decoder, state, config.attention ? step_context : z, y_prev);
    state = std::move(step.state);
    trace.cell_tapes.push_back(std::move(step.tape));

    Vec head_in = state.h;
    if (use_dropout) {
      Vec mask(config.hidden);
      for (double& m : mask) m = dropout_rng->bernoulli(config.dropout) ? 0.0 : keep_scale;
      head_in = hadamard(head_in, mask);
      trace.dropout_masks.push_back(std::move(mask));
    }
    Vec logits = head_logits(params, head_in);
    require(all_finite(logits), "decode_train: non-finite logits");
    const double loss = log_sum_exp(logits) - logits[static_cast<std::size_t>(tokens[t])];
    trace.probabilities.push_back(softmax(logits));
    trace.logits.push_back(std::move(logits));
    trace.head_inputs.push_back(std::move(head_in));
    trace.step_loss.push_back(loss);
    trace.loss += loss;
  }
  trace.loss /= static_cast<double>(steps);
  return trace;
}

Prediction decode_greedy(const JrlParams& params, const ModelConfig& config, std::span<const Vec> encoder_outputs,
                         const Vec& z, const Vec& z_star) {
  require(z.size() == config.hidden && z_star.size() == config.hidden, "decode_greedy: context length mismatch");
  require(!encoder_outputs.empty(), "decode_greedy: no encoder outputs");
  Prediction out;
  AttentionKeys keys;
  if (config.attention) keys = project_keys(params.attention, encoder_outputs);

  std::vector<bool> emitted(config.n_attr, false);
  CellState state{z_star, Vec(config.hidden)};
  Vec y_prev(config.embed_dim);
  for (std::size_t t = 0; t <= config.n_attr; ++t) {
    Vec step_context;
    if (config.attention) {
      Attended att = attend(params.attention, state.h, encoder_outputs, keys);
      step_context = std::move(att.context);
      out.attention.push_back(std::move(att.weights));
    }
    CellStep step = decoder_step(params.decoder, state, config.attention ? step_context : z, y_prev);
    state = std::move(step.state);
    Vec logits = head_logits(params, state.h);
    for (std::size_t a = 0; a < config.n_attr; ++a) {
      if (emitted[a]) logits[a] = -std::numeric_limits<double>::infinity();
    }
    const auto best = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (best == config.stop_token()) break;
    emitted[best] = true;
    out.sequence.attributes.push_back(static_cast<int>(best));
    embedding_row(params.embedding, best, y_prev);
  }
  return out;
}

SampleForward forward_sample(const JrlParams& params, const ModelConfig& config, const RegionSequence& regions,
                             std::span<const Vec> exemplar_contexts, const AttributeSequence& target,
                             Rng* dropout_rng) {
  SampleForward fwd;
  fwd.encoding = encode(params, config, regions);
  const std::span<const Vec> exemplars = config.context ? exemplar_contexts : std::span<const Vec>{};
  fwd.fused = max_fuse(fwd.encoding.context, exemplars);
  fwd.decode = decode_train(params, config, fwd.encoding.outputs, fwd.encoding.context, fwd.fused.context, target,
                            dropout_rng);
  return fwd;
}

void backward_full(const JrlParams& params, const ModelConfig& config, SampleForward&& fwd, double loss_scale,
                   JrlParams& grads) {
  DecodeTrace& trace = fwd.decode;
  const std::size_t steps = trace.cell_tapes.size();
  require(steps == trace.target.length() && trace.logits.size() == steps,
          "backward_full: decode trace is incomplete or already consumed");
  require(!config.attention || trace.attention_tapes.size() == steps, "backward_full: missing attention tapes");
  const std::vector<int> tokens = trace.target.tokens(config.n_attr);
  const std::size_t d = config.hidden;
  const std::size_t m = fwd.encoding.outputs.size();

  std::vector<Vec> grad_H(m, Vec(d));
  Vec grad_context_input(d);  // z fed to every step when attention is off
  Vec grad_h(d), grad_c(d);
  const double step_scale = loss_scale / static_cast<double>(steps);

  for (std::size_t t = steps; t-- > 0;) {
    Vec grad_logits = trace.probabilities[t];
    grad_logits[static_cast<std::size_t>(tokens[t])] -= 1.0;
    grad_logits *= step_scale;
    add_outer(grads.W_y, grad_logits, trace.head_inputs[t]);
    grads.b_y += grad_logits;
    Vec grad_head_in = matvec_transposed(params.W_y, grad_logits);
    if (!trace.dropout_masks.empty()) grad_head_in = hadamard(grad_head_in, trace.dropout_masks[t]);
    grad_h += grad_head_in;

    DecoderStepGrads step = decoder_backward(params.decoder, std::move(trace.cell_tapes[t]), grad_h, grad_c,
                                             grads.decoder);
    grad_h = std::move(step.h_prev);
    grad_c = std::move(step.c_prev);
    if (config.attention) {
      AttentionInputGrads att =
          attend_backward(params.attention, std::move(trace.attention_tapes[t]), step.z, grads.attention);
      grad_h += att.h_de_prev;
      for (std::size_t i = 0; i < m; ++i) grad_H[i] += att.encoder_outputs[i];
    } else {
      grad_context_input += step.z;
    }
    if (t > 0) {
      auto row = grads.embedding.row(static_cast<std::size_t>(tokens[t - 1]));
      for (std::size_t e = 0; e < row.size(); ++e) row[e] += step.y_prev[e];
    }
  }
  trace.logits.clear();

  // h_0 of the decoder is z*; c_0 is a constant zero.
  Vec grad_z = max_fuse_backward(std::move(fwd.fused.tape), grad_h);
  grad_z += grad_context_input;

  if (!config.encoder) {
    grad_z += grad_H[0];
    add_outer(grads.bypass_W, grad_z, fwd.encoding.region_mean);
    grads.bypass_b += grad_z;
    return;
  }
  require(fwd.encoding.tapes.size() == m, "backward_full: encoder tapes missing");
  Vec enc_grad_h = grad_H[m - 1] + grad_z;
  Vec enc_grad_c(d);
  for (std::size_t i = m; i-- > 0;) {
    EncoderStepGrads step =
        encoder_backward(params.encoder, std::move(fwd.encoding.tapes[i]), enc_grad_h, enc_grad_c, grads.encoder);
    if (i == 0) break;
    enc_grad_h = step.h_prev + grad_H[i - 1];
    enc_grad_c = std::move(step.c_prev);
  }
}

Prediction predict(const JrlParams& params, const ModelConfig& config, const RegionSequence& regions,
                   std::span<const Vec> exemplar_contexts) {
  const Encoding enc = encode(params, config, regions);
  const std::span<const Vec> exemplars = config.context ? exemplar_contexts : std::span<const Vec>{};
  const Fused fused = max_fuse(enc.context, exemplars);
  return decode_greedy(params, config, enc.outputs, enc.context, fused.context);
}

}  // namespace jrl
