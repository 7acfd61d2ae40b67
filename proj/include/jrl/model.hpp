#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "jrl/attention.hpp"
#include "jrl/context.hpp"
#include "jrl/data.hpp"
#include "jrl/numerics.hpp"
#include "jrl/recurrent_cells.hpp"

namespace jrl {

struct ModelConfig {
  std::size_t hidden = 512;  // d
  std::size_t regions = 6;   // m
  std::size_t region_dim = 0;
  std::size_t n_attr = 0;
  std::size_t embed_dim = 0;        // E; 0 resolves to min(d, 128)
  std::size_t attention_width = 0;  // A; 0 resolves to d
  std::size_t context_k = 2;
  bool attention = true;
  bool context = true;
  // When false the recurrent encoder is bypassed: z is a trained linear
  // projection of the mean region feature and H = (z).
  bool encoder = true;
  double dropout = 0.5;

  std::size_t classes() const { return n_attr + 1; }
  std::size_t stop_token() const { return n_attr; }
  // Fills in the derived defaults for E and A.
  ModelConfig resolved() const;
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// All learned tensors. Tensors a config does not use (attention scorer with
// attention off, bypass projection with the encoder on) are left empty.
struct JrlParams {
  EncoderCellParams encoder;
  DecoderCellParams decoder;
  AttentionParams attention;
  Mat embedding;  // (n_attr + 1) x E; the last row belongs to the stop token
  Mat W_y;        // (n_attr + 1) x d
  Vec b_y;
  Mat bypass_W;  // d x D_region
  Vec bypass_b;

  static JrlParams zeros(const ModelConfig& config);
};

// Uniform in [-1/sqrt(d), 1/sqrt(d)] for every matrix, zero biases except
// the forget gates (1.0).
JrlParams init_params(const ModelConfig& config, std::uint64_t seed);

// Visits every tensor with a stable dotted name. Order is fixed and is the
// checkpoint order.
template <typename Params, typename Fn>
  requires std::is_same_v<std::remove_const_t<Params>, JrlParams>
void for_each_tensor(Params& p, Fn&& fn) {
  for_each_cell_tensor(p.encoder, [&](const std::string& n, auto& t) { fn("encoder." + n, t); });
  for_each_cell_tensor(p.decoder, [&](const std::string& n, auto& t) { fn("decoder." + n, t); });
  for_each_attention_tensor(p.attention, [&](const std::string& n, auto& t) { fn("attention." + n, t); });
  fn(std::string("embedding"), p.embedding);
  fn(std::string("head.W_y"), p.W_y);
  fn(std::string("head.b_y"), p.b_y);
  fn(std::string("bypass.W"), p.bypass_W);
  fn(std::string("bypass.b"), p.bypass_b);
}

inline std::vector<std::size_t> tensor_shape(const Mat& m) { return {m.rows(), m.cols()}; }
inline std::vector<std::size_t> tensor_shape(const Vec& v) { return {v.size()}; }

std::size_t parameter_count(const JrlParams& p);
void scale_in_place(JrlParams& p, double s);
// a += s * b
void add_scaled(JrlParams& a, const JrlParams& b, double s = 1.0);
double squared_norm(const JrlParams& p);
bool bitwise_equal(const JrlParams& a, const JrlParams& b);

struct Encoding {
  std::vector<Vec> outputs;  // H
  Vec context;               // z = h_m
  std::vector<StepTape> tapes;
  Vec region_mean;  // bypass mode only
};

Encoding encode(const JrlParams& params, const ModelConfig& config, const RegionSequence& regions);

struct DecodeTrace {
  std::vector<Vec> logits;
  std::vector<Vec> probabilities;
  std::vector<double> step_loss;
  double loss = 0.0;  // mean over steps
  AttributeSequence target;

  // Tapes and cached activations for backward_full.
  std::vector<StepTape> cell_tapes;
  std::vector<AttentionTape> attention_tapes;
  std::vector<Vec> head_inputs;    // dropped-out h_t
  std::vector<Vec> dropout_masks;  // empty when dropout is inactive
};

// Teacher-forced decoding against `target`. The decoder starts from
// (h, c) = (z*, 0); step 1 reads the zero start embedding and step t > 1 the
// embedding of target token t-1. Dropout is applied to h_t before the head
// only when `dropout_rng` is non-null and the rate is positive.
DecodeTrace decode_train(const JrlParams& params, const ModelConfig& config, std::span<const Vec> encoder_outputs,
                         const Vec& z, const Vec& z_star, const AttributeSequence& target, Rng* dropout_rng);

struct Prediction {
  AttributeSequence sequence;
  std::vector<Vec> attention;  // one weight vector per decode step (attention on)
};

// Greedy decoding with already-emitted attributes masked out; stops on the
// stop token or once every attribute has been emitted.
Prediction decode_greedy(const JrlParams& params, const ModelConfig& config, std::span<const Vec> encoder_outputs,
                         const Vec& z, const Vec& z_star);

// Everything for one training sample's forward pass.
struct SampleForward {
  Encoding encoding;
  Fused fused;
  DecodeTrace decode;
};

// Exemplar contexts are ignored when config.context is off.
SampleForward forward_sample(const JrlParams& params, const ModelConfig& config, const RegionSequence& regions,
                             std::span<const Vec> exemplar_contexts, const AttributeSequence& target,
                             Rng* dropout_rng);

// Adds loss_scale * d(loss)/d(params) into `grads`. Exemplar contexts are
// constants; the encoder receives gradient through H (attention) and through
// z and z* (query branch of the max fusion).
void backward_full(const JrlParams& params, const ModelConfig& config, SampleForward&& forward, double loss_scale,
                   JrlParams& grads);

Prediction predict(const JrlParams& params, const ModelConfig& config, const RegionSequence& regions,
                   std::span<const Vec> exemplar_contexts);

// Checkpoint container: 8-byte magic, little-endian u64 header length, JSON
// header (format version, config, metadata, tensor directory), then the
// tensors as little-endian f64, row-major.
inline constexpr int kCheckpointVersion = 1;

struct LoadedCheckpoint {
  JrlParams params;
  ModelConfig config;
  nlohmann::json metadata;
};

void save_checkpoint(const JrlParams& params, const ModelConfig& config, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
// With `expected` set, any config difference is reported as a shape error.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace jrl
