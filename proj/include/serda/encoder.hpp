#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "serda/augment.hpp"
#include "serda/autodiff.hpp"
#include "serda/params.hpp"
#include "serda/waveform.hpp"

namespace serda {

struct ConvLayerSpec {
  std::size_t channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 0;
  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

// Waveform encoder shape. The defaults give a 320-sample hop (50 frames per
// second at 16 kHz) and a 64-wide, two-layer transformer.
struct EncoderConfig {
  std::vector<ConvLayerSpec> conv_layers = {{8, 10, 5}, {16, 8, 4}, {32, 4, 4}, {32, 4, 4}};
  std::size_t model_dim = 64;
  std::size_t num_transformer_layers = 2;
  std::size_t num_heads = 2;
  std::size_t ffn_dim = 128;
  std::size_t proj_hidden = 32;
  std::size_t proj_out = 16;
  std::size_t num_emotion_classes = 2;
  std::size_t num_aug_classes = augment::kNumPipelines;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderOutput {
  std::vector<Tensor> layer_states;  // L+1 tensors, [frames x model_dim]
  Tensor h;                          // [model_dim]
  Tensor z;                          // [proj_out]
  Tensor emo_logits;                 // [C]
  Tensor aug_logits;                 // [num_aug_classes]
};

// Batched outputs as graph nodes, one row per input waveform.
struct BatchGraph {
  ad::Var h;           // [N x model_dim]
  ad::Var z;           // [N x proj_out]
  ad::Var emo_logits;  // [N x C]
  ad::Var aug_logits;  // [N x num_aug_classes]
  std::vector<std::vector<ad::Var>> layer_states;  // filled only on request
};

// Conv feature extractor -> transformer stack -> softmax-weighted sum of all
// L+1 layer representations -> mean over frames (h). Heads on h:
//   z = V relu(U h), emotion logits = W h + b, augmentation logits = W' h + b'.
// Input waveforms are standardised to zero mean and unit variance first.
class Encoder {
 public:
  explicit Encoder(EncoderConfig config);

  const EncoderConfig& config() const { return config_; }

  // Uniform(+-1/sqrt(fan_in)) weights, zero biases, unit layer-norm gains and
  // zero layer-weight logits.
  ParamSet init_params(std::uint64_t seed) const;

  // Closed-form count; equals init_params(..).element_count().
  std::size_t parameter_count() const;
  std::size_t min_input_length() const;
  std::size_t num_frames(std::size_t input_length) const;

  BatchGraph forward_graph(const ParamVars& params, std::span<const Waveform* const> batch,
                           bool keep_layer_states = false) const;

  EncoderOutput forward(const ParamSet& params, const Waveform& w) const;
  std::pair<EncoderOutput, EncoderOutput> forward_pair(const ParamSet& params, const augment::AugmentedPair& pair) const;
  // Rows of h for each waveform, without keeping a graph.
  Tensor embed(const ParamSet& params, std::span<const Waveform* const> batch) const;

 private:
  struct Trunk {
    std::vector<ad::Var> layer_states;
    ad::Var h;
  };
  Trunk encode(const ParamVars& params, const Waveform& w) const;

  EncoderConfig config_;
};

// Softmax of the layer-weight logits.
Tensor layer_mixing_weights(const ParamSet& params);

}  // namespace serda
