#include "serda/encoder.hpp"

#include <cmath>
#include <string>

#include "serda/error.hpp"
#include "serda/rng.hpp"

namespace serda {

namespace {

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l) + "."; }

ad::Var linear(const ad::Var& x, const ad::Var& weight, const ad::Var& bias) {
  return ad::add_row_bias(ad::matmul(x, weight), bias);
}

}  // namespace

void EncoderConfig::validate() const {
  if (conv_layers.empty()) throw ConfigError("encoder needs at least one conv layer");
  for (std::size_t i = 0; i < conv_layers.size(); ++i) {
    const auto& c = conv_layers[i];
    if (c.channels == 0 || c.kernel == 0 || c.stride == 0) {
      throw ConfigError("conv layer " + std::to_string(i) + " has a zero channel/kernel/stride");
    }
  }
  if (model_dim == 0 || num_transformer_layers == 0 || num_heads == 0 || ffn_dim == 0 || proj_hidden == 0 ||
      proj_out == 0 || num_emotion_classes < 2) {
    throw ConfigError("encoder dimensions must be positive (and at least two emotion classes)");
  }
  if (model_dim % num_heads != 0) {
    throw ConfigError("model_dim " + std::to_string(model_dim) + " not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (num_aug_classes != static_cast<std::size_t>(augment::kNumPipelines)) {
    throw ConfigError("num_aug_classes is fixed at " + std::to_string(augment::kNumPipelines));
  }
}

Encoder::Encoder(EncoderConfig config) : config_(std::move(config)) { config_.validate(); }

ParamSet Encoder::init_params(std::uint64_t seed) const {
  ParamSet p;
  KeyedRng rng{0x1417ULL, seed};
  auto weight = [&](std::string name, std::size_t fan_in, std::size_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor t({fan_in, fan_out});
    for (auto& v : t.data()) v = rng.uniform(-bound, bound);
    p.add(std::move(name), std::move(t));
  };
  auto zeros = [&](std::string name, std::size_t n) { p.add(std::move(name), Tensor(Shape{n}, 0.0)); };
  auto ones = [&](std::string name, std::size_t n) { p.add(std::move(name), Tensor(Shape{n}, 1.0)); };

  const std::size_t d = config_.model_dim;
  std::size_t cin = 1;
  for (std::size_t i = 0; i < config_.conv_layers.size(); ++i) {
    const auto& c = config_.conv_layers[i];
    weight("conv" + std::to_string(i) + ".weight", c.kernel * cin, c.channels);
    zeros("conv" + std::to_string(i) + ".bias", c.channels);
    cin = c.channels;
  }
  ones("feat.ln.gamma", cin);
  zeros("feat.ln.beta", cin);
  weight("feat.proj.weight", cin, d);
  zeros("feat.proj.bias", d);
  for (std::size_t l = 0; l < config_.num_transformer_layers; ++l) {
    const std::string pre = layer_prefix(l);
    ones(pre + "ln1.gamma", d);
    zeros(pre + "ln1.beta", d);
    for (const char* m : {"wq", "wk", "wv", "wo"}) {
      weight(pre + "attn." + m, d, d);
      zeros(pre + "attn.b" + std::string(m + 1), d);
    }
    ones(pre + "ln2.gamma", d);
    zeros(pre + "ln2.beta", d);
    weight(pre + "ffn.w1", d, config_.ffn_dim);
    zeros(pre + "ffn.b1", config_.ffn_dim);
    weight(pre + "ffn.w2", config_.ffn_dim, d);
    zeros(pre + "ffn.b2", d);
  }
  zeros("layer_weights", config_.num_transformer_layers + 1);
  weight("emo.weight", d, config_.num_emotion_classes);
  zeros("emo.bias", config_.num_emotion_classes);
  weight("aug.weight", d, config_.num_aug_classes);
  zeros("aug.bias", config_.num_aug_classes);
  weight("proj.u", d, config_.proj_hidden);
  weight("proj.v", config_.proj_hidden, config_.proj_out);
  return p;
}

std::size_t Encoder::parameter_count() const {
  const std::size_t d = config_.model_dim, f = config_.ffn_dim, l = config_.num_transformer_layers;
  std::size_t n = 0, cin = 1;
  for (const auto& c : config_.conv_layers) {
    n += c.kernel * cin * c.channels + c.channels;
    cin = c.channels;
  }
  n += 2 * cin + cin * d + d;                          // feature layer norm + projection
  n += l * (4 * d + 4 * d * d + 4 * d + 2 * d * f + f + d);  // norms, attention, feed-forward
  n += l + 1;                                          // layer mixing logits
  n += d * config_.num_emotion_classes + config_.num_emotion_classes;
  n += d * config_.num_aug_classes + config_.num_aug_classes;
  n += d * config_.proj_hidden + config_.proj_hidden * config_.proj_out;
  return n;
}

std::size_t Encoder::min_input_length() const {
  std::size_t need = 1;
  for (auto it = config_.conv_layers.rbegin(); it != config_.conv_layers.rend(); ++it) {
    need = (need - 1) * it->stride + it->kernel;
  }
  return need;
}

std::size_t Encoder::num_frames(std::size_t input_length) const {
  std::size_t t = input_length;
  for (const auto& c : config_.conv_layers) {
    if (t < c.kernel) return 0;
    t = (t - c.kernel) / c.stride + 1;
  }
  return t;
}

Encoder::Trunk Encoder::encode(const ParamVars& p, const Waveform& w) const {
  if (w.size() < min_input_length()) {
    throw DataError("waveform of " + std::to_string(w.size()) + " samples is shorter than the minimum input length " +
                    std::to_string(min_input_length()));
  }
  double mu = 0.0;
  for (double s : w.samples) mu += s;
  mu /= static_cast<double>(w.size());
  double var = 0.0;
  for (double s : w.samples) var += (s - mu) * (s - mu);
  var /= static_cast<double>(w.size());
  const double inv_std = 1.0 / std::sqrt(var + 1e-7);
  Tensor input({w.size(), 1});
  for (std::size_t i = 0; i < w.size(); ++i) input[i] = (w.samples[i] - mu) * inv_std;

  ad::Var x = ad::Var::constant(std::move(input));
  for (std::size_t i = 0; i < config_.conv_layers.size(); ++i) {
    const auto& c = config_.conv_layers[i];
    const std::string pre = "conv" + std::to_string(i);
    x = ad::gelu(linear(ad::frames(x, c.kernel, c.stride), p[pre + ".weight"], p[pre + ".bias"]));
  }
  x = ad::layer_norm(x, p["feat.ln.gamma"], p["feat.ln.beta"]);
  x = linear(x, p["feat.proj.weight"], p["feat.proj.bias"]);

  Trunk trunk;
  trunk.layer_states.push_back(x);
  const std::size_t d = config_.model_dim, heads = config_.num_heads, dh = d / heads;
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t l = 0; l < config_.num_transformer_layers; ++l) {
    const std::string pre = layer_prefix(l);
    ad::Var a = ad::layer_norm(x, p[pre + "ln1.gamma"], p[pre + "ln1.beta"]);
    ad::Var q = linear(a, p[pre + "attn.wq"], p[pre + "attn.bq"]);
    ad::Var k = linear(a, p[pre + "attn.wk"], p[pre + "attn.bk"]);
    ad::Var v = linear(a, p[pre + "attn.wv"], p[pre + "attn.bv"]);
    std::vector<ad::Var> head_out;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      const std::size_t b = hd * dh, e = b + dh;
      ad::Var qh = ad::slice_cols(q, b, e);
      ad::Var kh = ad::slice_cols(k, b, e);
      ad::Var vh = ad::slice_cols(v, b, e);
      ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), attn_scale);
      head_out.push_back(ad::matmul(ad::softmax(scores), vh));
    }
    ad::Var attn = heads == 1 ? head_out[0] : ad::concat_cols(head_out);
    x = ad::add(x, linear(attn, p[pre + "attn.wo"], p[pre + "attn.bo"]));

    ad::Var b = ad::layer_norm(x, p[pre + "ln2.gamma"], p[pre + "ln2.beta"]);
    ad::Var ff = linear(ad::gelu(linear(b, p[pre + "ffn.w1"], p[pre + "ffn.b1"])), p[pre + "ffn.w2"], p[pre + "ffn.b2"]);
    x = ad::add(x, ff);
    trunk.layer_states.push_back(x);
  }

  ad::Var alpha = ad::softmax(p["layer_weights"]);
  trunk.h = ad::mean(ad::mix(trunk.layer_states, alpha), 0);
  return trunk;
}

BatchGraph Encoder::forward_graph(const ParamVars& p, std::span<const Waveform* const> batch,
                                  bool keep_layer_states) const {
  if (batch.empty()) throw DataError("forward on an empty batch");
  std::vector<ad::Var> hs;
  hs.reserve(batch.size());
  BatchGraph out;
  for (const Waveform* w : batch) {
    Trunk t = encode(p, *w);
    hs.push_back(t.h);
    if (keep_layer_states) out.layer_states.push_back(std::move(t.layer_states));
  }
  out.h = ad::stack_rows(hs);
  out.emo_logits = linear(out.h, p["emo.weight"], p["emo.bias"]);
  out.aug_logits = linear(out.h, p["aug.weight"], p["aug.bias"]);
  out.z = ad::matmul(ad::relu(ad::matmul(out.h, p["proj.u"])), p["proj.v"]);
  return out;
}

namespace {

Tensor row_of(const Tensor& m, std::size_t r) {
  const std::size_t n = m.cols();
  std::vector<double> v(m.data().begin() + static_cast<std::ptrdiff_t>(r * n),
                        m.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  return Tensor::vector(std::move(v));
}

EncoderOutput unpack(const BatchGraph& g, std::size_t r) {
  EncoderOutput out;
  for (const auto& s : g.layer_states[r]) out.layer_states.push_back(s.value());
  out.h = row_of(g.h.value(), r);
  out.z = row_of(g.z.value(), r);
  out.emo_logits = row_of(g.emo_logits.value(), r);
  out.aug_logits = row_of(g.aug_logits.value(), r);
  return out;
}

}  // namespace

EncoderOutput Encoder::forward(const ParamSet& params, const Waveform& w) const {
  ParamVars p(params, false);
  const Waveform* batch[] = {&w};
  return unpack(forward_graph(p, batch, true), 0);
}

std::pair<EncoderOutput, EncoderOutput> Encoder::forward_pair(const ParamSet& params,
                                                              const augment::AugmentedPair& pair) const {
  ParamVars p(params, false);
  const Waveform* batch[] = {&pair.view_a, &pair.view_b};
  BatchGraph g = forward_graph(p, batch, true);
  return {unpack(g, 0), unpack(g, 1)};
}

Tensor Encoder::embed(const ParamSet& params, std::span<const Waveform* const> batch) const {
  ParamVars p(params, false);
  return forward_graph(p, batch).h.value();
}

Tensor layer_mixing_weights(const ParamSet& params) {
  return ad::softmax(ad::Var::constant(params.at("layer_weights"))).value();
}

}  // namespace serda
