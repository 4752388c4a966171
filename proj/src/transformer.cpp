#include "kwseq/transformer.hpp"

#include <algorithm>
#include <cmath>

namespace kwseq::nn {

namespace {

Tensor random_normal(Shape shape, double stddev, Rng& rng) {
  std::vector<double> values(numel(shape));
  for (double& v : values) v = rng.normal() * stddev;
  return Tensor(std::move(shape), std::move(values), true);
}

Tensor filled(Shape shape, double value) {
  std::vector<double> values(numel(shape), value);
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

void AttentionConfig::validate() const {
  if (heads == 0 || model_dim == 0) {
    throw InvalidArgument("attention config needs positive model_dim and heads");
  }
  if (model_dim % heads != 0) {
    throw InvalidArgument("model_dim " + std::to_string(model_dim) +
                          " is not divisible by head count " + std::to_string(heads));
  }
}

MaskMatrix::MaskMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), values_(rows * cols, 0.0) {}

MaskMatrix MaskMatrix::causal(std::size_t size) {
  if (size == 0) throw InvalidArgument("causal mask needs size >= 1");
  MaskMatrix m(size, size);
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = r + 1; c < size; ++c) m.set(r, c, kMaskValue);
  return m;
}

MaskMatrix MaskMatrix::key_padding(std::size_t rows, const std::vector<bool>& key_is_pad) {
  MaskMatrix m(rows, key_is_pad.size());
  for (std::size_t c = 0; c < key_is_pad.size(); ++c) {
    if (!key_is_pad[c]) continue;
    for (std::size_t r = 0; r < rows; ++r) m.set(r, c, kMaskValue);
  }
  return m;
}

MaskMatrix MaskMatrix::combined(const MaskMatrix& other) const {
  if (other.rows_ != rows_ || other.cols_ != cols_) {
    throw ShapeError("cannot combine masks of different sizes");
  }
  MaskMatrix m(rows_, cols_);
  for (std::size_t i = 0; i < values_.size(); ++i)
    m.values_[i] = std::min(values_[i], other.values_[i]);
  return m;
}

Tensor MaskMatrix::tensor() const { return Tensor(Shape{rows_, cols_}, values_); }

MaskMatrix build_causal_mask(std::size_t size) { return MaskMatrix::causal(size); }

Tensor ForwardOptions::apply_dropout(const Tensor& x) const {
  if (!training || dropout == 0.0) return x;
  if (!rng) throw InvalidArgument("training-mode dropout requires an rng");
  return kwseq::dropout(x, dropout, true, *rng);
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
  return {random_normal(Shape{in, out}, stddev, rng), filled(Shape{out}, 0.0)};
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) const {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

LayerNormParams LayerNormParams::init(std::size_t width) {
  return {filled(Shape{width}, 1.0), filled(Shape{width}, 0.0)};
}

Tensor LayerNormParams::operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }

void LayerNormParams::visit(const std::string& prefix, const ParamVisitor& fn) const {
  fn(prefix + ".gain", gain);
  fn(prefix + ".bias", bias);
}

AttentionParams AttentionParams::init(std::size_t model_dim, Rng& rng) {
  AttentionParams p;
  p.query = Linear::init(model_dim, model_dim, rng);
  p.key = Linear::init(model_dim, model_dim, rng);
  p.value = Linear::init(model_dim, model_dim, rng);
  p.output = Linear::init(model_dim, model_dim, rng);
  return p;
}

void AttentionParams::visit(const std::string& prefix, const ParamVisitor& fn) const {
  query.visit(prefix + ".query", fn);
  key.visit(prefix + ".key", fn);
  value.visit(prefix + ".value", fn);
  output.visit(prefix + ".output", fn);
}

FeedForwardParams FeedForwardParams::init(std::size_t model_dim, Rng& rng) {
  return {Linear::init(model_dim, 4 * model_dim, rng), Linear::init(4 * model_dim, model_dim, rng)};
}

Tensor FeedForwardParams::operator()(const Tensor& x, const ForwardOptions& opts) const {
  return opts.apply_dropout(output(gelu(hidden(x))));
}

void FeedForwardParams::visit(const std::string& prefix, const ParamVisitor& fn) const {
  hidden.visit(prefix + ".hidden", fn);
  output.visit(prefix + ".output", fn);
}

EncoderLayerParams EncoderLayerParams::init(std::size_t model_dim, Rng& rng) {
  EncoderLayerParams p;
  p.self_attention = AttentionParams::init(model_dim, rng);
  p.attention_norm = LayerNormParams::init(model_dim);
  p.feed_forward = FeedForwardParams::init(model_dim, rng);
  p.output_norm = LayerNormParams::init(model_dim);
  return p;
}

void EncoderLayerParams::visit(const std::string& prefix, const ParamVisitor& fn) const {
  self_attention.visit(prefix + ".self_attention", fn);
  attention_norm.visit(prefix + ".attention_norm", fn);
  feed_forward.visit(prefix + ".feed_forward", fn);
  output_norm.visit(prefix + ".output_norm", fn);
}

DecoderLayerParams DecoderLayerParams::init(std::size_t model_dim, Rng& rng) {
  DecoderLayerParams p;
  p.self_attention = AttentionParams::init(model_dim, rng);
  p.self_attention_norm = LayerNormParams::init(model_dim);
  p.cross_attention = AttentionParams::init(model_dim, rng);
  p.cross_attention_norm = LayerNormParams::init(model_dim);
  p.feed_forward = FeedForwardParams::init(model_dim, rng);
  p.output_norm = LayerNormParams::init(model_dim);
  return p;
}

void DecoderLayerParams::visit(const std::string& prefix, const ParamVisitor& fn) const {
  self_attention.visit(prefix + ".self_attention", fn);
  self_attention_norm.visit(prefix + ".self_attention_norm", fn);
  cross_attention.visit(prefix + ".cross_attention", fn);
  cross_attention_norm.visit(prefix + ".cross_attention_norm", fn);
  feed_forward.visit(prefix + ".feed_forward", fn);
  output_norm.visit(prefix + ".output_norm", fn);
}

Tensor attention_weights(const Tensor& q, const Tensor& k, const MaskMatrix* mask) {
  if (q.rank() != 2 || k.rank() != 2 || q.dim(1) != k.dim(1)) {
    throw ShapeError("attention: query " + shape_string(q.shape()) + " and key " +
                     shape_string(k.shape()) + " are incompatible");
  }
  if (k.dim(0) == 0) throw ShapeError("attention over zero keys");
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(k.dim(1))));
  if (mask) {
    if (mask->rows() != q.dim(0) || mask->cols() != k.dim(0)) {
      throw ShapeError("attention mask " + std::to_string(mask->rows()) + "x" +
                       std::to_string(mask->cols()) + " does not match scores " +
                       shape_string(scores.shape()));
    }
    scores = add(scores, mask->tensor());
  }
  return softmax(scores, 1);
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MaskMatrix* mask) {
  if (v.rank() != 2 || v.dim(0) != k.dim(0)) {
    throw ShapeError("attention: value " + shape_string(v.shape()) + " does not match key " +
                     shape_string(k.shape()));
  }
  return matmul(attention_weights(q, k, mask), v);
}

Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv, const AttentionParams& params,
                            const AttentionConfig& config, const MaskMatrix* mask,
                            const ForwardOptions& opts) {
  if (x_q.rank() != 2 || x_kv.rank() != 2 || x_q.dim(1) != config.model_dim ||
      x_kv.dim(1) != config.model_dim) {
    throw ShapeError("multi_head_attention: inputs " + shape_string(x_q.shape()) + " / " +
                     shape_string(x_kv.shape()) + " do not have width " +
                     std::to_string(config.model_dim));
  }
  const Tensor q = params.query(x_q);
  const Tensor k = params.key(x_kv);
  const Tensor v = params.value(x_kv);
  const std::size_t dh = config.head_dim();
  std::vector<Tensor> heads;
  heads.reserve(config.heads);
  for (std::size_t h = 0; h < config.heads; ++h) {
    const std::size_t lo = h * dh, hi = lo + dh;
    heads.push_back(scaled_dot_attention(slice_cols(q, lo, hi), slice_cols(k, lo, hi),
                                         slice_cols(v, lo, hi), mask));
  }
  Tensor joined = config.heads == 1 ? heads.front() : concat_cols(heads);
  return opts.apply_dropout(params.output(joined));
}

Tensor encoder_layer(const Tensor& h, const EncoderLayerParams& params,
                     const AttentionConfig& config, const MaskMatrix* self_mask,
                     const ForwardOptions& opts) {
  Tensor attended = multi_head_attention(h, h, params.self_attention, config, self_mask, opts);
  Tensor h_tilde = params.attention_norm(add(h, attended));
  return params.output_norm(add(h_tilde, params.feed_forward(h_tilde, opts)));
}

Tensor decoder_layer(const Tensor& h, const Tensor& memory, const DecoderLayerParams& params,
                     const AttentionConfig& config, const MaskMatrix& causal_mask,
                     const MaskMatrix* memory_mask, const ForwardOptions& opts) {
  if (memory.rank() != 2 || memory.dim(0) == 0) {
    throw InvalidArgument("decoder_layer requires a non-empty memory, got " +
                          shape_string(memory.shape()));
  }
  Tensor self_attended =
      multi_head_attention(h, h, params.self_attention, config, &causal_mask, opts);
  Tensor h_tilde = params.self_attention_norm(add(h, self_attended));
  Tensor cross =
      multi_head_attention(h_tilde, memory, params.cross_attention, config, memory_mask, opts);
  Tensor h_hat = params.cross_attention_norm(add(h_tilde, cross));
  return params.output_norm(add(h_hat, params.feed_forward(h_hat, opts)));
}

EncoderStack::EncoderStack(AttentionConfig config, std::size_t layers, Rng& rng)
    : config_(config) {
  config_.validate();
  if (layers == 0) throw InvalidArgument("encoder stack needs at least one layer");
  for (std::size_t i = 0; i < layers; ++i)
    layers_.push_back(EncoderLayerParams::init(config_.model_dim, rng));
}

Tensor EncoderStack::encode(const Tensor& x, const std::vector<bool>& key_is_pad,
                            const ForwardOptions& opts) const {
  if (layers_.empty()) throw InvalidArgument("encoder stack has no layers");
  if (x.rank() != 2 || x.dim(1) != config_.model_dim) {
    throw ShapeError("encoder input " + shape_string(x.shape()) + " does not have width " +
                     std::to_string(config_.model_dim));
  }
  if (x.dim(0) == 0) return x;
  if (!key_is_pad.empty() && key_is_pad.size() != x.dim(0)) {
    throw ShapeError("encoder padding mask length does not match input length");
  }
  const bool any_pad = std::find(key_is_pad.begin(), key_is_pad.end(), true) != key_is_pad.end();
  const MaskMatrix mask = MaskMatrix::key_padding(x.dim(0), any_pad ? key_is_pad
                                                                   : std::vector<bool>(x.dim(0)));
  Tensor h = x;
  for (const auto& layer : layers_) h = encoder_layer(h, layer, config_, any_pad ? &mask : nullptr, opts);
  return h;
}

void EncoderStack::visit(const std::string& prefix, const ParamVisitor& fn) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].visit(prefix + ".layers." + std::to_string(i), fn);
}

DecoderStack::DecoderStack(AttentionConfig config, std::size_t layers, Rng& rng)
    : config_(config) {
  config_.validate();
  if (layers == 0) throw InvalidArgument("decoder stack needs at least one layer");
  for (std::size_t i = 0; i < layers; ++i)
    layers_.push_back(DecoderLayerParams::init(config_.model_dim, rng));
}

Tensor DecoderStack::decode(const Tensor& x, const Tensor& memory,
                            const std::vector<bool>& memory_is_pad,
                            const ForwardOptions& opts) const {
  if (layers_.empty()) throw InvalidArgument("decoder stack has no layers");
  if (x.rank() != 2 || x.dim(1) != config_.model_dim || x.dim(0) == 0) {
    throw ShapeError("decoder input " + shape_string(x.shape()) +
                     " must be non-empty with width " + std::to_string(config_.model_dim));
  }
  if (memory.rank() != 2 || memory.dim(0) == 0) {
    throw InvalidArgument("decoder requires a non-empty memory");
  }
  if (!memory_is_pad.empty() && memory_is_pad.size() != memory.dim(0)) {
    throw ShapeError("decoder memory mask length does not match memory length");
  }
  const MaskMatrix causal = MaskMatrix::causal(x.dim(0));
  const bool any_pad =
      std::find(memory_is_pad.begin(), memory_is_pad.end(), true) != memory_is_pad.end();
  const MaskMatrix memory_mask =
      any_pad ? MaskMatrix::key_padding(x.dim(0), memory_is_pad) : MaskMatrix(0, 0);
  Tensor h = x;
  for (const auto& layer : layers_)
    h = decoder_layer(h, memory, layer, config_, causal, any_pad ? &memory_mask : nullptr, opts);
  return h;
}

void DecoderStack::visit(const std::string& prefix, const ParamVisitor& fn) const {
  for (std::size_t i = 0; i < layers_.size(); ++i)
    layers_[i].visit(prefix + ".layers." + std::to_string(i), fn);
}

}  // namespace kwseq::nn
