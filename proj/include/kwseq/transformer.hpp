#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "kwseq/ops.hpp"
#include "kwseq/rng.hpp"
#include "kwseq/tensor.hpp"

namespace kwseq::nn {

struct AttentionConfig {
  std::size_t model_dim = 0;
  std::size_t heads = 1;

  std::size_t head_dim() const { return model_dim / heads; }
  void validate() const;
};

// Finite stand-in for -inf in additive masks.
inline constexpr double kMaskValue = -1e9;

/// Additive attention mask with entries in {0, kMaskValue}.
class MaskMatrix {
 public:
  MaskMatrix(std::size_t rows, std::size_t cols);

  // 0 on and below the diagonal, kMaskValue above.
  static MaskMatrix causal(std::size_t size);
  // kMaskValue in every column whose key is padding.
  static MaskMatrix key_padding(std::size_t rows, const std::vector<bool>& key_is_pad);

  // Elementwise minimum; a position masked in either stays masked.
  MaskMatrix combined(const MaskMatrix& other) const;

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  void set(std::size_t r, std::size_t c, double v) { values_[r * cols_ + c] = v; }
  Tensor tensor() const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> values_;
};

MaskMatrix build_causal_mask(std::size_t size);

// Flags threaded through forward passes for dropout.
struct ForwardOptions {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;

  Tensor apply_dropout(const Tensor& x) const;
};

using ParamVisitor = std::function<void(const std::string& name, const Tensor& param)>;

struct Linear {
  Tensor weight;  // in × out
  Tensor bias;    // out

  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;

  static LayerNormParams init(std::size_t width);
  Tensor operator()(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn) const;
};

// Query/key/value projections are d×d; head h owns columns [h·d_h, (h+1)·d_h).
struct AttentionParams {
  Linear query;
  Linear key;
  Linear value;
  Linear output;

  static AttentionParams init(std::size_t model_dim, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn) const;
};

// Two affine maps, width d -> 4d -> d, GELU between.
struct FeedForwardParams {
  Linear hidden;
  Linear output;

  static FeedForwardParams init(std::size_t model_dim, Rng& rng);
  Tensor operator()(const Tensor& x, const ForwardOptions& opts) const;
  void visit(const std::string& prefix, const ParamVisitor& fn) const;
};

struct EncoderLayerParams {
  AttentionParams self_attention;
  LayerNormParams attention_norm;
  FeedForwardParams feed_forward;
  LayerNormParams output_norm;

  static EncoderLayerParams init(std::size_t model_dim, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn) const;
};

struct DecoderLayerParams {
  AttentionParams self_attention;
  LayerNormParams self_attention_norm;
  AttentionParams cross_attention;
  LayerNormParams cross_attention_norm;
  FeedForwardParams feed_forward;
  LayerNormParams output_norm;

  static DecoderLayerParams init(std::size_t model_dim, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor& fn) const;
};

// softmax(Q·Kᵀ/√d_k + mask)·V for one head. Q is Tq×d_k, K and V are Tk×d_k
// (V may be wider). `mask` may be null.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const MaskMatrix* mask);
// The Tq×Tk attention distribution used by scaled_dot_attention.
Tensor attention_weights(const Tensor& q, const Tensor& k, const MaskMatrix* mask);

// Projects per head, attends, concatenates the heads and applies the output
// projection. Self-attention passes the same tensor as x_q and x_kv.
Tensor multi_head_attention(const Tensor& x_q, const Tensor& x_kv, const AttentionParams& params,
                            const AttentionConfig& config, const MaskMatrix* mask,
                            const ForwardOptions& opts = {});

// Post-norm residual layers:
//   h~ = LN(h + SelfAttn(h)),  h' = LN(h~ + FC(h~))
Tensor encoder_layer(const Tensor& h, const EncoderLayerParams& params,
                     const AttentionConfig& config, const MaskMatrix* self_mask,
                     const ForwardOptions& opts = {});
//   h~ = LN(h + MaskedSelfAttn(h)),  h^ = LN(h~ + CrossAttn(h~, memory)),
//   h' = LN(h^ + FC(h^))
Tensor decoder_layer(const Tensor& h, const Tensor& memory, const DecoderLayerParams& params,
                     const AttentionConfig& config, const MaskMatrix& causal_mask,
                     const MaskMatrix* memory_mask, const ForwardOptions& opts = {});

class EncoderStack {
 public:
  EncoderStack() = default;
  EncoderStack(AttentionConfig config, std::size_t layers, Rng& rng);

  // x is T×d; padded keys are never attended.
  Tensor encode(const Tensor& x, const std::vector<bool>& key_is_pad,
                const ForwardOptions& opts = {}) const;

  const AttentionConfig& config() const { return config_; }
  std::vector<EncoderLayerParams>& layers() { return layers_; }
  const std::vector<EncoderLayerParams>& layers() const { return layers_; }
  void visit(const std::string& prefix, const ParamVisitor& fn) const;

 private:
  AttentionConfig config_;
  std::vector<EncoderLayerParams> layers_;
};

class DecoderStack {
 public:
  DecoderStack() = default;
  DecoderStack(AttentionConfig config, std::size_t layers, Rng& rng);

  // x is T×d (causally masked), memory is S×d with S ≥ 1.
  Tensor decode(const Tensor& x, const Tensor& memory, const std::vector<bool>& memory_is_pad,
                const ForwardOptions& opts = {}) const;

  const AttentionConfig& config() const { return config_; }
  std::vector<DecoderLayerParams>& layers() { return layers_; }
  const std::vector<DecoderLayerParams>& layers() const { return layers_; }
  void visit(const std::string& prefix, const ParamVisitor& fn) const;

 private:
  AttentionConfig config_;
  std::vector<DecoderLayerParams> layers_;
};

}  // namespace kwseq::nn
