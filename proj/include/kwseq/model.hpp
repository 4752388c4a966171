#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kwseq/batch.hpp"
#include "kwseq/corpus.hpp"
#include "kwseq/rng.hpp"
#include "kwseq/tensor.hpp"
#include "kwseq/transformer.hpp"

namespace kwseq {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t model_dim = 64;
  std::size_t layers = 2;  // per component
  std::size_t heads = 4;
  double dropout = 0.1;
  double gumbel_tau = 1.0;
  double alpha = 0.5;  // keyword loss weight
  double beta = 0.5;   // response loss weight
  std::size_t max_context_len = 128;
  std::size_t max_keyword_len = 16;
  std::size_t max_response_len = 32;

  // Rows in the learned position table.
  std::size_t position_capacity() const;
  SequenceLimits limits() const {
    return {max_context_len, max_keyword_len, max_response_len};
  }
  nn::AttentionConfig attention() const { return {model_dim, heads}; }
  void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class KeywordSource { GroundTruth, Generated, UserForced };
const char* to_string(KeywordSource source);

// Gumbel-Softmax samples m(k_t): one probability row per keyword (S×V).
struct SoftTokens {
  Tensor probabilities;

  std::size_t size() const { return probabilities.defined() ? probabilities.dim(0) : 0; }
  std::vector<int> argmax_ids() const;
};

struct GenerationResult {
  std::vector<int> keyword_ids;
  std::vector<int> response_ids;
  KeywordSource keyword_source = KeywordSource::Generated;
  // Logits of each greedy keyword step; empty when keywords were forced.
  std::vector<std::vector<double>> keyword_logits;
};

// softmax((log π + g) / τ) with π = softmax(logits) and g = -log(-log u).
// `hard` snaps the forward value to the one-hot argmax while gradients follow
// the soft sample. `logits` is a vector or a 1×V row.
Tensor gumbel_softmax(const Tensor& logits, double tau, Rng& rng, bool hard = false);

// α·L_K + β·L_Y, both mean token cross-entropies ignoring kPadId.
Tensor joint_loss(const Tensor& keyword_logits, std::span<const int> keyword_targets,
                  const Tensor& response_logits, std::span<const int> response_targets,
                  double alpha, double beta);

// Per-example loss terms, summed over tokens so a batch can be normalised
// by its total token counts.
struct ExampleLoss {
  Tensor keyword_loss_sum;
  std::size_t keyword_tokens = 0;
  Tensor response_loss_sum;
  std::size_t response_tokens = 0;
};

/// Context encoder, keywords decoder, keywords encoder and response decoder
/// sharing one token embedding table; the output projection is tied to it.
class KwSeq2Seq {
 public:
  KwSeq2Seq(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  // Stable order; names are used as checkpoint keys.
  std::vector<NamedTensor> named_parameters() const;
  const Tensor& token_embedding() const { return token_embedding_; }

  // Token + type + position embeddings of a context row.
  Tensor embed_context(const ContextRow& row, const nn::ForwardOptions& opts = {}) const;
  // H_X for one row (T×d).
  Tensor encode_context(const ContextRow& row, const nn::ForwardOptions& opts = {}) const;
  // H_X for a padded batch (B×T×d).
  Tensor encode_context(const EncodedBatch& batch, const nn::ForwardOptions& opts = {}) const;

  // Next-keyword logits for a [BOS]-prefixed input (S×V).
  Tensor decode_keywords_teacher_forced(const Tensor& context_states,
                                        const std::vector<bool>& context_padding,
                                        std::span<const int> keyword_input,
                                        const nn::ForwardOptions& opts = {}) const;
  // Autoregressive Gumbel-Softmax sampling fed back through m(k_t)·E. Stops
  // when a sample's argmax is [SEP] or after max_keyword_len keywords.
  SoftTokens sample_keywords_soft(const Tensor& context_states,
                                  const std::vector<bool>& context_padding, Rng& rng,
                                  const nn::ForwardOptions& opts = {}) const;
  // Noiseless argmax decoding; `step_logits` receives each step's logits.
  std::vector<int> decode_keywords_greedy(const Tensor& context_states,
                                          const std::vector<bool>& context_padding,
                                          std::size_t max_keywords,
                                          std::vector<std::vector<double>>* step_logits = nullptr) const;

  // H_K; zero rows for an empty keyword sequence.
  Tensor encode_keywords(std::span<const int> keyword_ids, const nn::ForwardOptions& opts = {}) const;
  Tensor encode_keywords(const SoftTokens& keywords, const nn::ForwardOptions& opts = {}) const;

  // Teacher-forced response logits over the memory [H_X ; H_K].
  Tensor decode_response(const Tensor& context_states, const std::vector<bool>& context_padding,
                         const Tensor& keyword_states, std::span<const int> response_input,
                         const nn::ForwardOptions& opts = {}) const;
  std::vector<int> decode_response_greedy(const Tensor& context_states,
                                          const std::vector<bool>& context_padding,
                                          const Tensor& keyword_states,
                                          std::size_t max_tokens) const;

  // Full inference pipeline. `forced_keywords` skips the keywords decoder.
  // `max_response_len` of 0 uses the configured maximum.
  GenerationResult generate(const ContextRow& context,
                            const std::optional<std::vector<int>>& forced_keywords = std::nullopt,
                            std::size_t max_response_len = 0) const;

  // Training forward pass for one example. L_K is teacher-forced on the
  // ground-truth keywords; `source` selects what the keywords encoder sees.
  ExampleLoss forward_example(const ContextRow& context, std::span<const int> keyword_target,
                              std::span<const int> response_target, KeywordSource source,
                              Rng& rng, const nn::ForwardOptions& opts) const;

  // hidden (T×d) -> vocabulary logits (T×V) through the tied embedding.
  Tensor project_to_vocab(const Tensor& hidden) const;

 private:
  Tensor embed_positions(std::size_t count) const;
  Tensor embed_tokens(std::span<const int> ids) const;
  Tensor decode_keyword_inputs(const Tensor& context_states, const std::vector<bool>& padding,
                               const Tensor& inputs, const nn::ForwardOptions& opts) const;

  ModelConfig config_;
  Tensor token_embedding_;     // V×d
  Tensor type_embedding_;      // 2×d
  Tensor position_embedding_;  // P×d
  Tensor output_bias_;         // V
  nn::EncoderStack context_encoder_;
  nn::DecoderStack keyword_decoder_;
  nn::EncoderStack keyword_encoder_;
  nn::DecoderStack response_decoder_;
};

std::size_t argmax(std::span<const double> values);

}  // namespace kwseq
