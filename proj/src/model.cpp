#include "kwseq/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kwseq/ops.hpp"

namespace kwseq {

namespace {

Tensor normal_table(Shape shape, double stddev, Rng& rng) {
  std::vector<double> values(numel(shape));
  for (double& v : values) v = rng.normal() * stddev;
  return Tensor(std::move(shape), std::move(values), true);
}

std::size_t checked_size(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
    throw InvalidArgument(std::string("model config field '") + key +
                          "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double checked_double(const nlohmann::json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number()) {
    throw InvalidArgument(std::string("model config field '") + key + "' must be a number");
  }
  return v.get<double>();
}

}  // namespace

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("argmax of an empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

std::size_t ModelConfig::position_capacity() const {
  return std::max({max_context_len + max_keyword_len, max_keyword_len + 1, max_response_len + 1});
}

void ModelConfig::validate() const {
  if (vocab_size < static_cast<std::size_t>(kReservedTokens)) {
    throw InvalidArgument("vocab_size must cover the reserved tokens");
  }
  if (layers == 0) throw InvalidArgument("layers must be >= 1");
  attention().validate();
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidArgument("dropout must lie in [0, 1)");
  if (!(gumbel_tau > 0.0)) throw InvalidArgument("gumbel_tau must be > 0");
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(alpha + beta > 0.0)) {
    throw InvalidArgument("alpha and beta must be >= 0 with a positive sum");
  }
  if (max_context_len == 0 || max_keyword_len == 0 || max_response_len == 0) {
    throw InvalidArgument("sequence length limits must be >= 1");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"vocab_size", c.vocab_size},
                     {"model_dim", c.model_dim},
                     {"layers", c.layers},
                     {"heads", c.heads},
                     {"dropout", c.dropout},
                     {"gumbel_tau", c.gumbel_tau},
                     {"alpha", c.alpha},
                     {"beta", c.beta},
                     {"max_context_len", c.max_context_len},
                     {"max_keyword_len", c.max_keyword_len},
                     {"max_response_len", c.max_response_len}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw InvalidArgument("model config must be a JSON object");
  static const char* known[] = {"vocab_size", "model_dim", "layers", "heads",
                                "dropout", "gumbel_tau", "alpha", "beta",
                                "max_context_len", "max_keyword_len", "max_response_len"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw InvalidArgument("unknown model config field '" + key + "'");
    }
  }
  c.vocab_size = checked_size(j, "vocab_size", c.vocab_size);
  c.model_dim = checked_size(j, "model_dim", c.model_dim);
  c.layers = checked_size(j, "layers", c.layers);
  c.heads = checked_size(j, "heads", c.heads);
  c.dropout = checked_double(j, "dropout", c.dropout);
  c.gumbel_tau = checked_double(j, "gumbel_tau", c.gumbel_tau);
  c.alpha = checked_double(j, "alpha", c.alpha);
  c.beta = checked_double(j, "beta", c.beta);
  c.max_context_len = checked_size(j, "max_context_len", c.max_context_len);
  c.max_keyword_len = checked_size(j, "max_keyword_len", c.max_keyword_len);
  c.max_response_len = checked_size(j, "max_response_len", c.max_response_len);
}

const char* to_string(KeywordSource source) {
  switch (source) {
    case KeywordSource::GroundTruth: return "ground-truth";
    case KeywordSource::Generated: return "generated";
    case KeywordSource::UserForced: return "user-forced";
  }
  return "unknown";
}

std::vector<int> SoftTokens::argmax_ids() const {
  std::vector<int> ids;
  if (!probabilities.defined()) return ids;
  const std::size_t vocab = probabilities.dim(1);
  auto values = probabilities.values();
  for (std::size_t r = 0; r < size(); ++r)
    ids.push_back(static_cast<int>(argmax(values.subspan(r * vocab, vocab))));
  return ids;
}

Tensor gumbel_softmax(const Tensor& logits, double tau, Rng& rng, bool hard) {
  if (!(tau > 0.0)) throw InvalidArgument("gumbel_softmax: tau must be > 0");
  if (logits.rank() != 1 && !(logits.rank() == 2 && logits.dim(0) == 1)) {
    throw ShapeError("gumbel_softmax expects a vector or 1xV row, got " +
                     shape_string(logits.shape()));
  }
  std::vector<double> noise(logits.size());
  for (double& g : noise) g = -std::log(-std::log(rng.uniform()));
  Tensor perturbed = add(log_softmax(logits), Tensor(logits.shape(), std::move(noise)));
  Tensor soft = softmax(scale(perturbed, 1.0 / tau), logits.rank() - 1);
  if (!hard) return soft;
  std::vector<double> one_hot(soft.size(), 0.0);
  one_hot[argmax(soft.values())] = 1.0;
  return straight_through(std::move(one_hot), soft);
}

Tensor joint_loss(const Tensor& keyword_logits, std::span<const int> keyword_targets,
                  const Tensor& response_logits, std::span<const int> response_targets,
                  double alpha, double beta) {
  Tensor lk = cross_entropy(keyword_logits, keyword_targets, kPadId);
  Tensor ly = cross_entropy(response_logits, response_targets, kPadId);
  return add(scale(lk, alpha), scale(ly, beta));
}

KwSeq2Seq::KwSeq2Seq(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng root(seed);
  Rng embed_rng = root.fork(1);
  const std::size_t d = config_.model_dim;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  token_embedding_ = normal_table(Shape{config_.vocab_size, d}, stddev, embed_rng);
  type_embedding_ = normal_table(Shape{2, d}, stddev, embed_rng);
  position_embedding_ = normal_table(Shape{config_.position_capacity(), d}, stddev, embed_rng);
  output_bias_ = Tensor(Shape{config_.vocab_size}, std::vector<double>(config_.vocab_size, 0.0),
                        true);
  Rng r2 = root.fork(2), r3 = root.fork(3), r4 = root.fork(4), r5 = root.fork(5);
  const auto attn = config_.attention();
  context_encoder_ = nn::EncoderStack(attn, config_.layers, r2);
  keyword_decoder_ = nn::DecoderStack(attn, config_.layers, r3);
  keyword_encoder_ = nn::EncoderStack(attn, config_.layers, r4);
  response_decoder_ = nn::DecoderStack(attn, config_.layers, r5);
}

std::vector<NamedTensor> KwSeq2Seq::named_parameters() const {
  std::vector<NamedTensor> out;
  out.push_back({"embedding.token", token_embedding_});
  out.push_back({"embedding.type", type_embedding_});
  out.push_back({"embedding.position", position_embedding_});
  out.push_back({"output.bias", output_bias_});
  auto collect = [&out](const std::string& name, const Tensor& t) { out.push_back({name, t}); };
  context_encoder_.visit("context_encoder", collect);
  keyword_decoder_.visit("keyword_decoder", collect);
  keyword_encoder_.visit("keyword_encoder", collect);
  response_decoder_.visit("response_decoder", collect);
  return out;
}

Tensor KwSeq2Seq::embed_positions(std::size_t count) const {
  if (count > position_embedding_.dim(0)) {
    throw InvalidArgument("sequence of length " + std::to_string(count) +
                          " exceeds the position table (" +
                          std::to_string(position_embedding_.dim(0)) + ")");
  }
  return slice_rows(position_embedding_, 0, count);
}

Tensor KwSeq2Seq::embed_tokens(std::span<const int> ids) const {
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(config_.vocab_size));
    }
  }
  return gather_rows(token_embedding_, ids);
}

Tensor KwSeq2Seq::embed_context(const ContextRow& row, const nn::ForwardOptions& opts) const {
  const std::size_t t = row.size();
  if (t == 0) throw InvalidArgument("empty context row");
  if (t > config_.max_context_len) {
    throw InvalidArgument("context of " + std::to_string(t) + " tokens exceeds max_context_len " +
                          std::to_string(config_.max_context_len));
  }
  if (row.type_ids.size() != t || row.position_ids.size() != t || row.padding.size() != t) {
    throw ShapeError("context row id vectors differ in length");
  }
  for (int id : row.type_ids)
    if (id != 0 && id != 1) throw InvalidArgument("type id must be 0 or 1");
  for (int id : row.position_ids)
    if (id < 0 || static_cast<std::size_t>(id) >= config_.max_context_len)
      throw InvalidArgument("position id " + std::to_string(id) + " out of range");
  Tensor x = add(embed_tokens(row.token_ids), gather_rows(type_embedding_, row.type_ids));
  x = add(x, gather_rows(position_embedding_, row.position_ids));
  return opts.apply_dropout(x);
}

Tensor KwSeq2Seq::encode_context(const ContextRow& row, const nn::ForwardOptions& opts) const {
  return context_encoder_.encode(embed_context(row, opts), row.padding, opts);
}

Tensor KwSeq2Seq::encode_context(const EncodedBatch& batch, const nn::ForwardOptions& opts) const {
  if (batch.batch_size == 0) throw InvalidArgument("empty batch");
  std::vector<Tensor> rows;
  rows.reserve(batch.batch_size);
  for (std::size_t b = 0; b < batch.batch_size; ++b)
    rows.push_back(encode_context(batch.context_row(b), opts));
  return stack(rows);
}

Tensor KwSeq2Seq::project_to_vocab(const Tensor& hidden) const {
  return add(matmul(hidden, transpose(token_embedding_)), output_bias_);
}

Tensor KwSeq2Seq::decode_keyword_inputs(const Tensor& context_states,
                                        const std::vector<bool>& padding, const Tensor& inputs,
                                        const nn::ForwardOptions& opts) const {
  Tensor x = opts.apply_dropout(add(inputs, embed_positions(inputs.dim(0))));
  return keyword_decoder_.decode(x, context_states, padding, opts);
}

Tensor KwSeq2Seq::decode_keywords_teacher_forced(const Tensor& context_states,
                                                 const std::vector<bool>& context_padding,
                                                 std::span<const int> keyword_input,
                                                 const nn::ForwardOptions& opts) const {
  if (keyword_input.empty()) throw InvalidArgument("keyword input needs the [BOS] marker");
  if (keyword_input.size() > config_.max_keyword_len + 1) {
    throw InvalidArgument("keyword sequence of " + std::to_string(keyword_input.size() - 1) +
                          " exceeds max_keyword_len " + std::to_string(config_.max_keyword_len));
  }
  Tensor h = decode_keyword_inputs(context_states, context_padding, embed_tokens(keyword_input),
                                   opts);
  return project_to_vocab(h);
}

SoftTokens KwSeq2Seq::sample_keywords_soft(const Tensor& context_states,
                                           const std::vector<bool>& context_padding, Rng& rng,
                                           const nn::ForwardOptions& opts) const {
  const int bos = kBosId;
  std::vector<Tensor> inputs{embed_tokens(std::span<const int>(&bos, 1))};
  std::vector<Tensor> samples;
  for (std::size_t t = 0; t < config_.max_keyword_len; ++t) {
    Tensor h = decode_keyword_inputs(context_states, context_padding, concat_rows(inputs), opts);
    Tensor logits = project_to_vocab(slice_rows(h, t, t + 1));
    Tensor m = gumbel_softmax(logits, config_.gumbel_tau, rng, false);
    if (argmax(m.values()) == static_cast<std::size_t>(kSepId)) break;
    samples.push_back(m);
    inputs.push_back(matmul(m, token_embedding_));
  }
  if (samples.empty()) return {Tensor(Shape{0, config_.vocab_size})};
  return {concat_rows(samples)};
}

std::vector<int> KwSeq2Seq::decode_keywords_greedy(
    const Tensor& context_states, const std::vector<bool>& context_padding,
    std::size_t max_keywords, std::vector<std::vector<double>>* step_logits) const {
  NoGradGuard no_grad;
  max_keywords = std::min(max_keywords, config_.max_keyword_len);
  std::vector<int> prefix{kBosId};
  for (std::size_t t = 0; t < max_keywords; ++t) {
    Tensor logits = decode_keywords_teacher_forced(context_states, context_padding, prefix);
    auto last = logits.values().subspan(t * config_.vocab_size, config_.vocab_size);
    if (step_logits) step_logits->emplace_back(last.begin(), last.end());
    const int next = static_cast<int>(argmax(last));
    if (next == kSepId) break;
    prefix.push_back(next);
  }
  return {prefix.begin() + 1, prefix.end()};
}

Tensor KwSeq2Seq::encode_keywords(std::span<const int> keyword_ids,
                                  const nn::ForwardOptions& opts) const {
  if (keyword_ids.empty()) return Tensor(Shape{0, config_.model_dim});
  Tensor x = opts.apply_dropout(add(embed_tokens(keyword_ids), embed_positions(keyword_ids.size())));
  return keyword_encoder_.encode(x, std::vector<bool>(keyword_ids.size(), false), opts);
}

Tensor KwSeq2Seq::encode_keywords(const SoftTokens& keywords, const nn::ForwardOptions& opts) const {
  const std::size_t s = keywords.size();
  if (s == 0) return Tensor(Shape{0, config_.model_dim});
  if (keywords.probabilities.rank() != 2 || keywords.probabilities.dim(1) != config_.vocab_size) {
    throw ShapeError("soft keywords must be S x vocab, got " +
                     shape_string(keywords.probabilities.shape()));
  }
  Tensor mixture = matmul(keywords.probabilities, token_embedding_);
  Tensor x = opts.apply_dropout(add(mixture, embed_positions(s)));
  return keyword_encoder_.encode(x, std::vector<bool>(s, false), opts);
}

Tensor KwSeq2Seq::decode_response(const Tensor& context_states,
                                  const std::vector<bool>& context_padding,
                                  const Tensor& keyword_states,
                                  std::span<const int> response_input,
                                  const nn::ForwardOptions& opts) const {
  if (response_input.empty()) throw InvalidArgument("response input needs the [BOS] marker");
  if (keyword_states.dim(1) != context_states.dim(1)) {
    throw ShapeError("H_X " + shape_string(context_states.shape()) + " and H_K " +
                     shape_string(keyword_states.shape()) + " differ in width");
  }
  const std::size_t memory_len = context_states.dim(0) + keyword_states.dim(0);
  if (memory_len > config_.max_context_len + config_.max_keyword_len) {
    throw InvalidArgument("concatenated memory of " + std::to_string(memory_len) +
                          " rows exceeds capacity " +
                          std::to_string(config_.max_context_len + config_.max_keyword_len));
  }
  Tensor memory = concat_rows({context_states, keyword_states});
  std::vector<bool> memory_padding = context_padding;
  memory_padding.resize(memory_len, false);
  Tensor x = opts.apply_dropout(
      add(embed_tokens(response_input), embed_positions(response_input.size())));
  return project_to_vocab(response_decoder_.decode(x, memory, memory_padding, opts));
}

std::vector<int> KwSeq2Seq::decode_response_greedy(const Tensor& context_states,
                                                   const std::vector<bool>& context_padding,
                                                   const Tensor& keyword_states,
                                                   std::size_t max_tokens) const {
  NoGradGuard no_grad;
  max_tokens = std::min(max_tokens, config_.max_response_len);
  std::vector<int> prefix{kBosId};
  for (std::size_t t = 0; t < max_tokens; ++t) {
    Tensor logits = decode_response(context_states, context_padding, keyword_states, prefix);
    const int next =
        static_cast<int>(argmax(logits.values().subspan(t * config_.vocab_size, config_.vocab_size)));
    if (next == kSepId) break;
    prefix.push_back(next);
  }
  return {prefix.begin() + 1, prefix.end()};
}

GenerationResult KwSeq2Seq::generate(const ContextRow& context,
                                     const std::optional<std::vector<int>>& forced_keywords,
                                     std::size_t max_response_len) const {
  NoGradGuard no_grad;
  if (context.real_length() == 0) throw InvalidArgument("generate: empty context");
  GenerationResult result;
  Tensor hx = encode_context(context);
  if (forced_keywords) {
    result.keyword_source = KeywordSource::UserForced;
    result.keyword_ids = *forced_keywords;
    if (result.keyword_ids.size() > config_.max_keyword_len)
      result.keyword_ids.resize(config_.max_keyword_len);
  } else {
    result.keyword_source = KeywordSource::Generated;
    result.keyword_ids = decode_keywords_greedy(hx, context.padding, config_.max_keyword_len,
                                                &result.keyword_logits);
  }
  Tensor hk = encode_keywords(result.keyword_ids);
  const std::size_t limit = max_response_len == 0 ? config_.max_response_len : max_response_len;
  result.response_ids = decode_response_greedy(hx, context.padding, hk, limit);
  return result;
}

ExampleLoss KwSeq2Seq::forward_example(const ContextRow& context,
                                       std::span<const int> keyword_target,
                                       std::span<const int> response_target,
                                       KeywordSource source, Rng& rng,
                                       const nn::ForwardOptions& opts) const {
  if (keyword_target.size() < 2 || response_target.size() < 2) {
    throw InvalidArgument("targets must hold at least [BOS] and [SEP]");
  }
  Tensor hx = encode_context(context, opts);

  auto kw_input = keyword_target.first(keyword_target.size() - 1);
  auto kw_labels = keyword_target.subspan(1);
  Tensor kw_logits = decode_keywords_teacher_forced(hx, context.padding, kw_input, opts);
  CrossEntropySum lk = cross_entropy_sum(kw_logits, kw_labels, kPadId);

  Tensor hk;
  if (source == KeywordSource::Generated) {
    hk = encode_keywords(sample_keywords_soft(hx, context.padding, rng, opts), opts);
  } else {
    std::vector<int> ids;
    for (int id : keyword_target.subspan(1)) {
      if (id == kSepId) break;
      if (id != kPadId) ids.push_back(id);
    }
    hk = encode_keywords(ids, opts);
  }

  auto resp_input = response_target.first(response_target.size() - 1);
  auto resp_labels = response_target.subspan(1);
  Tensor resp_logits = decode_response(hx, context.padding, hk, resp_input, opts);
  CrossEntropySum ly = cross_entropy_sum(resp_logits, resp_labels, kPadId);
  return {lk.loss, lk.count, ly.loss, ly.count};
}

}  // namespace kwseq
