#include "kwseq/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "kwseq/bundle.hpp"
#include "kwseq/checkpoint.hpp"
#include "kwseq/ops.hpp"

namespace kwseq {

namespace fs = std::filesystem;

void AnnealSchedule::validate() const {
  if (!(0.0 <= x1 && x1 <= x2 && x2 <= 1.0)) {
    throw InvalidArgument("anneal schedule needs 0 <= x1 <= x2 <= 1");
  }
}

double anneal_probability(double x, const AnnealSchedule& s) {
  s.validate();
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidArgument("anneal progress must lie in [0, 1]");
  if (x < s.x1) return 1.0;
  if (x > s.x2) return 0.0;
  if (s.literal) return 0.5 * (1.0 + std::cos(std::numbers::pi * x));
  if (s.x2 == s.x1) return 1.0;  // x == x1 == x2: step happens just after
  return 0.5 * (1.0 + std::cos(std::numbers::pi * (x - s.x1) / (s.x2 - s.x1)));
}

const char* to_string(AnnealMode mode) {
  switch (mode) {
    case AnnealMode::Cosine: return "cosine";
    case AnnealMode::AllGroundTruth: return "all-ground-truth";
    case AnnealMode::AllGenerated: return "all-generated";
  }
  return "unknown";
}

AnnealMode anneal_mode_from_string(const std::string& name) {
  if (name == "cosine") return AnnealMode::Cosine;
  if (name == "all-ground-truth" || name == "all-gt") return AnnealMode::AllGroundTruth;
  if (name == "all-generated" || name == "all-gen") return AnnealMode::AllGenerated;
  throw InvalidArgument("unknown anneal mode '" + name +
                        "' (expected cosine, all-ground-truth or all-generated)");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw InvalidArgument("epochs must be >= 1");
  if (token_budget == 0) throw InvalidArgument("token_budget must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be > 0");
  if (!(clip_norm > 0.0)) throw InvalidArgument("clip_norm must be > 0");
  if (!(keyword_ratio > 0.0 && keyword_ratio <= 1.0)) {
    throw InvalidArgument("keyword_ratio must lie in (0, 1]");
  }
  if (window < 2) throw InvalidArgument("window must be >= 2");
  if (max_vocab < static_cast<std::size_t>(kReservedTokens)) {
    throw InvalidArgument("max_vocab must cover the reserved tokens");
  }
  schedule.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"max_steps", c.max_steps},
                     {"token_budget", c.token_budget},
                     {"learning_rate", c.learning_rate},
                     {"clip_norm", c.clip_norm},
                     {"anneal_mode", to_string(c.mode)},
                     {"x1", c.schedule.x1},
                     {"x2", c.schedule.x2},
                     {"literal_anneal", c.schedule.literal},
                     {"seed", c.seed},
                     {"checkpoint_every", c.checkpoint_every},
                     {"keyword_ratio", c.keyword_ratio},
                     {"window", c.window},
                     {"max_vocab", c.max_vocab},
                     {"min_frequency", c.min_frequency}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw InvalidArgument("train config must be a JSON object");
  static const char* known[] = {"epochs", "max_steps", "token_budget", "learning_rate",
                                "clip_norm", "anneal_mode", "x1", "x2", "literal_anneal",
                                "seed", "checkpoint_every", "keyword_ratio", "window",
                                "max_vocab", "min_frequency"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw InvalidArgument("unknown train config field '" + key + "'");
    }
  }
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.token_budget = j.value("token_budget", c.token_budget);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    if (j.contains("anneal_mode")) c.mode = anneal_mode_from_string(j.at("anneal_mode"));
    c.schedule.x1 = j.value("x1", c.schedule.x1);
    c.schedule.x2 = j.value("x2", c.schedule.x2);
    c.schedule.literal = j.value("literal_anneal", c.schedule.literal);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.keyword_ratio = j.value("keyword_ratio", c.keyword_ratio);
    c.window = j.value("window", c.window);
    c.max_vocab = j.value("max_vocab", c.max_vocab);
    c.min_frequency = j.value("min_frequency", c.min_frequency);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad train config: ") + e.what());
  }
}

ModelConfig overfit_model_config() {
  ModelConfig c;
  c.model_dim = 64;
  c.layers = 2;
  c.heads = 4;
  c.dropout = 0.0;
  c.max_context_len = 64;
  c.max_keyword_len = 8;
  c.max_response_len = 16;
  return c;
}

TrainConfig overfit_train_config() {
  TrainConfig c;
  c.epochs = 100;
  c.token_budget = 1600;
  c.learning_rate = 1e-3;
  c.seed = 7;
  return c;
}

namespace {

ContextRow trimmed(ContextRow row) {
  const std::size_t n = row.real_length();
  row.token_ids.resize(n);
  row.type_ids.resize(n);
  row.position_ids.resize(n);
  row.padding.resize(n);
  return row;
}

}  // namespace

StepStats compute_batch_gradients(const KwSeq2Seq& model, const EncodedBatch& batch, double p,
                                  Rng& rng, std::size_t batch_id) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("keyword probability must lie in [0, 1]");
  const ModelConfig& cfg = model.config();
  StepStats stats;
  stats.p = p;
  stats.source = rng.bernoulli(p) ? KeywordSource::GroundTruth : KeywordSource::Generated;

  std::size_t kw_tokens = 0, resp_tokens = 0;
  std::vector<std::vector<int>> kw_targets, resp_targets;
  for (std::size_t b = 0; b < batch.batch_size; ++b) {
    kw_targets.push_back(batch.keyword_target(b));
    resp_targets.push_back(batch.response_target(b));
    kw_tokens += kw_targets.back().size() - 1;
    resp_tokens += resp_targets.back().size() - 1;
  }

  const auto params = model.named_parameters();
  zero_grads(params);
  double lk_total = 0.0, ly_total = 0.0;
  try {
    for (std::size_t b = 0; b < batch.batch_size; ++b) {
      Rng dropout_rng = rng.fork(2 * b + 1);
      Rng gumbel_rng = rng.fork(2 * b + 2);
      nn::ForwardOptions opts{true, cfg.dropout, &dropout_rng};
      ExampleLoss ex = model.forward_example(trimmed(batch.context_row(b)), kw_targets[b],
                                             resp_targets[b], stats.source, gumbel_rng, opts);
      Tensor lk = scale(ex.keyword_loss_sum, 1.0 / static_cast<double>(kw_tokens));
      Tensor ly = scale(ex.response_loss_sum, 1.0 / static_cast<double>(resp_tokens));
      Tensor total = add(scale(lk, cfg.alpha), scale(ly, cfg.beta));
      total.backward();
      lk_total += lk.item();
      ly_total += ly.item();
    }
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " (batch " + std::to_string(batch_id) +
                       ", p=" + std::to_string(p) + ", keywords " + to_string(stats.source) + ")");
  }
  stats.keyword_loss = lk_total;
  stats.response_loss = ly_total;
  stats.loss = cfg.alpha * lk_total + cfg.beta * ly_total;
  if (!std::isfinite(stats.loss)) {
    throw NumericError("non-finite loss in batch " + std::to_string(batch_id) + " (p=" +
                       std::to_string(p) + ", keywords " + to_string(stats.source) + ")");
  }
  return stats;
}

StepStats train_step(const KwSeq2Seq& model, const EncodedBatch& batch, AdamState& optimizer,
                     double p, double clip_norm, Rng& rng, std::size_t batch_id) {
  StepStats stats = compute_batch_gradients(model, batch, p, rng, batch_id);
  const auto params = model.named_parameters();
  stats.grad_norm = clip_grad_norm(params, clip_norm);
  adam_step(params, optimizer);
  return stats;
}

std::vector<EncodedExample> encode_examples(const std::vector<DialogueExample>& examples,
                                            const Vocabulary& vocab,
                                            const SequenceLimits& limits) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    out.push_back(build_input_representation(examples[i], vocab, limits));
    out.back().example_index = i;
  }
  return out;
}

PreparedCorpus prepare_corpus(const fs::path& corpus, const TrainConfig& train,
                              const ModelConfig& model) {
  train.validate();
  auto conversations = load_conversations(corpus);
  PreparedCorpus out;
  out.vocab = Vocabulary::build(conversations, train.max_vocab, train.min_frequency);
  out.examples = window_corpus(conversations, train.window);
  annotate_keywords(out.examples, train.keyword_ratio);
  out.encoded = encode_examples(out.examples, out.vocab, model.limits());
  return out;
}

namespace {

std::string format_row(const LogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.6f\n", r.step, r.epoch, r.p,
                r.loss, r.keyword_loss, r.response_loss, r.wall_time);
  return buf;
}

std::string step_dir_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step-%06zu", step);
  return buf;
}

}  // namespace

TrainResult train(KwSeq2Seq& model, const Vocabulary& vocab,
                  std::span<const EncodedExample> examples, const TrainConfig& config,
                  const fs::path& out_dir, const StepCallback& on_step) {
  config.validate();
  if (examples.empty()) throw InvalidArgument("training set is empty");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());

  Rng root(config.seed);
  Rng batch_rng = root.fork(11);
  std::vector<std::vector<EncodedBatch>> epochs;
  std::size_t total_steps = 0;
  for (std::size_t e = 0; e < config.epochs; ++e) {
    if (config.max_steps && total_steps >= config.max_steps) break;
    epochs.push_back(token_budget_batches(examples, config.token_budget, batch_rng));
    total_steps += epochs.back().size();
  }
  if (config.max_steps) total_steps = std::min(total_steps, config.max_steps);

  const auto params = model.named_parameters();
  AdamOptions adam_opts;
  adam_opts.learning_rate = config.learning_rate;
  AdamState optimizer = AdamState::for_parameters(params, adam_opts);

  nlohmann::json extra;
  extra["train"] = config;

  const fs::path log_path = out_dir / "metrics.csv";
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  log << "step,epoch,p,L,L_K,L_Y,wall_time\n";

  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  Rng step_root = root.fork(12);
  std::size_t step = 0;
  for (std::size_t e = 0; e < epochs.size() && step < total_steps; ++e) {
    for (std::size_t b = 0; b < epochs[e].size() && step < total_steps; ++b) {
      const double x = static_cast<double>(step) / static_cast<double>(total_steps);
      double p = 1.0;
      if (config.mode == AnnealMode::Cosine) p = anneal_probability(x, config.schedule);
      if (config.mode == AnnealMode::AllGenerated) p = 0.0;
      Rng step_rng = step_root.fork(step);
      StepStats s = train_step(model, epochs[e][b], optimizer, p, config.clip_norm, step_rng, b);
      ++step;
      LogRow row{step, e + 1, s.p, s.loss, s.keyword_loss, s.response_loss,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
      log << format_row(row);
      log.flush();
      result.log.push_back(row);
      if (on_step) on_step(row);
      if (config.checkpoint_every && step % config.checkpoint_every == 0 && step < total_steps) {
        extra["step"] = step;
        save_checkpoint(out_dir / "checkpoints" / step_dir_name(step), model, vocab, &optimizer,
                        extra);
      }
    }
  }
  if (!log) throw IoError("failed writing " + log_path.string());
  extra["step"] = step;
  result.checkpoint = out_dir / "checkpoint";
  save_checkpoint(result.checkpoint, model, vocab, &optimizer, extra);
  result.steps = step;
  return result;
}

double teacher_forced_accuracy(const KwSeq2Seq& model, std::span<const EncodedExample> examples) {
  NoGradGuard no_grad;
  std::size_t correct = 0, total = 0;
  const std::size_t vocab = model.config().vocab_size;
  for (const EncodedExample& ex : examples) {
    Tensor hx = model.encode_context(ex.context);
    std::vector<int> kw(ex.keyword_target.begin() + 1, ex.keyword_target.end() - 1);
    Tensor hk = model.encode_keywords(kw);
    std::span<const int> target(ex.response_target);
    Tensor logits = model.decode_response(hx, ex.context.padding, hk, target.first(target.size() - 1));
    for (std::size_t t = 0; t + 1 < target.size(); ++t) {
      if (target[t + 1] == kPadId) continue;
      ++total;
      if (static_cast<int>(argmax(logits.values().subspan(t * vocab, vocab))) == target[t + 1])
        ++correct;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace kwseq
