#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kwseq/corpus.hpp"
#include "kwseq/model.hpp"
#include "kwseq/optim.hpp"

namespace kwseq {

struct AnnealSchedule {
  double x1 = 0.25;
  double x2 = 0.75;
  // Use ½(1 + cos πx) on [x1, x2] without rescaling the argument.
  bool literal = false;

  void validate() const;
};

// Probability of feeding ground-truth keywords at training progress x.
double anneal_probability(double x, const AnnealSchedule& schedule);

enum class AnnealMode { Cosine, AllGroundTruth, AllGenerated };
const char* to_string(AnnealMode mode);
AnnealMode anneal_mode_from_string(const std::string& name);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t max_steps = 0;  // 0: no cap beyond the epoch count
  std::size_t token_budget = 4096;
  double learning_rate = 1e-4;
  double clip_norm = 1.0;
  AnnealMode mode = AnnealMode::Cosine;
  AnnealSchedule schedule;
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // steps; 0 keeps only the final checkpoint
  double keyword_ratio = 0.30;
  std::size_t window = 6;
  std::size_t max_vocab = 30522;
  std::size_t min_frequency = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Settings of the small memorisation run used by the acceptance harness.
ModelConfig overfit_model_config();
TrainConfig overfit_train_config();

struct StepStats {
  double loss = 0.0;
  double keyword_loss = 0.0;
  double response_loss = 0.0;
  double p = 1.0;
  KeywordSource source = KeywordSource::GroundTruth;
  double grad_norm = 0.0;
};

// Forward + backward for one batch, leaving gradients on the parameters.
// L_K and L_Y are token means over the whole batch. `p` is the probability
// of ground-truth keywords; one draw from `rng` decides for the batch.
StepStats compute_batch_gradients(const KwSeq2Seq& model, const EncodedBatch& batch, double p,
                                  Rng& rng, std::size_t batch_id = 0);

// compute_batch_gradients, then global-norm clipping and one Adam update.
StepStats train_step(const KwSeq2Seq& model, const EncodedBatch& batch, AdamState& optimizer,
                     double p, double clip_norm, Rng& rng, std::size_t batch_id = 0);

struct LogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double p = 0.0;
  double loss = 0.0;
  double keyword_loss = 0.0;
  double response_loss = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::filesystem::path checkpoint;
  std::size_t steps = 0;
};

struct PreparedCorpus {
  Vocabulary vocab;
  std::vector<DialogueExample> examples;
  std::vector<EncodedExample> encoded;
};

// Loads, windows, annotates keywords, builds the vocabulary and encodes.
PreparedCorpus prepare_corpus(const std::filesystem::path& corpus, const TrainConfig& train,
                              const ModelConfig& model);
// Encodes examples with an existing vocabulary (evaluation data).
std::vector<EncodedExample> encode_examples(const std::vector<DialogueExample>& examples,
                                            const Vocabulary& vocab, const SequenceLimits& limits);

using StepCallback = std::function<void(const LogRow&)>;

// Full run. Writes <out>/metrics.csv, <out>/checkpoint and, at the configured
// cadence, <out>/checkpoints/step-NNNNNN.
TrainResult train(KwSeq2Seq& model, const Vocabulary& vocab,
                  std::span<const EncodedExample> examples, const TrainConfig& config,
                  const std::filesystem::path& out_dir, const StepCallback& on_step = {});

// Fraction of non-pad response targets predicted by argmax under teacher
// forcing with ground-truth keywords.
double teacher_forced_accuracy(const KwSeq2Seq& model, std::span<const EncodedExample> examples);

}  // namespace kwseq
