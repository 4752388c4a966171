#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kwseq/corpus.hpp"
#include "kwseq/metrics.hpp"
#include "kwseq/model.hpp"

namespace kwseq {

enum class EvalMode { GeneratedKeywords, GroundTruthKeywords };
const char* to_string(EvalMode mode);

struct EvalRecord {
  std::vector<std::string> context;
  Tokens reference;
  Tokens generated;
  Tokens reference_keywords;
  Tokens generated_keywords;
  std::string keyword_source;  // "generated" or "ground-truth"
};

struct ExampleScores {
  double sentence_bleu = 0.0;
  double rouge_l = 0.0;
  double rouge_1 = 0.0;
  double rouge_2 = 0.0;
  double meteor = 0.0;
  std::optional<double> embedding_average;
  std::optional<double> embedding_greedy;
  std::optional<double> embedding_extrema;
  double kw_f1 = 0.0;
  double kw_recall = 0.0;
};

ExampleScores score_record(const EvalRecord& record, const WordVectorTable& vectors);

struct MetricReport {
  std::string mode;
  std::size_t examples = 0;
  double bleu = 0.0;           // corpus BLEU-4
  double sentence_bleu = 0.0;  // mean smoothed sentence BLEU-4
  double rouge_l = 0.0;        // mean ROUGE-L F1
  double meteor = 0.0;
  double embedding_average = 0.0;
  double embedding_greedy = 0.0;
  double embedding_extrema = 0.0;
  double kw_f1 = 0.0;
  double kw_recall = 0.0;
  double rouge_1 = 0.0;
  double rouge_2 = 0.0;
  std::size_t embedding_scored = 0;   // pairs with a defined Average score
  std::size_t embedding_skipped = 0;
};

// Means of the per-example scores in record order; BLEU is pooled.
MetricReport aggregate(const std::vector<EvalRecord>& records, const WordVectorTable& vectors,
                       const std::string& mode);

struct EvalOutput {
  std::vector<EvalRecord> records;
  MetricReport report;
};

// Every vocabulary entry except the reserved tokens, mapped to its row of the
// model's token embedding.
WordVectorTable vectors_from_model(const KwSeq2Seq& model, const Vocabulary& vocab);

// Generates a response per example (forcing the reference keywords in
// ground-truth mode) and scores it. Throws on an empty dataset.
EvalOutput evaluate(const KwSeq2Seq& model, const Vocabulary& vocab,
                    const std::vector<DialogueExample>& examples, EvalMode mode,
                    const WordVectorTable& vectors);

// Windowed corpus file with TF-IDF keywords, or a processed .jsonl cache.
std::vector<DialogueExample> load_eval_examples(const std::filesystem::path& path,
                                                double keyword_ratio = 0.30,
                                                std::size_t window = 6);

nlohmann::json record_to_json(const EvalRecord& record, const ExampleScores& scores);
nlohmann::json report_to_json(const MetricReport& report);
std::string render_report_table(const MetricReport& report);

// Writes predictions (JSON lines) and the report JSON.
void write_eval_outputs(const EvalOutput& output, const WordVectorTable& vectors,
                        const std::filesystem::path& predictions,
                        const std::filesystem::path& report);

}  // namespace kwseq
