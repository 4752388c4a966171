#include "kwseq/evaluate.hpp"

#include <cstdio>
#include <sstream>

#include "kwseq/checkpoint.hpp"

namespace kwseq {

const char* to_string(EvalMode mode) {
  return mode == EvalMode::GroundTruthKeywords ? "ground-truth-keywords" : "generated-keywords";
}

ExampleScores score_record(const EvalRecord& r, const WordVectorTable& vectors) {
  ExampleScores s;
  s.sentence_bleu = sentence_bleu(r.reference, r.generated);
  s.rouge_l = rouge_l(r.reference, r.generated).f1;
  s.rouge_1 = rouge_n(r.reference, r.generated, 1).f1;
  s.rouge_2 = rouge_n(r.reference, r.generated, 2).f1;
  s.meteor = meteor_simplified(r.reference, r.generated);
  if (vectors.size() > 0) {
    s.embedding_average = embedding_average(r.reference, r.generated, vectors);
    s.embedding_greedy = embedding_greedy(r.reference, r.generated, vectors);
    s.embedding_extrema = embedding_extrema(r.reference, r.generated, vectors);
  }
  s.kw_f1 = kw_f1(r.generated_keywords, r.reference_keywords).f1;
  s.kw_recall = kw_recall(r.generated_keywords, r.generated);
  return s;
}

MetricReport aggregate(const std::vector<EvalRecord>& records, const WordVectorTable& vectors,
                       const std::string& mode) {
  if (records.empty()) throw InvalidArgument("cannot aggregate an empty evaluation");
  MetricReport rep;
  rep.mode = mode;
  rep.examples = records.size();
  std::vector<Tokens> refs, cands;
  std::size_t greedy_n = 0, extrema_n = 0;
  for (const EvalRecord& r : records) {
    refs.push_back(r.reference);
    cands.push_back(r.generated);
    const ExampleScores s = score_record(r, vectors);
    rep.sentence_bleu += s.sentence_bleu;
    rep.rouge_l += s.rouge_l;
    rep.rouge_1 += s.rouge_1;
    rep.rouge_2 += s.rouge_2;
    rep.meteor += s.meteor;
    rep.kw_f1 += s.kw_f1;
    rep.kw_recall += s.kw_recall;
    if (s.embedding_average) {
      rep.embedding_average += *s.embedding_average;
      ++rep.embedding_scored;
    } else {
      ++rep.embedding_skipped;
    }
    if (s.embedding_greedy) {
      rep.embedding_greedy += *s.embedding_greedy;
      ++greedy_n;
    }
    if (s.embedding_extrema) {
      rep.embedding_extrema += *s.embedding_extrema;
      ++extrema_n;
    }
  }
  const double n = static_cast<double>(records.size());
  rep.sentence_bleu /= n;
  rep.rouge_l /= n;
  rep.rouge_1 /= n;
  rep.rouge_2 /= n;
  rep.meteor /= n;
  rep.kw_f1 /= n;
  rep.kw_recall /= n;
  if (rep.embedding_scored) rep.embedding_average /= static_cast<double>(rep.embedding_scored);
  if (greedy_n) rep.embedding_greedy /= static_cast<double>(greedy_n);
  if (extrema_n) rep.embedding_extrema /= static_cast<double>(extrema_n);
  rep.bleu = corpus_bleu(refs, cands);
  return rep;
}

WordVectorTable vectors_from_model(const KwSeq2Seq& model, const Vocabulary& vocab) {
  const std::size_t d = model.config().model_dim;
  WordVectorTable table(d);
  auto values = model.token_embedding().values();
  for (std::size_t id = kReservedTokens; id < vocab.size(); ++id) {
    auto row = values.subspan(id * d, d);
    table.add(vocab.token(static_cast<int>(id)), std::vector<double>(row.begin(), row.end()));
  }
  return table;
}

EvalOutput evaluate(const KwSeq2Seq& model, const Vocabulary& vocab,
                    const std::vector<DialogueExample>& examples, EvalMode mode,
                    const WordVectorTable& vectors) {
  if (examples.empty()) throw InvalidArgument("evaluation dataset is empty");
  if (vocab.size() != model.config().vocab_size) {
    throw InvalidArgument("vocabulary does not match the model");
  }
  EvalOutput out;
  for (const DialogueExample& ex : examples) {
    ContextRow row = build_context_row(ex.context, vocab, model.config().max_context_len);
    std::optional<std::vector<int>> forced;
    if (mode == EvalMode::GroundTruthKeywords) forced = vocab.encode(ex.keywords);
    GenerationResult g = model.generate(row, forced);
    EvalRecord r;
    for (const Utterance& u : ex.context) r.context.push_back(detokenize(u.tokens));
    r.reference = ex.response;
    r.generated = vocab.decode(g.response_ids);
    r.reference_keywords = ex.keywords;
    r.generated_keywords = vocab.decode(g.keyword_ids);
    r.keyword_source = mode == EvalMode::GroundTruthKeywords ? "ground-truth" : "generated";
    out.records.push_back(std::move(r));
  }
  out.report = aggregate(out.records, vectors, to_string(mode));
  return out;
}

std::vector<DialogueExample> load_eval_examples(const std::filesystem::path& path,
                                                double keyword_ratio, std::size_t window) {
  std::vector<DialogueExample> examples;
  if (path.extension() == ".jsonl") {
    examples = load_examples_jsonl(path);
  } else {
    examples = window_corpus(load_conversations(path), window);
    annotate_keywords(examples, keyword_ratio);
  }
  if (examples.empty()) throw InvalidArgument("no examples in " + path.string());
  return examples;
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json record_to_json(const EvalRecord& r, const ExampleScores& s) {
  return {{"context", r.context},
          {"reference", detokenize(r.reference)},
          {"generated", detokenize(r.generated)},
          {"reference_keywords", r.reference_keywords},
          {"generated_keywords", r.generated_keywords},
          {"keyword_source", r.keyword_source},
          {"scores",
           {{"sentence_bleu", s.sentence_bleu},
            {"rouge_l", s.rouge_l},
            {"rouge_1", s.rouge_1},
            {"rouge_2", s.rouge_2},
            {"meteor", s.meteor},
            {"embedding_average", optional_json(s.embedding_average)},
            {"embedding_greedy", optional_json(s.embedding_greedy)},
            {"embedding_extrema", optional_json(s.embedding_extrema)},
            {"kw_f1", s.kw_f1},
            {"kw_recall", s.kw_recall}}}};
}

nlohmann::json report_to_json(const MetricReport& r) {
  return {{"mode", r.mode},
          {"keyword_source", r.mode == "ground-truth-keywords" ? "ground-truth" : "generated"},
          {"examples", r.examples},
          {"bleu", r.bleu},
          {"sentence_bleu", r.sentence_bleu},
          {"rouge_l", r.rouge_l},
          {"meteor", r.meteor},
          {"embedding_average", r.embedding_average},
          {"embedding_greedy", r.embedding_greedy},
          {"embedding_extrema", r.embedding_extrema},
          {"kw_f1", r.kw_f1},
          {"kw_recall", r.kw_recall},
          {"supplementary", {{"rouge_1", r.rouge_1}, {"rouge_2", r.rouge_2}}},
          {"embedding_scored", r.embedding_scored},
          {"embedding_skipped", r.embedding_skipped}};
}

std::string render_report_table(const MetricReport& r) {
  const std::pair<const char*, double> rows[] = {
      {"BLEU (corpus)", r.bleu},        {"BLEU (sentence)", r.sentence_bleu},
      {"ROUGE-L", r.rouge_l},           {"METEOR (simplified)", r.meteor},
      {"Embedding Average", r.embedding_average}, {"Embedding Greedy", r.embedding_greedy},
      {"Embedding Extrema", r.embedding_extrema}, {"KW-F1", r.kw_f1},
      {"KW-Recall", r.kw_recall},       {"ROUGE-1", r.rouge_1},
      {"ROUGE-2", r.rouge_2}};
  std::ostringstream out;
  out << "mode: " << r.mode << "  examples: " << r.examples << "\n";
  char buf[96];
  for (const auto& [name, value] : rows) {
    std::snprintf(buf, sizeof buf, "%-22s %8.4f\n", name, value);
    out << buf;
  }
  return out.str();
}

void write_eval_outputs(const EvalOutput& output, const WordVectorTable& vectors,
                        const std::filesystem::path& predictions,
                        const std::filesystem::path& report) {
  std::string lines;
  for (const EvalRecord& r : output.records)
    lines += record_to_json(r, score_record(r, vectors)).dump() + "\n";
  write_file_atomic(predictions, lines);
  write_file_atomic(report, report_to_json(output.report).dump(2) + "\n");
}

}  // namespace kwseq
