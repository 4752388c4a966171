#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kwseq/batch.hpp"
#include "kwseq/rng.hpp"

namespace kwseq {

using Tokens = std::vector<std::string>;

// Lowercases and splits on whitespace; punctuation becomes its own token
// except apostrophes inside a word ("don't" stays whole).
Tokens tokenize(const std::string& text);
std::string detokenize(const Tokens& tokens);

struct Conversation {
  std::vector<Tokens> utterances;  // speaker of utterance i is i % 2
};

struct Utterance {
  Tokens tokens;
  int speaker = 0;
};

struct DialogueExample {
  std::vector<Utterance> context;
  Tokens response;
  Tokens keywords;  // subset of response tokens, in response order
};

class Vocabulary {
 public:
  // Only the reserved tokens.
  Vocabulary();

  // Reserved tokens first, then tokens by descending frequency (ties broken
  // alphabetically) that occur at least `min_frequency` times, capped so the
  // whole vocabulary holds at most `max_size` entries.
  static Vocabulary build(const std::vector<Conversation>& corpus, std::size_t max_size,
                          std::size_t min_frequency = 1);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(const std::string& token) const;  // kUnkId when absent
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(const Tokens& tokens) const;
  Tokens decode(std::span<const int> ids) const;
  // Maps each token through the vocabulary, replacing misses with [UNK].
  Tokens normalize(const Tokens& tokens) const;

  // One token per line; the line number is the id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> index_;
};

// Splits one corpus line on "__eou__". Empty pieces are dropped.
Conversation parse_conversation(const std::string& line);
// One conversation per non-empty line; lines yielding fewer than two
// utterances are skipped. Throws IoError when unreadable or empty.
std::vector<Conversation> load_conversations(const std::filesystem::path& path);

// Every contiguous `window`-utterance span becomes one example (the last
// utterance is the response). Shorter conversations yield a single example
// whose context is everything but the last utterance.
std::vector<DialogueExample> window_examples(const Conversation& conversation,
                                             std::size_t window = 6);
std::vector<DialogueExample> window_corpus(const std::vector<Conversation>& corpus,
                                           std::size_t window = 6);

struct TfidfTable {
  std::map<std::string, std::size_t> document_frequency;
  std::size_t documents = 0;

  // ln(documents / df); 0 for unseen tokens.
  double idf(const std::string& token) const;
};

struct TfidfScores {
  TfidfTable table;
  // scores[d][i]: tf·idf of the i-th token of document d.
  std::vector<std::vector<double>> scores;
};

// Each response is one document; tf = count / length, idf = ln(D / df).
TfidfScores build_tfidf(const std::vector<Tokens>& responses);

// Positions of the max(1, ceil(ratio·n)) highest-scoring tokens, earlier
// positions winning ties, returned in ascending order.
std::vector<std::size_t> keyword_positions(std::span<const double> scores, double ratio);
Tokens extract_keywords(const Tokens& response, std::span<const double> scores,
                        double ratio = 0.30);

// Fills `keywords` on every example from TF-IDF over all example responses.
void annotate_keywords(std::vector<DialogueExample>& examples, double ratio = 0.30);

struct SequenceLimits {
  std::size_t max_context_len = 128;
  std::size_t max_keyword_len = 16;
  std::size_t max_response_len = 32;
};

// Builds "[CLS] u1 [SEP] u2 [SEP] ..." with per-speaker type ids and
// positions 0..T-1, dropping the oldest utterances when the context does not
// fit. Targets are "[BOS] k1..kS [SEP]" and "[BOS] y1..yM [SEP]".
EncodedExample build_input_representation(const DialogueExample& example, const Vocabulary& vocab,
                                          const SequenceLimits& limits);
// Context-only variant used at inference time.
ContextRow build_context_row(const std::vector<Utterance>& context, const Vocabulary& vocab,
                             std::size_t max_context_len);

// Shuffles (seeded), orders by length, and packs greedily so each batch's
// padded token count stays within `max_tokens`; batch order is shuffled.
// Every example appears in exactly one batch.
std::vector<EncodedBatch> token_budget_batches(std::span<const EncodedExample> examples,
                                               std::size_t max_tokens, Rng& rng);

// Processed-dataset cache: one JSON object per line with
// {"context": [utterance, ...], "response": str, "keywords": [str, ...]}.
void save_examples_jsonl(const std::filesystem::path& path,
                         const std::vector<DialogueExample>& examples);
std::vector<DialogueExample> load_examples_jsonl(const std::filesystem::path& path);

}  // namespace kwseq
