#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kwseq/corpus.hpp"

namespace kwseq {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Sentence BLEU with add-one smoothing on the n >= 2 precisions.
double sentence_bleu(const Tokens& reference, const Tokens& candidate, std::size_t max_n = 4);
// Corpus BLEU: clipped n-gram counts and lengths pooled over all pairs, no
// smoothing. Throws InvalidArgument when the lists differ in length.
double corpus_bleu(const std::vector<Tokens>& references, const std::vector<Tokens>& candidates,
                   std::size_t max_n = 4);

std::size_t lcs_length(const Tokens& a, const Tokens& b);
PRF rouge_l(const Tokens& reference, const Tokens& candidate);
PRF rouge_n(const Tokens& reference, const Tokens& candidate, std::size_t n);

// Crude suffix stripper used for METEOR stem matches.
std::string simple_stem(const std::string& word);

struct MeteorAlignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};
// Maximum unigram alignment (exact or same stem) with the fewest chunks.
MeteorAlignment meteor_align(const Tokens& reference, const Tokens& candidate);
double meteor_simplified(const Tokens& reference, const Tokens& candidate);

/// Token -> vector lookup for the embedding metrics.
class WordVectorTable {
 public:
  WordVectorTable() = default;
  explicit WordVectorTable(std::size_t dim) : dim_(dim) {}

  // Whitespace-separated "token v1 .. vd" per line.
  static WordVectorTable load_text(const std::filesystem::path& path);

  void add(const std::string& token, std::vector<double> vector);
  const std::vector<double>* find(const std::string& token) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> vectors_;
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// Out-of-vocabulary tokens are skipped; std::nullopt when either side has no
// known token (or a zero sentence vector).
std::optional<double> embedding_average(const Tokens& reference, const Tokens& candidate,
                                        const WordVectorTable& vectors);
std::optional<double> embedding_greedy(const Tokens& reference, const Tokens& candidate,
                                       const WordVectorTable& vectors);
std::optional<double> embedding_extrema(const Tokens& reference, const Tokens& candidate,
                                        const WordVectorTable& vectors);

// Set precision/recall/F1; all zero when either set is empty.
PRF kw_f1(const Tokens& generated_keywords, const Tokens& reference_keywords);
// Share of unique keywords present in the response; 1 for no keywords.
double kw_recall(const Tokens& keywords, const Tokens& response);

}  // namespace kwseq
