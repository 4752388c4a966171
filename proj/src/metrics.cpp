#include "kwseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "kwseq/tensor.hpp"

namespace kwseq {

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

// (clipped matches, candidate n-gram count)
std::pair<std::size_t, std::size_t> clipped_matches(const Tokens& ref, const Tokens& cand,
                                                    std::size_t n) {
  const NgramCounts r = ngrams(ref, n);
  const NgramCounts c = ngrams(cand, n);
  std::size_t matched = 0, total = 0;
  for (const auto& [gram, count] : c) {
    total += count;
    auto it = r.find(gram);
    if (it != r.end()) matched += std::min(count, it->second);
  }
  return {matched, total};
}

double brevity_penalty(std::size_t ref_len, std::size_t cand_len) {
  if (cand_len == 0) return 0.0;
  if (cand_len >= ref_len) return 1.0;
  return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len));
}

PRF make_prf(double overlap, std::size_t ref_len, std::size_t cand_len) {
  PRF out;
  if (overlap <= 0.0) return out;
  out.precision = overlap / static_cast<double>(cand_len);
  out.recall = overlap / static_cast<double>(ref_len);
  out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

std::set<std::string> unique(const Tokens& tokens) { return {tokens.begin(), tokens.end()}; }

}  // namespace

double sentence_bleu(const Tokens& reference, const Tokens& candidate, std::size_t max_n) {
  if (max_n == 0) throw InvalidArgument("BLEU needs max_n >= 1");
  if (candidate.empty() || reference.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    auto [matched, total] = clipped_matches(reference, candidate, n);
    double p;
    if (n == 1) {
      if (matched == 0) return 0.0;
      p = static_cast<double>(matched) / static_cast<double>(total);
    } else {
      p = (static_cast<double>(matched) + 1.0) / (static_cast<double>(total) + 1.0);
    }
    log_sum += std::log(p);
  }
  return brevity_penalty(reference.size(), candidate.size()) *
         std::exp(log_sum / static_cast<double>(max_n));
}

double corpus_bleu(const std::vector<Tokens>& references, const std::vector<Tokens>& candidates,
                   std::size_t max_n) {
  if (references.size() != candidates.size()) {
    throw InvalidArgument("BLEU: " + std::to_string(references.size()) + " references but " +
                          std::to_string(candidates.size()) + " candidates");
  }
  if (references.empty()) throw InvalidArgument("BLEU of an empty corpus");
  if (max_n == 0) throw InvalidArgument("BLEU needs max_n >= 1");
  std::size_t ref_len = 0, cand_len = 0;
  std::vector<std::size_t> matched(max_n + 1, 0), total(max_n + 1, 0);
  for (std::size_t i = 0; i < references.size(); ++i) {
    ref_len += references[i].size();
    cand_len += candidates[i].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      auto [m, t] = clipped_matches(references[i], candidates[i], n);
      matched[n] += m;
      total[n] += t;
    }
  }
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    if (matched[n] == 0) return 0.0;
    log_sum += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
  }
  return brevity_penalty(ref_len, cand_len) * std::exp(log_sum / static_cast<double>(max_n));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PRF rouge_l(const Tokens& reference, const Tokens& candidate) {
  return make_prf(static_cast<double>(lcs_length(reference, candidate)), reference.size(),
                  candidate.size());
}

PRF rouge_n(const Tokens& reference, const Tokens& candidate, std::size_t n) {
  if (n == 0) throw InvalidArgument("ROUGE-N needs n >= 1");
  auto [matched, cand_total] = clipped_matches(reference, candidate, n);
  const std::size_t ref_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  return make_prf(static_cast<double>(matched), ref_total, cand_total);
}

std::string simple_stem(const std::string& word) {
  static const std::pair<const char*, std::size_t> rules[] = {
      {"ing", 5}, {"edly", 6}, {"ed", 4}, {"ies", 4}, {"es", 4}, {"ly", 4}, {"s", 3}};
  for (const auto& [suffix, min_len] : rules) {
    const std::string s(suffix);
    if (word.size() >= min_len && word.size() > s.size() &&
        word.compare(word.size() - s.size(), s.size(), s) == 0) {
      if (s == "s" && word[word.size() - 2] == 's') continue;
      if (s == "ies") return word.substr(0, word.size() - 3) + "y";
      return word.substr(0, word.size() - s.size());
    }
  }
  return word;
}

namespace {

struct AlignSearch {
  std::vector<int> cand_class;
  std::vector<int> ref_class;
  std::vector<std::size_t> target;            // per class
  std::vector<std::vector<std::size_t>> suffix_cand;  // [i][class] count of cand >= i
  std::vector<std::size_t> matched;           // per class
  std::vector<bool> ref_used;
  std::size_t best_chunks = SIZE_MAX;
  std::size_t budget = 2'000'000;

  void run(std::size_t i, std::ptrdiff_t prev_ref, std::size_t chunks) {
    if (chunks >= best_chunks || budget == 0) return;
    --budget;
    if (i == cand_class.size()) {
      best_chunks = chunks;
      return;
    }
    const int c = cand_class[i];
    if (c >= 0 && matched[c] < target[c]) {
      for (std::size_t j = 0; j < ref_class.size(); ++j) {
        if (ref_used[j] || ref_class[j] != c) continue;
        const bool extends = prev_ref >= 0 && static_cast<std::ptrdiff_t>(j) == prev_ref + 1;
        ref_used[j] = true;
        ++matched[c];
        run(i + 1, static_cast<std::ptrdiff_t>(j), chunks + (extends ? 0 : 1));
        --matched[c];
        ref_used[j] = false;
      }
    }
    // Leave candidate i unaligned if its class can still reach its target.
    if (c < 0 || matched[c] + suffix_cand[i + 1][c] >= target[c]) run(i + 1, -1, chunks);
  }
};

}  // namespace

MeteorAlignment meteor_align(const Tokens& reference, const Tokens& candidate) {
  std::map<std::string, int> class_of;
  std::vector<std::size_t> ref_count;
  AlignSearch s;
  for (const std::string& w : reference) {
    auto [it, inserted] = class_of.emplace(simple_stem(w), static_cast<int>(class_of.size()));
    if (inserted) ref_count.push_back(0);
    ++ref_count[it->second];
    s.ref_class.push_back(it->second);
  }
  std::vector<std::size_t> cand_count(ref_count.size(), 0);
  for (const std::string& w : candidate) {
    auto it = class_of.find(simple_stem(w));
    const int c = it == class_of.end() ? -1 : it->second;
    if (c >= 0) ++cand_count[c];
    s.cand_class.push_back(c);
  }
  MeteorAlignment out;
  s.target.resize(ref_count.size());
  for (std::size_t c = 0; c < ref_count.size(); ++c) {
    s.target[c] = std::min(ref_count[c], cand_count[c]);
    out.matches += s.target[c];
  }
  if (out.matches == 0) return out;
  s.suffix_cand.assign(candidate.size() + 1, std::vector<std::size_t>(ref_count.size(), 0));
  for (std::size_t i = candidate.size(); i-- > 0;) {
    s.suffix_cand[i] = s.suffix_cand[i + 1];
    if (s.cand_class[i] >= 0) ++s.suffix_cand[i][s.cand_class[i]];
  }
  s.matched.assign(ref_count.size(), 0);
  s.ref_used.assign(reference.size(), false);
  s.run(0, -1, 0);
  out.chunks = s.best_chunks;
  return out;
}

double meteor_simplified(const Tokens& reference, const Tokens& candidate) {
  const MeteorAlignment a = meteor_align(reference, candidate);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double p = m / static_cast<double>(candidate.size());
  const double r = m / static_cast<double>(reference.size());
  const double f_mean = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3.0);
  return f_mean * (1.0 - penalty);
}

WordVectorTable WordVectorTable::load_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read word vectors from " + path.string());
  WordVectorTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> v;
    double x;
    while (fields >> x) v.push_back(x);
    if (!fields.eof()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": non-numeric vector entry");
    }
    table.add(token, std::move(v));
  }
  if (table.size() == 0) throw IoError("no word vectors in " + path.string());
  return table;
}

void WordVectorTable::add(const std::string& token, std::vector<double> vector) {
  if (vector.empty()) throw InvalidArgument("word vector for '" + token + "' is empty");
  if (dim_ == 0) dim_ = vector.size();
  if (vector.size() != dim_) {
    throw InvalidArgument("word vector for '" + token + "' has dimension " +
                          std::to_string(vector.size()) + ", expected " + std::to_string(dim_));
  }
  vectors_[token] = std::move(vector);
}

const std::vector<double>* WordVectorTable::find(const std::string& token) const {
  auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

std::vector<const std::vector<double>*> known(const Tokens& tokens, const WordVectorTable& table) {
  std::vector<const std::vector<double>*> out;
  for (const std::string& t : tokens)
    if (const auto* v = table.find(t)) out.push_back(v);
  return out;
}

bool is_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

std::vector<double> mean_vector(const std::vector<const std::vector<double>*>& vs, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  for (const auto* v : vs)
    for (std::size_t i = 0; i < dim; ++i) out[i] += (*v)[i];
  for (double& x : out) x /= static_cast<double>(vs.size());
  return out;
}

std::vector<double> extrema_vector(const std::vector<const std::vector<double>*>& vs,
                                   std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  for (const auto* v : vs) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double x = (*v)[i];
      if (std::abs(x) > std::abs(out[i]) || (std::abs(x) == std::abs(out[i]) && x > out[i]))
        out[i] = x;
    }
  }
  return out;
}

double directed_greedy(const std::vector<const std::vector<double>*>& from,
                       const std::vector<const std::vector<double>*>& to) {
  double total = 0.0;
  for (const auto* a : from) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto* b : to) best = std::max(best, cosine(*a, *b));
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

std::optional<double> embedding_average(const Tokens& reference, const Tokens& candidate,
                                        const WordVectorTable& vectors) {
  auto r = known(reference, vectors), c = known(candidate, vectors);
  if (r.empty() || c.empty()) return std::nullopt;
  auto rv = mean_vector(r, vectors.dim()), cv = mean_vector(c, vectors.dim());
  if (is_zero(rv) || is_zero(cv)) return std::nullopt;
  return cosine(rv, cv);
}

std::optional<double> embedding_greedy(const Tokens& reference, const Tokens& candidate,
                                       const WordVectorTable& vectors) {
  auto r = known(reference, vectors), c = known(candidate, vectors);
  if (r.empty() || c.empty()) return std::nullopt;
  return 0.5 * (directed_greedy(r, c) + directed_greedy(c, r));
}

std::optional<double> embedding_extrema(const Tokens& reference, const Tokens& candidate,
                                        const WordVectorTable& vectors) {
  auto r = known(reference, vectors), c = known(candidate, vectors);
  if (r.empty() || c.empty()) return std::nullopt;
  auto rv = extrema_vector(r, vectors.dim()), cv = extrema_vector(c, vectors.dim());
  if (is_zero(rv) || is_zero(cv)) return std::nullopt;
  return cosine(rv, cv);
}

PRF kw_f1(const Tokens& generated_keywords, const Tokens& reference_keywords) {
  const auto g = unique(generated_keywords), r = unique(reference_keywords);
  if (g.empty() || r.empty()) return {};
  std::size_t common = 0;
  for (const auto& w : g) common += r.count(w);
  PRF out;
  if (common == 0) return out;
  out.precision = static_cast<double>(common) / static_cast<double>(g.size());
  out.recall = static_cast<double>(common) / static_cast<double>(r.size());
  out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
  return out;
}

double kw_recall(const Tokens& keywords, const Tokens& response) {
  const auto k = unique(keywords), r = unique(response);
  if (k.empty()) return 1.0;
  std::size_t hit = 0;
  for (const auto& w : k) hit += r.count(w);
  return static_cast<double>(hit) / static_cast<double>(k.size());
}

}  // namespace kwseq
