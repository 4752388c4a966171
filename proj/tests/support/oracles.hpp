#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. Deliberately naive: enumeration and direct formulas only.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kwseq/metrics.hpp"
#include "kwseq/rng.hpp"

namespace oracle {

using kwseq::PRF;
using kwseq::Rng;
using kwseq::Tokens;
using kwseq::simple_stem;

inline Tokens words(const std::string& s) {
  Tokens out;
  std::string w;
  for (char c : s) {
    if (c == ' ') {
      if (!w.empty()) out.push_back(w);
      w.clear();
    } else {
      w.push_back(c);
    }
  }
  if (!w.empty()) out.push_back(w);
  return out;
}

using Gram = std::vector<std::string>;

inline std::map<Gram, int> grams(const Tokens& t, std::size_t n) {
  std::map<Gram, int> out;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++out[Gram(t.begin() + i, t.begin() + i + n)];
  return out;
}

inline std::pair<int, int> clipped(const Tokens& ref, const Tokens& cand, std::size_t n) {
  auto r = grams(ref, n), c = grams(cand, n);
  int m = 0, total = 0;
  for (auto& [g, k] : c) {
    total += k;
    m += std::min(k, r.count(g) ? r[g] : 0);
  }
  return {m, total};
}

inline double bp(double r, double c) { return c == 0 ? 0 : (c >= r ? 1 : std::exp(1 - r / c)); }

inline double oracle_sentence_bleu(const Tokens& ref, const Tokens& cand) {
  if (ref.empty() || cand.empty()) return 0;
  double s = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    auto [m, t] = clipped(ref, cand, n);
    if (n == 1 && m == 0) return 0;
    s += std::log(n == 1 ? double(m) / t : (m + 1.0) / (t + 1.0));
  }
  return bp(ref.size(), cand.size()) * std::exp(s / 4);
}

inline double oracle_corpus_bleu(const std::vector<Tokens>& refs, const std::vector<Tokens>& cands) {
  double r = 0, c = 0, s = 0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double m = 0, t = 0;
    for (std::size_t i = 0; i < refs.size(); ++i) {
      auto [mi, ti] = clipped(refs[i], cands[i], n);
      m += mi;
      t += ti;
    }
    if (m == 0) return 0;
    s += std::log(m / t);
  }
  for (std::size_t i = 0; i < refs.size(); ++i) {
    r += refs[i].size();
    c += cands[i].size();
  }
  return bp(r, c) * std::exp(s / 4);
}

// Longest common subsequence by subset enumeration over the shorter side.
inline std::size_t oracle_lcs(const Tokens& a, const Tokens& b) {
  const Tokens& s = a.size() <= b.size() ? a : b;
  const Tokens& l = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  for (unsigned mask = 0; mask < (1u << s.size()); ++mask) {
    std::size_t j = 0, k = 0;
    bool ok = true;
    for (std::size_t i = 0; i < s.size() && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      while (j < l.size() && l[j] != s[i]) ++j;
      if (j == l.size()) ok = false;
      else { ++j; ++k; }
    }
    if (ok) best = std::max(best, k);
  }
  return best;
}

inline PRF prf(double m, double ref, double cand) {
  PRF o;
  if (m == 0) return o;
  o.precision = m / cand;
  o.recall = m / ref;
  o.f1 = 2 * o.precision * o.recall / (o.precision + o.recall);
  return o;
}

// Every partial one-to-one alignment between same-stem tokens; keeps the
// most matches, then the fewest chunks.
struct ExhaustiveMeteor {
  const Tokens& ref;
  const Tokens& cand;
  std::vector<int> link;
  std::vector<bool> used;
  std::size_t best_m = 0, best_chunks = 0;

  void go(std::size_t i) {
    if (i == cand.size()) {
      std::size_t m = 0, chunks = 0;
      for (std::size_t k = 0; k < cand.size(); ++k) {
        if (link[k] < 0) continue;
        ++m;
        if (k == 0 || link[k - 1] < 0 || link[k - 1] + 1 != link[k]) ++chunks;
      }
      if (m > best_m || (m == best_m && chunks < best_chunks)) {
        best_m = m;
        best_chunks = chunks;
      }
      return;
    }
    link[i] = -1;
    go(i + 1);
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (used[j] || simple_stem(ref[j]) != simple_stem(cand[i])) continue;
      used[j] = true;
      link[i] = int(j);
      go(i + 1);
      used[j] = false;
      link[i] = -1;
    }
  }

  static std::pair<std::size_t, std::size_t> solve(const Tokens& r, const Tokens& c) {
    ExhaustiveMeteor e{r, c, std::vector<int>(c.size(), -1), std::vector<bool>(r.size()), 0, 0};
    e.go(0);
    return {e.best_m, e.best_chunks};
  }
};

inline double oracle_meteor(const Tokens& r, const Tokens& c) {
  auto [m, ch] = ExhaustiveMeteor::solve(r, c);
  if (m == 0) return 0;
  double p = double(m) / c.size(), rc = double(m) / r.size();
  return 10 * p * rc / (rc + 9 * p) * (1 - 0.5 * std::pow(double(ch) / m, 3));
}

inline Tokens random_sentence(Rng& rng, std::size_t max_len, const std::vector<std::string>& vocab) {
  Tokens t;
  const std::size_t n = rng.below(max_len + 1);
  for (std::size_t i = 0; i < n; ++i) t.push_back(vocab[rng.below(vocab.size())]);
  return t;
}

inline const std::vector<std::string> kWords{"the", "cat", "sat", "on", "mat", "walk", "walks",
                                      "walking", "walked", "a", "dog"};

inline double cos_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  long double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return (na == 0 || nb == 0) ? 0.0 : double(d / std::sqrt(na * nb));
}


using Vectors = std::map<std::string, std::vector<double>>;

inline std::vector<std::vector<double>> lookup(const Tokens& t, const Vectors& v) {
  std::vector<std::vector<double>> out;
  for (const auto& w : t)
    if (auto it = v.find(w); it != v.end()) out.push_back(it->second);
  return out;
}

inline bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

inline std::optional<double> average(const Tokens& r, const Tokens& c, const Vectors& v) {
  auto a = lookup(r, v), b = lookup(c, v);
  if (a.empty() || b.empty()) return std::nullopt;
  auto mean = [](const std::vector<std::vector<double>>& xs) {
    std::vector<double> m(xs[0].size(), 0.0);
    for (auto& x : xs)
      for (std::size_t i = 0; i < m.size(); ++i) m[i] += x[i] / xs.size();
    return m;
  };
  auto ma = mean(a), mb = mean(b);
  if (all_zero(ma) || all_zero(mb)) return std::nullopt;
  return cos_oracle(ma, mb);
}

inline std::optional<double> greedy(const Tokens& r, const Tokens& c, const Vectors& v) {
  auto a = lookup(r, v), b = lookup(c, v);
  if (a.empty() || b.empty()) return std::nullopt;
  auto directed = [](const auto& from, const auto& to) {
    double s = 0;
    for (auto& x : from) {
      double best = -2;
      for (auto& y : to) best = std::max(best, cos_oracle(x, y));
      s += best;
    }
    return s / from.size();
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

inline std::optional<double> extrema(const Tokens& r, const Tokens& c, const Vectors& v) {
  auto a = lookup(r, v), b = lookup(c, v);
  if (a.empty() || b.empty()) return std::nullopt;
  auto ext = [](const std::vector<std::vector<double>>& xs) {
    std::vector<double> e(xs[0].size(), 0.0);
    for (std::size_t i = 0; i < e.size(); ++i) {
      double hi = -1e300, lo = 1e300;
      for (auto& x : xs) {
        hi = std::max(hi, x[i]);
        lo = std::min(lo, x[i]);
      }
      e[i] = std::abs(lo) > std::abs(hi) ? lo : hi;
    }
    return e;
  };
  auto ea = ext(a), eb = ext(b);
  if (all_zero(ea) || all_zero(eb)) return std::nullopt;
  return cos_oracle(ea, eb);
}

inline PRF keyword_f1(const Tokens& g, const Tokens& r) {
  std::set<std::string> sg(g.begin(), g.end()), sr(r.begin(), r.end());
  double common = 0;
  for (auto& w : sg) common += sr.count(w);
  if (sg.empty() || sr.empty()) return {};
  return prf(common, sr.size(), sg.size());
}

inline double keyword_recall(const Tokens& k, const Tokens& response) {
  std::set<std::string> sk(k.begin(), k.end()), sr(response.begin(), response.end());
  if (sk.empty()) return 1.0;
  double hit = 0;
  for (auto& w : sk) hit += sr.count(w);
  return hit / sk.size();
}

// tf·idf of every token of every document, counted from scratch.
inline std::vector<std::vector<double>> tfidf(const std::vector<Tokens>& docs) {
  std::vector<std::vector<double>> out;
  for (const auto& d : docs) {
    std::vector<double> row;
    for (const auto& w : d) {
      double tf = double(std::count(d.begin(), d.end(), w)) / d.size();
      double df = 0;
      for (const auto& other : docs) df += std::find(other.begin(), other.end(), w) != other.end();
      row.push_back(tf * std::log(docs.size() / df));
    }
    out.push_back(row);
  }
  return out;
}

}  // namespace oracle
