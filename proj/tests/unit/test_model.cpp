#include <cmath>
#include <set>

#include "doctest.h"
#include "fd.hpp"
#include "kwseq/model.hpp"

using namespace kwseq;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 20;
  c.model_dim = 16;
  c.layers = 1;
  c.heads = 2;
  c.dropout = 0.0;
  c.max_context_len = 12;
  c.max_keyword_len = 4;
  c.max_response_len = 6;
  return c;
}

ContextRow row_of(std::vector<int> ids, std::vector<int> types) {
  ContextRow r;
  r.token_ids = std::move(ids);
  r.type_ids = std::move(types);
  for (std::size_t i = 0; i < r.token_ids.size(); ++i) {
    r.position_ids.push_back(static_cast<int>(i));
    r.padding.push_back(false);
  }
  return r;
}

ContextRow sample_row() {
  return row_of({kClsId, 7, 8, kSepId, 9, 10, kSepId}, {0, 0, 0, 0, 1, 1, 1});
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a.values()[i] - b.values()[i]));
  return w;
}

double ce_sum_oracle(const Tensor& logits, const std::vector<int>& targets) {
  long double total = 0;
  const std::size_t v = logits.dim(1);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (targets[r] == kPadId) continue;
    long double m = -1e300, z = 0;
    for (std::size_t j = 0; j < v; ++j) m = std::max<long double>(m, logits.values()[r * v + j]);
    for (std::size_t j = 0; j < v; ++j) z += std::exp(logits.values()[r * v + j] - m);
    total += -(logits.values()[r * v + targets[r]] - m - std::log(z));
  }
  return static_cast<double>(total);
}

}  // namespace

TEST_CASE("config validation and json round trip") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.position_capacity() == 16);
  nlohmann::json j = c;
  ModelConfig back;
  from_json(j, back);
  CHECK(nlohmann::json(back) == j);

  ModelConfig bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.alpha = bad.beta = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  j["unexpected"] = 1;
  CHECK_THROWS(from_json(j, back));
}

TEST_CASE("parameters are named uniquely and seeded deterministically") {
  KwSeq2Seq a(tiny_config(), 5), b(tiny_config(), 5), c(tiny_config(), 6);
  auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
  std::set<std::string> names;
  for (auto& p : pa) names.insert(p.name);
  CHECK(names.size() == pa.size());
  CHECK(pa.front().name == "embedding.token");
  CHECK(pa.front().tensor.shape() == Shape{20, 16});
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(max_abs_diff(pa[i].tensor, pb[i].tensor) == 0.0);
    any_diff |= max_abs_diff(pa[i].tensor, pc[i].tensor) > 0;
  }
  CHECK(any_diff);
}

TEST_CASE("context embedding validation") {
  KwSeq2Seq m(tiny_config(), 1);
  CHECK(m.embed_context(sample_row()).shape() == Shape{7, 16});
  CHECK_THROWS_AS(m.embed_context(row_of({}, {})), InvalidArgument);
  CHECK_THROWS_AS(m.embed_context(row_of({kClsId, 7}, {0, 2})), InvalidArgument);
  ContextRow long_row = row_of(std::vector<int>(13, 7), std::vector<int>(13, 0));
  CHECK_THROWS_AS(m.embed_context(long_row), InvalidArgument);
}

TEST_CASE("one-hot soft keywords encode like their ids") {
  KwSeq2Seq m(tiny_config(), 2);
  std::vector<int> ids{7, 12, 9};
  std::vector<double> probs(3 * 20, 0.0);
  for (std::size_t i = 0; i < 3; ++i) probs[i * 20 + ids[i]] = 1.0;
  SoftTokens soft{Tensor({3, 20}, probs)};
  CHECK(soft.argmax_ids() == ids);
  CHECK(max_abs_diff(m.encode_keywords(soft), m.encode_keywords(ids)) <= 1e-12);
}

TEST_CASE("a soft keyword is the probability-weighted embedding mixture") {
  // A second model whose spare row 19 holds 0.3·E[7] + 0.7·E[11] must encode
  // id 19 exactly like the soft mixture over the first model.
  KwSeq2Seq m(tiny_config(), 3), oracle(tiny_config(), 3);
  Tensor e = oracle.token_embedding();
  auto ev = e.mutable_values();
  for (std::size_t j = 0; j < 16; ++j) ev[19 * 16 + j] = 0.3 * ev[7 * 16 + j] + 0.7 * ev[11 * 16 + j];
  std::vector<double> probs(2 * 20, 0.0);
  probs[7] = 0.3;
  probs[11] = 0.7;
  probs[20 + 4] = 1.0;
  SoftTokens soft{Tensor({2, 20}, probs)};
  std::vector<int> ids{19, 4};
  CHECK(max_abs_diff(m.encode_keywords(soft), oracle.encode_keywords(ids)) <= 1e-12);
}

TEST_CASE("a uniform soft keyword embeds as the mean embedding row") {
  KwSeq2Seq m(tiny_config(), 5), oracle(tiny_config(), 5);
  Tensor e = oracle.token_embedding();
  auto ev = e.mutable_values();
  for (std::size_t j = 0; j < 16; ++j) {
    double mean = 0;
    for (std::size_t r = 0; r < 20; ++r) mean += ev[r * 16 + j] / 20;
    ev[19 * 16 + j] = mean;
  }
  SoftTokens soft{Tensor({1, 20}, std::vector<double>(20, 1.0 / 20))};
  std::vector<int> ids{19};
  CHECK(max_abs_diff(m.encode_keywords(soft), oracle.encode_keywords(ids)) <= 1e-12);
}

TEST_CASE("empty keyword memory") {
  KwSeq2Seq m(tiny_config(), 4);
  Tensor hk = m.encode_keywords(std::vector<int>{});
  CHECK(hk.shape() == Shape{0, 16});
  CHECK(m.encode_keywords(SoftTokens{}).shape() == Shape{0, 16});
  ContextRow row = sample_row();
  Tensor hx = m.encode_context(row);
  std::vector<int> input{kBosId, 7};
  Tensor logits = m.decode_response(hx, row.padding, hk, input);
  CHECK(logits.shape() == Shape{2, 20});
  CHECK(m.decode_keywords_greedy(hx, row.padding, 0).empty());
  auto g = m.generate(row, std::vector<int>{});
  CHECK(g.keyword_ids.empty());
  CHECK(g.keyword_source == KeywordSource::UserForced);
}

TEST_CASE("joint loss is alpha times L_K plus beta times L_Y") {
  Rng rng(3);
  Tensor k = fd::random_tensor({3, 6}, rng);
  Tensor y = fd::random_tensor({4, 6}, rng);
  std::vector<int> kt{1, 5, 0}, yt{2, 2, 3, 4};
  const double lk = ce_sum_oracle(k, kt) / 2, ly = ce_sum_oracle(y, yt) / 4;
  CHECK(joint_loss(k, kt, y, yt, 0.5, 0.5).item() == doctest::Approx(0.5 * lk + 0.5 * ly).epsilon(1e-12));
  CHECK(joint_loss(k, kt, y, yt, 0.2, 0.8).item() == doctest::Approx(0.2 * lk + 0.8 * ly).epsilon(1e-12));
  joint_loss(k, kt, y, yt, 0.0, 1.0).backward();
  for (double g : k.grad()) CHECK(g == 0.0);
}

TEST_CASE("gumbel softmax sampling statistics") {
  Tensor logits({4}, {1.0, 0.0, -1.0, 2.0});
  std::vector<double> pi(4);
  double z = 0;
  for (int i = 0; i < 4; ++i) z += std::exp(logits.values()[i]);
  for (int i = 0; i < 4; ++i) pi[i] = std::exp(logits.values()[i]) / z;

  Rng rng(17);
  const int n = 20000;
  std::vector<int> counts(4, 0);
  for (int s = 0; s < n; ++s) {
    Tensor m = gumbel_softmax(logits, 1.0, rng);
    double total = 0;
    for (double v : m.values()) total += v;
    CHECK(std::abs(total - 1.0) <= 1e-12);
    ++counts[argmax(m.values())];
  }
  for (int i = 0; i < 4; ++i) {
    const double se = std::sqrt(pi[i] * (1 - pi[i]) / n);
    CHECK(std::abs(double(counts[i]) / n - pi[i]) <= 4 * se);
  }

  Rng low(5);
  double peak = 0;
  for (int s = 0; s < 1000; ++s) {
    Tensor m = gumbel_softmax(logits, 0.01, low);
    peak += *std::max_element(m.values().begin(), m.values().end());
  }
  CHECK(peak / 1000 >= 0.98);

  Tensor l2({1, 4}, {1.0, 0.0, -1.0, 2.0}, true);
  Rng h(3);
  Tensor hard = gumbel_softmax(l2, 0.5, h, true);
  int ones = 0;
  for (double v : hard.values()) {
    CHECK((v == 0.0 || v == 1.0));
    ones += v == 1.0;
  }
  CHECK(ones == 1);
  fd::project(hard).backward();
  double norm = 0;
  for (double g : l2.grad()) norm += g * g;
  CHECK(norm > 0);
  CHECK_THROWS_AS(gumbel_softmax(logits, 0.0, rng), InvalidArgument);
}

TEST_CASE("soft keyword sampling stops within the limit") {
  KwSeq2Seq m(tiny_config(), 8);
  ContextRow row = sample_row();
  Tensor hx = m.encode_context(row);
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    SoftTokens s = m.sample_keywords_soft(hx, row.padding, rng);
    CHECK(s.size() <= 4);
    for (std::size_t i = 0; i < s.size(); ++i) {
      double total = 0;
      for (std::size_t j = 0; j < 20; ++j) total += s.probabilities.values()[i * 20 + j];
      CHECK(std::abs(total - 1.0) <= 1e-12);
      CHECK(s.argmax_ids()[i] != kSepId);
    }
  }
}

TEST_CASE("forward_example composes the public stages") {
  KwSeq2Seq m(tiny_config(), 9);
  ContextRow row = sample_row();
  std::vector<int> kt{kBosId, 8, 10, kSepId}, yt{kBosId, 8, 11, 10, kSepId};
  Rng rng(1);
  nn::ForwardOptions opts;
  ExampleLoss loss = m.forward_example(row, kt, yt, KeywordSource::GroundTruth, rng, opts);
  CHECK(loss.keyword_tokens == 3);
  CHECK(loss.response_tokens == 4);

  Tensor hx = m.encode_context(row);
  Tensor kl = m.decode_keywords_teacher_forced(hx, row.padding, std::vector<int>{kBosId, 8, 10});
  CHECK(loss.keyword_loss_sum.item() == doctest::Approx(ce_sum_oracle(kl, {8, 10, kSepId})).epsilon(1e-12));
  Tensor hk = m.encode_keywords(std::vector<int>{8, 10});
  Tensor yl = m.decode_response(hx, row.padding, hk, std::vector<int>{kBosId, 8, 11, 10});
  CHECK(loss.response_loss_sum.item() ==
        doctest::Approx(ce_sum_oracle(yl, {8, 11, 10, kSepId})).epsilon(1e-12));

  // Padded targets give the same ground-truth keywords.
  std::vector<int> padded{kBosId, 8, 10, kSepId, kPadId, kPadId};
  ExampleLoss lp = m.forward_example(row, padded, yt, KeywordSource::GroundTruth, rng, opts);
  CHECK(lp.response_loss_sum.item() == loss.response_loss_sum.item());

  // Generated keywords leave L_K teacher-forced.
  ExampleLoss lg = m.forward_example(row, kt, yt, KeywordSource::Generated, rng, opts);
  CHECK(lg.keyword_loss_sum.item() == loss.keyword_loss_sum.item());
}

TEST_CASE("generation is deterministic and honours forced keywords") {
  KwSeq2Seq m(tiny_config(), 10);
  ContextRow row = sample_row();
  auto a = m.generate(row), b = m.generate(row);
  CHECK(a.keyword_ids == b.keyword_ids);
  CHECK(a.response_ids == b.response_ids);
  CHECK(a.keyword_source == KeywordSource::Generated);
  CHECK(a.keyword_logits.size() >= a.keyword_ids.size());
  CHECK(a.keyword_ids.size() <= 4);
  CHECK(a.response_ids.size() <= 6);
  for (std::size_t t = 0; t < a.keyword_ids.size(); ++t)
    CHECK(static_cast<int>(argmax(a.keyword_logits[t])) == a.keyword_ids[t]);

  auto f = m.generate(row, std::vector<int>{12, 13, 14, 15, 16, 17});
  CHECK(f.keyword_ids == std::vector<int>{12, 13, 14, 15});
  CHECK(f.keyword_logits.empty());
  CHECK(m.generate(row, std::nullopt, 2).response_ids.size() <= 2);
  CHECK(std::string(to_string(KeywordSource::UserForced)) == "user-forced");
}
