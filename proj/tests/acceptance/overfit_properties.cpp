// Properties of the CLI-trained overfit run shared with the acceptance checks.
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "kwseq/bundle.hpp"
#include "kwseq/evaluate.hpp"
#include "kwseq/trainer.hpp"

using namespace kwseq;
namespace fs = std::filesystem;
using json = nlohmann::json;
using doctest::Approx;

namespace {

const fs::path kRun = KWSEQ_OVERFIT_RUN;
const fs::path kData = KWSEQ_TEST_DATA;

const LoadedModel& trained() {
  static const LoadedModel m = load_checkpoint(kRun / "checkpoint");
  return m;
}

std::vector<std::vector<double>> metrics_rows() {
  std::ifstream in(kRun / "metrics.csv");
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> r;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) r.push_back(std::stod(cell));
    rows.push_back(r);
  }
  return rows;
}

std::string run_cli(const std::string& args) {
  const std::string cmd = std::string(KWSEQ_CLI) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  REQUIRE(pclose(p) == 0);
  return out;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_CASE("loss log is consistent and the loss collapses") {
  const auto rows = metrics_rows();
  REQUIRE(rows.size() >= 2);
  const auto& cfg = trained().model->config();
  for (const auto& r : rows) CHECK(r[3] == Approx(cfg.alpha * r[4] + cfg.beta * r[5]).epsilon(1e-12));
  CHECK(rows.back()[3] < 0.1 * rows.front()[3]);
  CHECK(rows.front()[2] == 1.0);
  CHECK(rows.back()[2] == 0.0);
}

TEST_CASE("soft sampling at low temperature reproduces the memorised keywords") {
  const LoadedModel& m = trained();
  const auto examples = load_eval_examples(kData / "train.txt");
  const auto encoded = encode_examples(examples, m.vocab, m.model->config().limits());
  ModelConfig cold = m.model->config();
  cold.gumbel_tau = 0.01;
  KwSeq2Seq model(cold, 0);
  auto src = m.model->named_parameters(), dst = model.named_parameters();
  REQUIRE(src.size() == dst.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(),
              dst[i].tensor.mutable_values().begin());
  NoGradGuard ng;
  std::size_t hits = 0, total = 0;
  Rng rng(99);
  for (const auto& e : encoded) {
    Tensor hx = model.encode_context(e.context);
    std::vector<int> want(e.keyword_target.begin() + 1, e.keyword_target.end() - 1);
    std::vector<int> got = model.sample_keywords_soft(hx, e.context.padding, rng).argmax_ids();
    for (std::size_t i = 0; i < want.size(); ++i) hits += i < got.size() && got[i] == want[i];
    total += want.size();
  }
  REQUIRE(total > 0);
  CHECK(double(hits) / total >= 0.9);
}

TEST_CASE("report aggregates are the means of the per-example scores") {
  const LoadedModel& m = trained();
  const auto held = load_eval_examples(kData / "heldout.txt");
  const WordVectorTable vectors = vectors_from_model(*m.model, m.vocab);
  const EvalOutput out = evaluate(*m.model, m.vocab, held, EvalMode::GeneratedKeywords, vectors);
  double bleu = 0, rl = 0, met = 0, f1 = 0, rec = 0, avg = 0;
  std::size_t scored = 0;
  std::vector<Tokens> refs, cands;
  for (const auto& r : out.records) {
    ExampleScores s = score_record(r, vectors);
    bleu += s.sentence_bleu;
    rl += s.rouge_l;
    met += s.meteor;
    f1 += s.kw_f1;
    rec += s.kw_recall;
    if (s.embedding_average) {
      avg += *s.embedding_average;
      ++scored;
    }
    refs.push_back(r.reference);
    cands.push_back(r.generated);
    CHECK(s.kw_f1 == Approx(kw_f1(r.generated_keywords, r.reference_keywords).f1));
    CHECK(s.kw_recall == Approx(kw_recall(r.generated_keywords, r.generated)));
  }
  const double n = double(out.records.size());
  CHECK(out.report.examples == out.records.size());
  CHECK(out.report.bleu == Approx(corpus_bleu(refs, cands)).epsilon(1e-12));
  CHECK(out.report.sentence_bleu == Approx(bleu / n).epsilon(1e-12));
  CHECK(out.report.rouge_l == Approx(rl / n).epsilon(1e-12));
  CHECK(out.report.meteor == Approx(met / n).epsilon(1e-12));
  CHECK(out.report.kw_f1 == Approx(f1 / n).epsilon(1e-12));
  CHECK(out.report.kw_recall == Approx(rec / n).epsilon(1e-12));
  REQUIRE(scored > 0);
  CHECK(out.report.embedding_average == Approx(avg / scored).epsilon(1e-12));
  CHECK(out.report.embedding_scored == scored);
}

TEST_CASE("cli eval matches the library and honours --gt-keywords") {
  const fs::path dir = fs::temp_directory_path() / "kwseq_overfit_eval";
  fs::create_directories(dir);
  const std::string base = "eval --checkpoint " + (kRun / "checkpoint").string() + " --data " +
                           (kData / "heldout.txt").string();
  run_cli(base + " --predictions " + (dir / "gen.jsonl").string() + " --report " +
          (dir / "gen.json").string());
  run_cli(base + " --gt-keywords --predictions " + (dir / "gt.jsonl").string() + " --report " +
          (dir / "gt.json").string());

  const LoadedModel& m = trained();
  const auto held = load_eval_examples(kData / "heldout.txt");
  const WordVectorTable vectors = vectors_from_model(*m.model, m.vocab);
  const MetricReport want =
      evaluate(*m.model, m.vocab, held, EvalMode::GeneratedKeywords, vectors).report;
  std::ifstream in(dir / "gen.json");
  const json got = json::parse(in);
  CHECK(got == report_to_json(want));

  for (const auto& r : read_jsonl(dir / "gen.jsonl")) CHECK(r["keyword_source"] == "generated");
  const auto gt = read_jsonl(dir / "gt.jsonl");
  REQUIRE(gt.size() == held.size());
  for (const auto& r : gt) {
    CHECK(r["keyword_source"] == "ground-truth");
    // Forced keywords pass through the vocabulary, so unseen words read [UNK].
    CHECK(r["generated_keywords"] ==
          json(m.vocab.normalize(r["reference_keywords"].get<Tokens>())));
  }
  fs::remove_all(dir);
}

TEST_CASE("cli generate is deterministic and supports an empty forced keyword list") {
  const std::string base = "generate --checkpoint " + (kRun / "checkpoint").string();
  const std::string ctx = " \"is this seat free ?\" \"yes , please sit down .\"";
  const std::string a = run_cli(base + ctx);
  CHECK(a == run_cli(base + ctx));
  CHECK(a.find("keywords (predicted):") != std::string::npos);
  const std::string empty = run_cli(base + " --keywords \"\"" + ctx);
  CHECK(empty.find("keywords (forced): \n") != std::string::npos);
  const std::string forced = run_cli(base + " --keywords \"bus, morning\"" + ctx);
  CHECK(forced.find("keywords (forced): bus morning\n") != std::string::npos);
}
