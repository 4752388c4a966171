// kwseq: train | eval | generate | serve, built on the C interface.
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "kwseq/kwseq.h"

namespace {

using json = nlohmann::json;

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Owned {
  char* ptr = nullptr;
  ~Owned() { kwseq_string_free(ptr); }
  std::string str() const { return ptr ? ptr : ""; }
};

struct ModelHandle {
  kwseq_model* ptr = nullptr;
  ~ModelHandle() { kwseq_model_close(ptr); }
};

int report_failure(const char* what) {
  std::fprintf(stderr, "kwseq %s: %s\n", what, kwseq_last_error());
  return kExitFailure;
}

bool open_model(const std::string& dir, ModelHandle& model) {
  if (kwseq_model_open(dir.c_str(), &model.ptr) != KWSEQ_OK) {
    report_failure("load");
    return false;
  }
  return true;
}

std::vector<std::string> split_keywords(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(item.substr(b, item.find_last_not_of(" \t") - b + 1));
  }
  return out;
}

struct TrainArgs {
  std::string corpus, out, config, recipe;
  long long epochs = -1, max_steps = -1, seed = -1, log_every = 10;
  std::string mode;
};

int run_train(const TrainArgs& a) {
  json cfg = json::object();
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) {
      std::fprintf(stderr, "kwseq train: cannot read config %s\n", a.config.c_str());
      return kExitUsage;
    }
    try {
      cfg = json::parse(in);
    } catch (const json::exception& e) {
      std::fprintf(stderr, "kwseq train: bad config %s: %s\n", a.config.c_str(), e.what());
      return kExitUsage;
    }
  }
  if (!a.recipe.empty()) cfg["recipe"] = a.recipe;
  if (a.epochs >= 0) cfg["train"]["epochs"] = a.epochs;
  if (a.max_steps >= 0) cfg["train"]["max_steps"] = a.max_steps;
  if (a.seed >= 0) cfg["train"]["seed"] = a.seed;
  if (!a.mode.empty()) cfg["train"]["anneal_mode"] = a.mode;

  struct Progress {
    long long every;
  } progress{a.log_every};
  auto on_step = [](const char* row, void* user) {
    const auto every = static_cast<Progress*>(user)->every;
    const json r = json::parse(row);
    if (every > 0 && r["step"].get<long long>() % every == 0) {
      std::printf("step %5lld  epoch %4lld  p %.3f  L %.4f  L_K %.4f  L_Y %.4f\n",
                  r["step"].get<long long>(), r["epoch"].get<long long>(), r["p"].get<double>(),
                  r["L"].get<double>(), r["L_K"].get<double>(), r["L_Y"].get<double>());
      std::fflush(stdout);
    }
  };
  Owned summary;
  const std::string cfg_text = cfg.dump();
  if (kwseq_train(a.corpus.c_str(), cfg_text.c_str(), a.out.c_str(), on_step, &progress,
                  &summary.ptr) != KWSEQ_OK) {
    return report_failure("train");
  }
  const json s = json::parse(summary.str());
  if (s.contains("final")) {
    std::printf("final  L %.6f  L_K %.6f  L_Y %.6f  after %lld steps\n",
                s["final"]["L"].get<double>(), s["final"]["L_K"].get<double>(),
                s["final"]["L_Y"].get<double>(), s["steps"].get<long long>());
  }
  std::printf("checkpoint: %s\n", s["checkpoint"].get<std::string>().c_str());
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, vectors, predictions = "predictions.jsonl", report = "report.json";
  bool gt_keywords = false;
};

int run_eval(const EvalArgs& a) {
  ModelHandle model;
  if (!open_model(a.checkpoint, model)) return kExitFailure;
  json opts{{"mode", a.gt_keywords ? "ground-truth-keywords" : "generated-keywords"},
            {"predictions", a.predictions},
            {"report", a.report}};
  if (!a.vectors.empty()) opts["vectors"] = a.vectors;
  Owned result;
  const std::string opts_text = opts.dump();
  if (kwseq_evaluate(model.ptr, a.data.c_str(), opts_text.c_str(), &result.ptr) != KWSEQ_OK) {
    return report_failure("eval");
  }
  std::fputs(json::parse(result.str())["table"].get<std::string>().c_str(), stdout);
  std::printf("predictions: %s\nreport: %s\n", a.predictions.c_str(), a.report.c_str());
  return 0;
}

struct GenerateArgs {
  std::string checkpoint;
  std::vector<std::string> context;
  std::string keywords;
  bool keywords_given = false;
  long long max_length = 0;
};

int run_generate(GenerateArgs a) {
  if (a.context.empty()) {
    std::string line;
    while (std::getline(std::cin, line))
      if (line.find_first_not_of(" \t\r") != std::string::npos) a.context.push_back(line);
  }
  if (a.context.empty()) {
    std::fprintf(stderr, "kwseq generate: empty context (pass utterances or pipe them on stdin)\n");
    return kExitUsage;
  }
  ModelHandle model;
  if (!open_model(a.checkpoint, model)) return kExitFailure;
  json request{{"context", a.context}};
  if (a.keywords_given) request["forced_keywords"] = split_keywords(a.keywords);
  if (a.max_length > 0) request["max_response_length"] = a.max_length;
  Owned result;
  const std::string text = request.dump();
  if (kwseq_generate(model.ptr, text.c_str(), &result.ptr) != KWSEQ_OK) {
    return report_failure("generate");
  }
  const json r = json::parse(result.str());
  std::string kws;
  for (const auto& k : r["keywords"]) kws += (kws.empty() ? "" : " ") + k.get<std::string>();
  std::printf("keywords (%s): %s\n", r["keyword_source"].get<std::string>().c_str(), kws.c_str());
  std::printf("response: %s\n", r["response"].get<std::string>().c_str());
  return 0;
}

struct ServeArgs {
  std::string checkpoint, host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 4, queue = 64;
};

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int run_serve(const ServeArgs& a) {
  ModelHandle model;
  if (!open_model(a.checkpoint, model)) return kExitFailure;
  httplib::Server server;
  const std::size_t threads = a.threads, queue = a.queue;
  server.new_task_queue = [threads, queue] { return new httplib::ThreadPool(threads, queue); };
  auto route = [&model](const httplib::Request& req, httplib::Response& res) {
    int status = 500;
    Owned body;
    const std::string content_type = req.get_header_value("Content-Type");
    if (kwseq_handle_http(model.ptr, req.method.c_str(), req.path.c_str(), content_type.c_str(),
                          req.body.c_str(), &status, &body.ptr) != KWSEQ_OK) {
      res.status = 500;
      res.set_content(json{{"error", kwseq_last_error()}}.dump(), "application/json");
      return;
    }
    res.status = status;
    res.set_content(body.str(), "application/json");
  };
  for (const char* path : {"/chat", "/healthz", "/version"}) {
    server.Get(path, route);
    server.Post(path, route);
  }
  if (!server.bind_to_port(a.host, a.port)) {
    std::fprintf(stderr, "kwseq serve: cannot bind %s:%d\n", a.host.c_str(), a.port);
    return kExitFailure;
  }
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::printf("kwseq %s serving %s on http://%s:%d\n", kwseq_version(), a.checkpoint.c_str(),
              a.host.c_str(), a.port);
  std::fflush(stdout);
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KW-Seq2Seq keyword-guided dialogue model"};
  app.set_version_flag("--version", std::string(kwseq_version()));
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model on a corpus");
  t->add_option("--corpus", train.corpus, "Corpus file, one conversation per line")
      ->required()
      ->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--config", train.config, "JSON file with \"model\" and \"train\" sections");
  t->add_option("--recipe", train.recipe, "Preset base configuration")
      ->check(CLI::IsMember({"overfit"}));
  t->add_option("--epochs", train.epochs, "Override train.epochs")->check(CLI::PositiveNumber);
  t->add_option("--max-steps", train.max_steps, "Override train.max_steps")
      ->check(CLI::NonNegativeNumber);
  t->add_option("--seed", train.seed, "Override train.seed")->check(CLI::NonNegativeNumber);
  t->add_option("--anneal-mode", train.mode, "cosine, all-ground-truth or all-generated")
      ->check(CLI::IsMember({"cosine", "all-ground-truth", "all-generated"}));
  t->add_option("--log-every", train.log_every, "Print every N steps (0: quiet)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score a checkpoint on a dataset");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint directory")->required();
  e->add_option("--data", ev.data, "Corpus file or processed .jsonl")
      ->required()
      ->check(CLI::ExistingFile);
  e->add_flag("--gt-keywords", ev.gt_keywords, "Force the reference keywords");
  e->add_option("--vectors", ev.vectors, "Text word-vector file (default: model embeddings)")
      ->check(CLI::ExistingFile);
  e->add_option("--predictions", ev.predictions, "Predictions JSONL path")->capture_default_str();
  e->add_option("--report", ev.report, "Report JSON path")->capture_default_str();

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate one response");
  g->add_option("--checkpoint", gen.checkpoint, "Checkpoint directory")->required();
  auto* kw = g->add_option("--keywords", gen.keywords,
                           "Comma-separated keywords to force (\"\" forces none)");
  g->add_option("--max-length", gen.max_length, "Response length cap")
      ->check(CLI::PositiveNumber);
  g->add_option("context", gen.context, "Context utterances, oldest first (default: stdin)");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Run the HTTP service");
  s->add_option("--checkpoint", serve.checkpoint, "Checkpoint directory")
      ->envname("KWSEQ_CHECKPOINT")
      ->required();
  s->add_option("--port", serve.port, "TCP port")->envname("KWSEQ_PORT")->check(CLI::Range(1, 65535));
  s->add_option("--host", serve.host, "Bind address");
  s->add_option("--threads", serve.threads, "Worker threads")->check(CLI::PositiveNumber);
  s->add_option("--queue", serve.queue, "Pending request limit")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp& err) {
    return app.exit(err);
  } catch (const CLI::CallForVersion& err) {
    return app.exit(err);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  }

  if (*t) return run_train(train);
  if (*e) return run_eval(ev);
  if (*g) {
    gen.keywords_given = kw->count() > 0;
    return run_generate(gen);
  }
  return run_serve(serve);
}
