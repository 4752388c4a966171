#include "kwseq/kwseq.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "kwseq/bundle.hpp"
#include "kwseq/evaluate.hpp"
#include "kwseq/service.hpp"
#include "kwseq/trainer.hpp"

struct kwseq_model {
  explicit kwseq_model(kwseq::LoadedModel m) : service(std::move(m)) {}
  kwseq::ChatService service;
};

namespace {

thread_local std::string g_last_error;

kwseq_status fail(kwseq_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string dump(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

template <class F>
kwseq_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return KWSEQ_OK;
  } catch (const kwseq::RequestError& e) {
    return fail(KWSEQ_ERR_INVALID_ARGUMENT, e.what());
  } catch (const kwseq::InvalidArgument& e) {
    return fail(KWSEQ_ERR_INVALID_ARGUMENT, e.what());
  } catch (const kwseq::IoError& e) {
    return fail(KWSEQ_ERR_IO, e.what());
  } catch (const kwseq::ShapeError& e) {
    return fail(KWSEQ_ERR_SHAPE, e.what());
  } catch (const kwseq::NumericError& e) {
    return fail(KWSEQ_ERR_NUMERIC, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(KWSEQ_ERR_INVALID_ARGUMENT, std::string("JSON error: ") + e.what());
  } catch (const std::exception& e) {
    return fail(KWSEQ_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(KWSEQ_ERR_INTERNAL, "unknown error");
  }
}

nlohmann::json parse_optional(const char* text, const char* what) {
  if (!text || !*text) return nlohmann::json::object();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw kwseq::InvalidArgument(std::string("malformed ") + what + ": " + e.what());
  }
  if (!j.is_object()) throw kwseq::InvalidArgument(std::string(what) + " must be a JSON object");
  return j;
}

void require(const void* p, const char* name) {
  if (!p) throw kwseq::InvalidArgument(std::string(name) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* kwseq_version(void) { return kwseq::kVersion; }

const char* kwseq_last_error(void) { return g_last_error.c_str(); }

void kwseq_string_free(char* s) { std::free(s); }

kwseq_status kwseq_train(const char* corpus_path, const char* config_json, const char* out_dir,
                         kwseq_progress_fn progress, void* user_data, char** summary_json) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require(out_dir, "out_dir");
    const nlohmann::json cfg = parse_optional(config_json, "training config");
    for (const auto& [key, value] : cfg.items()) {
      if (key != "recipe" && key != "model" && key != "train") {
        throw kwseq::InvalidArgument("unknown config section '" + key + "'");
      }
    }
    kwseq::ModelConfig model_cfg;
    kwseq::TrainConfig train_cfg;
    if (cfg.contains("recipe")) {
      const std::string recipe = cfg.at("recipe").get<std::string>();
      if (recipe != "overfit") throw kwseq::InvalidArgument("unknown recipe '" + recipe + "'");
      model_cfg = kwseq::overfit_model_config();
      train_cfg = kwseq::overfit_train_config();
    }
    if (cfg.contains("model")) kwseq::from_json(cfg.at("model"), model_cfg);
    if (cfg.contains("train")) kwseq::from_json(cfg.at("train"), train_cfg);

    auto data = kwseq::prepare_corpus(corpus_path, train_cfg, model_cfg);
    model_cfg.vocab_size = data.vocab.size();
    kwseq::KwSeq2Seq model(model_cfg, train_cfg.seed);
    kwseq::StepCallback cb;
    if (progress) {
      cb = [progress, user_data](const kwseq::LogRow& r) {
        const nlohmann::json row{{"step", r.step},       {"epoch", r.epoch},
                                 {"p", r.p},             {"L", r.loss},
                                 {"L_K", r.keyword_loss}, {"L_Y", r.response_loss},
                                 {"wall_time", r.wall_time}};
        progress(row.dump().c_str(), user_data);
      };
    }
    kwseq::TrainResult result = kwseq::train(model, data.vocab, data.encoded, train_cfg, out_dir, cb);
    if (summary_json) {
      nlohmann::json summary{{"checkpoint", result.checkpoint.string()},
                             {"metrics", (std::filesystem::path(out_dir) / "metrics.csv").string()},
                             {"steps", result.steps},
                             {"examples", data.encoded.size()},
                             {"vocab_size", data.vocab.size()}};
      if (!result.log.empty()) {
        const auto& last = result.log.back();
        summary["final"] = {{"L", last.loss}, {"L_K", last.keyword_loss},
                            {"L_Y", last.response_loss}, {"p", last.p}};
      }
      *summary_json = copy_string(dump(summary));
    }
  });
}

kwseq_status kwseq_model_open(const char* checkpoint_dir, kwseq_model** out) {
  return guarded([&] {
    require(checkpoint_dir, "checkpoint_dir");
    require(out, "out");
    *out = nullptr;
    *out = new kwseq_model(kwseq::load_checkpoint(checkpoint_dir));
  });
}

void kwseq_model_close(kwseq_model* model) { delete model; }

kwseq_status kwseq_model_info(const kwseq_model* model, char** info_json) {
  return guarded([&] {
    require(model, "model");
    require(info_json, "info_json");
    *info_json = copy_string(dump(model->service.health()));
  });
}

kwseq_status kwseq_generate(const kwseq_model* model, const char* request_json,
                            char** result_json) {
  return guarded([&] {
    require(model, "model");
    require(request_json, "request_json");
    require(result_json, "result_json");
    nlohmann::json request;
    try {
      request = nlohmann::json::parse(request_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw kwseq::InvalidArgument(std::string("malformed request: ") + e.what());
    }
    *result_json = copy_string(dump(model->service.chat(request)));
  });
}

kwseq_status kwseq_evaluate(const kwseq_model* model, const char* dataset_path,
                            const char* options_json, char** result_json) {
  return guarded([&] {
    require(model, "model");
    require(dataset_path, "dataset_path");
    const nlohmann::json opts = parse_optional(options_json, "evaluation options");
    for (const auto& [key, value] : opts.items()) {
      if (key != "mode" && key != "vectors" && key != "predictions" && key != "report" &&
          key != "keyword_ratio") {
        throw kwseq::InvalidArgument("unknown evaluation option '" + key + "'");
      }
    }
    const std::string mode_name = opts.value("mode", std::string("generated-keywords"));
    kwseq::EvalMode mode;
    if (mode_name == "generated-keywords") {
      mode = kwseq::EvalMode::GeneratedKeywords;
    } else if (mode_name == "ground-truth-keywords") {
      mode = kwseq::EvalMode::GroundTruthKeywords;
    } else {
      throw kwseq::InvalidArgument("unknown evaluation mode '" + mode_name + "'");
    }
    const auto& loaded = model->service.model();
    const kwseq::WordVectorTable vectors =
        opts.contains("vectors")
            ? kwseq::WordVectorTable::load_text(opts.at("vectors").get<std::string>())
            : kwseq::vectors_from_model(*loaded.model, loaded.vocab);
    const auto examples =
        kwseq::load_eval_examples(dataset_path, opts.value("keyword_ratio", 0.30));
    const kwseq::EvalOutput out =
        kwseq::evaluate(*loaded.model, loaded.vocab, examples, mode, vectors);
    if (opts.contains("predictions") || opts.contains("report")) {
      if (!opts.contains("predictions") || !opts.contains("report")) {
        throw kwseq::InvalidArgument("'predictions' and 'report' must be given together");
      }
      kwseq::write_eval_outputs(out, vectors, opts.at("predictions").get<std::string>(),
                                opts.at("report").get<std::string>());
    }
    if (result_json) {
      *result_json = copy_string(dump({{"report", kwseq::report_to_json(out.report)},
                                       {"table", kwseq::render_report_table(out.report)}}));
    }
  });
}

kwseq_status kwseq_handle_http(const kwseq_model* model, const char* method, const char* path,
                               const char* content_type, const char* body, int* http_status,
                               char** response_body) {
  return guarded([&] {
    require(model, "model");
    require(method, "method");
    require(path, "path");
    require(http_status, "http_status");
    require(response_body, "response_body");
    kwseq::HttpReply reply = model->service.handle(method, path, content_type ? content_type : "",
                                                   body ? body : "");
    *http_status = reply.status;
    *response_body = copy_string(reply.body);
  });
}

}  // extern "C"
