#include "kwseq/service.hpp"

#include <algorithm>
#include <cctype>

namespace kwseq {

namespace {

std::string dump(const nlohmann::json& j) {
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string error_body(const std::string& message) { return dump({{"error", message}}); }

bool is_json_content_type(const std::string& content_type) {
  std::string media = content_type.substr(0, content_type.find(';'));
  media.erase(std::remove_if(media.begin(), media.end(),
                             [](unsigned char c) { return std::isspace(c); }),
              media.end());
  std::transform(media.begin(), media.end(), media.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return media == "application/json";
}

std::vector<std::string> string_list(const nlohmann::json& value, const char* field) {
  if (!value.is_array()) throw RequestError(400, std::string("'") + field + "' must be an array");
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) {
      throw RequestError(400, std::string("'") + field + "' must contain only strings");
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

ChatService::ChatService(LoadedModel model) : model_(std::move(model)) {
  if (!model_.model) throw InvalidArgument("chat service needs a loaded model");
}

nlohmann::json ChatService::health() const {
  const ModelConfig& c = model_.model->config();
  return {{"status", "ok"},
          {"version", kVersion},
          {"vocab_size", c.vocab_size},
          {"model_dim", c.model_dim},
          {"layers", c.layers},
          {"heads", c.heads},
          {"max_context_len", c.max_context_len},
          {"max_keyword_len", c.max_keyword_len},
          {"max_response_len", c.max_response_len}};
}

nlohmann::json ChatService::chat(const nlohmann::json& request) const {
  if (!request.is_object()) throw RequestError(400, "request body must be a JSON object");
  for (const auto& [key, value] : request.items()) {
    if (key != "context" && key != "forced_keywords" && key != "max_response_length") {
      throw RequestError(400, "unknown field '" + key + "'");
    }
  }
  if (!request.contains("context")) throw RequestError(400, "missing field 'context'");
  const auto utterances = string_list(request.at("context"), "context");
  if (utterances.empty()) throw RequestError(422, "context must hold at least one utterance");

  const ModelConfig& config = model_.model->config();
  std::size_t max_len = config.max_response_len;
  if (request.contains("max_response_length") && !request.at("max_response_length").is_null()) {
    const auto& v = request.at("max_response_length");
    if (!v.is_number_integer()) throw RequestError(400, "'max_response_length' must be an integer");
    if (v.get<long long>() < 1) throw RequestError(422, "'max_response_length' must be >= 1");
    max_len = std::min<std::size_t>(max_len, v.get<std::size_t>());
  }

  std::optional<std::vector<int>> forced;
  if (request.contains("forced_keywords") && !request.at("forced_keywords").is_null()) {
    std::vector<int> ids;
    for (const std::string& k : string_list(request.at("forced_keywords"), "forced_keywords"))
      for (int id : model_.vocab.encode(tokenize(k))) ids.push_back(id);
    forced = std::move(ids);
  }

  const std::size_t first =
      utterances.size() > kServedContextUtterances ? utterances.size() - kServedContextUtterances : 0;
  std::vector<Utterance> context;
  for (std::size_t i = first; i < utterances.size(); ++i) {
    Tokens tokens = tokenize(utterances[i]);
    if (tokens.empty()) throw RequestError(422, "context utterances must be non-empty");
    context.push_back({std::move(tokens), static_cast<int>((i - first) % 2)});
  }

  ContextRow row = build_context_row(context, model_.vocab, config.max_context_len);
  GenerationResult g = model_.model->generate(row, forced, max_len);
  return {{"keywords", model_.vocab.decode(g.keyword_ids)},
          {"keyword_source", forced ? "forced" : "predicted"},
          {"response", detokenize(model_.vocab.decode(g.response_ids))},
          {"token_count", g.response_ids.size()}};
}

HttpReply ChatService::handle(const std::string& method, const std::string& path,
                              const std::string& content_type, const std::string& body) const {
  try {
    if (path == "/healthz" || path == "/version") {
      if (method != "GET") return {405, error_body("use GET for " + path)};
      if (path == "/healthz") return {200, dump(health())};
      return {200, dump({{"version", kVersion}})};
    }
    if (path != "/chat") return {404, error_body("no route for " + path)};
    if (method != "POST") return {405, error_body("use POST for /chat")};
    if (!is_json_content_type(content_type)) {
      return {415, error_body("Content-Type must be application/json")};
    }
    nlohmann::json request;
    try {
      request = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
      return {400, error_body(std::string("malformed JSON: ") + e.what())};
    }
    return {200, dump(chat(request))};
  } catch (const RequestError& e) {
    return {e.status(), error_body(e.what())};
  } catch (const std::exception& e) {
    return {500, error_body(e.what())};
  }
}

}  // namespace kwseq
