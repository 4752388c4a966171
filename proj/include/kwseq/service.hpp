#pragma once

#include <string>

#include "json.hpp"
#include "kwseq/bundle.hpp"

namespace kwseq {

inline constexpr const char* kVersion = "0.1.0";
// Utterances of a request kept as context (the training window minus the
// response).
inline constexpr std::size_t kServedContextUtterances = 5;

struct HttpReply {
  int status = 200;
  std::string body;
};

/// Stateless request handling over one immutable model. Safe to call from
/// several threads at once.
class ChatService {
 public:
  explicit ChatService(LoadedModel model);

  // Routes GET /healthz, GET /version and POST /chat.
  HttpReply handle(const std::string& method, const std::string& path,
                   const std::string& content_type, const std::string& body) const;

  // The /chat operation on a parsed request. Throws RequestError.
  nlohmann::json chat(const nlohmann::json& request) const;
  nlohmann::json health() const;

  const LoadedModel& model() const { return model_; }

 private:
  LoadedModel model_;
};

// A rejected request; `status` is 400 or 422.
class RequestError : public Error {
 public:
  RequestError(int status, const std::string& message) : Error(message), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

}  // namespace kwseq
