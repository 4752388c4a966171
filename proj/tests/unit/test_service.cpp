#include <filesystem>
#include <thread>

#include "doctest.h"
#include "kwseq/service.hpp"

using namespace kwseq;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const ChatService& service() {
  static const ChatService s = [] {
    auto conversations = load_conversations(fs::path(KWSEQ_TEST_DATA) / "train.txt");
    Vocabulary vocab = Vocabulary::build(conversations, 1000);
    ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.model_dim = 16;
    cfg.layers = 1;
    cfg.heads = 2;
    cfg.max_context_len = 48;
    cfg.max_keyword_len = 4;
    cfg.max_response_len = 8;
    KwSeq2Seq model(cfg, 11);
    fs::path dir = fs::temp_directory_path() / "kwseq_service_ckpt";
    save_checkpoint(dir, model, vocab, nullptr);
    ChatService svc(load_checkpoint(dir));
    fs::remove_all(dir);
    return svc;
  }();
  return s;
}

HttpReply post(const std::string& body, const std::string& type = "application/json") {
  return service().handle("POST", "/chat", type, body);
}

}  // namespace

TEST_CASE("health and version") {
  HttpReply h = service().handle("GET", "/healthz", "", "");
  CHECK(h.status == 200);
  json j = json::parse(h.body);
  CHECK(j["status"] == "ok");
  CHECK(j["version"] == kVersion);
  CHECK(j["model_dim"] == 16);
  HttpReply v = service().handle("GET", "/version", "", "");
  CHECK(json::parse(v.body)["version"] == kVersion);
}

TEST_CASE("routing errors") {
  CHECK(service().handle("GET", "/chat", "", "").status == 405);
  CHECK(service().handle("POST", "/healthz", "application/json", "{}").status == 405);
  CHECK(service().handle("GET", "/missing", "", "").status == 404);
}

TEST_CASE("request validation status codes") {
  CHECK(post(R"({"context":["hi"]})", "text/plain").status == 415);
  CHECK(post(R"({"context":["hi"]})", "").status == 415);
  CHECK(post(R"({"context":["hi"]})", "Application/JSON; charset=utf-8").status == 200);
  CHECK(post("{not json").status == 400);
  CHECK(post("[1,2]").status == 400);
  CHECK(post(R"({"context":["hi"],"temperature":1})").status == 400);
  CHECK(post(R"({"context":"hi"})").status == 400);
  CHECK(post(R"({"context":[1]})").status == 400);
  CHECK(post(R"({})").status == 400);
  CHECK(post(R"({"context":["hi"],"forced_keywords":"x"})").status == 400);
  CHECK(post(R"({"context":["hi"],"max_response_length":"5"})").status == 400);
  CHECK(post(R"({"context":[]})").status == 422);
  CHECK(post(R"({"context":["hi",""]})").status == 422);
  CHECK(post(R"({"context":["   "]})").status == 422);
  CHECK(post(R"({"context":["hi"],"max_response_length":0})").status == 422);
  CHECK(post(R"({"context":["hi"],"max_response_length":-3})").status == 422);
  HttpReply bad = post(R"({"context":[]})");
  CHECK(json::parse(bad.body).contains("error"));
}

TEST_CASE("successful replies have exactly the documented fields") {
  HttpReply r = post(R"({"context":["how are you today ?","fine thanks"],"max_response_length":3})");
  REQUIRE(r.status == 200);
  json j = json::parse(r.body);
  CHECK(j.size() == 4);
  CHECK(j["keyword_source"] == "predicted");
  CHECK(j["keywords"].is_array());
  CHECK(j["response"].is_string());
  CHECK(j["token_count"].get<int>() <= 3);
  CHECK(post(R"({"context":["how are you today ?","fine thanks"],"max_response_length":3})").body == r.body);
}

TEST_CASE("forced keywords are echoed") {
  json j = json::parse(post(R"({"context":["hello"],"forced_keywords":["coffee","the"]})").body);
  CHECK(j["keyword_source"] == "forced");
  CHECK(j["keywords"] == json::array({"coffee", "the"}));
  json multi = json::parse(post(R"({"context":["hello"],"forced_keywords":["the coffee"]})").body);
  CHECK(multi["keywords"] == json::array({"the", "coffee"}));
  json none = json::parse(post(R"({"context":["hello"],"forced_keywords":[]})").body);
  CHECK(none["keyword_source"] == "forced");
  CHECK(none["keywords"].empty());
  json unknown = json::parse(post(R"({"context":["hello"],"forced_keywords":["zyzzyva"]})").body);
  CHECK(unknown["keywords"] == json::array({"[UNK]"}));
}

TEST_CASE("only the last five utterances are used") {
  json longer = {{"context", {"one", "two", "three", "four", "five", "six", "seven"}}};
  json last5 = {{"context", {"three", "four", "five", "six", "seven"}}};
  CHECK(post(longer.dump()).body == post(last5.dump()).body);
}

TEST_CASE("concurrent requests give identical replies") {
  const std::string body = R"({"context":["are you free tonight ?"]})";
  const std::string want = post(body).body;
  std::vector<std::string> got(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) threads.emplace_back([&, t] { got[t] = post(body).body; });
  for (auto& th : threads) th.join();
  for (const auto& g : got) CHECK(g == want);
}
