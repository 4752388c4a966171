#include "kwseq/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "kwseq/checkpoint.hpp"
#include "kwseq/tensor.hpp"

namespace kwseq {

namespace {

const std::vector<std::string> kReservedNames = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[BOS]"};

bool is_word_byte(unsigned char c) {
  return std::isalnum(c) || c >= 0x80;
}

}  // namespace

Tokens tokenize(const std::string& text) {
  Tokens out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      const bool inner_apostrophe = c == '\'' && !word.empty() && i + 1 < text.size() &&
                                    is_word_byte(static_cast<unsigned char>(text[i + 1]));
      if (inner_apostrophe) {
        word.push_back('\'');
      } else {
        flush();
        out.emplace_back(1, static_cast<char>(c));
      }
    } else {
      word.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string detokenize(const Tokens& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary() : tokens_(kReservedNames) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = static_cast<int>(i);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReservedNames.size() ||
      !std::equal(kReservedNames.begin(), kReservedNames.end(), tokens.begin())) {
    throw InvalidArgument("vocabulary must start with [PAD] [UNK] [CLS] [SEP] [BOS]");
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<int>(i)).second) {
      throw InvalidArgument("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InvalidArgument("token id " + std::to_string(id) + " outside vocabulary");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(std::span<const int> ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

Tokens Vocabulary::normalize(const Tokens& tokens) const {
  Tokens out;
  for (const auto& t : tokens) out.push_back(contains(t) ? t : kReservedNames[kUnkId]);
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& t : tokens_) out += t + '\n';
  write_file_atomic(path, out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::build(const std::vector<Conversation>& corpus, std::size_t max_size,
                             std::size_t min_frequency) {
  std::map<std::string, std::size_t> counts;
  for (const auto& conv : corpus)
    for (const auto& utt : conv.utterances)
      for (const auto& t : utt) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (const auto& [token, count] : counts) {
    const bool reserved =
        std::find(kReservedNames.begin(), kReservedNames.end(), token) != kReservedNames.end();
    if (count >= min_frequency && !reserved) ranked.emplace_back(token, count);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens = kReservedNames;
  for (const auto& [token, count] : ranked) {
    if (tokens.size() >= max_size) break;
    tokens.push_back(token);
  }
  return from_tokens(std::move(tokens));
}

Conversation parse_conversation(const std::string& line) {
  static const std::string kDelimiter = "__eou__";
  Conversation conv;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t end = line.find(kDelimiter, start);
    if (end == std::string::npos) end = line.size();
    Tokens tokens = tokenize(line.substr(start, end - start));
    if (!tokens.empty()) conv.utterances.push_back(std::move(tokens));
    if (end == line.size()) break;
    start = end + kDelimiter.size();
  }
  return conv;
}

std::vector<Conversation> load_conversations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path.string());
  std::vector<Conversation> corpus;
  std::string line;
  while (std::getline(in, line)) {
    Conversation conv = parse_conversation(line);
    if (conv.utterances.size() >= 2) corpus.push_back(std::move(conv));
  }
  if (corpus.empty()) throw IoError("corpus " + path.string() + " holds no conversations");
  return corpus;
}

std::vector<DialogueExample> window_examples(const Conversation& conversation, std::size_t window) {
  if (window < 2) throw InvalidArgument("window must be at least 2");
  const std::size_t n = conversation.utterances.size();
  std::vector<DialogueExample> out;
  if (n < 2) return out;
  auto make = [&](std::size_t begin, std::size_t response) {
    DialogueExample e;
    for (std::size_t i = begin; i < response; ++i)
      e.context.push_back({conversation.utterances[i], static_cast<int>(i % 2)});
    e.response = conversation.utterances[response];
    out.push_back(std::move(e));
  };
  if (n < window) {
    make(0, n - 1);
  } else {
    for (std::size_t s = 0; s + window <= n; ++s) make(s, s + window - 1);
  }
  return out;
}

std::vector<DialogueExample> window_corpus(const std::vector<Conversation>& corpus,
                                           std::size_t window) {
  std::vector<DialogueExample> out;
  for (const auto& conv : corpus) {
    auto examples = window_examples(conv, window);
    std::move(examples.begin(), examples.end(), std::back_inserter(out));
  }
  return out;
}

double TfidfTable::idf(const std::string& token) const {
  auto it = document_frequency.find(token);
  if (it == document_frequency.end() || documents == 0) return 0.0;
  return std::log(static_cast<double>(documents) / static_cast<double>(it->second));
}

TfidfScores build_tfidf(const std::vector<Tokens>& responses) {
  if (responses.empty()) throw InvalidArgument("build_tfidf needs at least one response");
  TfidfScores result;
  result.table.documents = responses.size();
  for (const auto& doc : responses) {
    std::vector<std::string> unique(doc.begin(), doc.end());
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (const auto& t : unique) ++result.table.document_frequency[t];
  }
  for (const auto& doc : responses) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : doc) ++counts[t];
    std::vector<double> scores;
    scores.reserve(doc.size());
    for (const auto& t : doc) {
      const double tf = static_cast<double>(counts[t]) / static_cast<double>(doc.size());
      scores.push_back(tf * result.table.idf(t));
    }
    result.scores.push_back(std::move(scores));
  }
  return result;
}

std::vector<std::size_t> keyword_positions(std::span<const double> scores, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw InvalidArgument("keyword ratio must be in (0, 1], got " + std::to_string(ratio));
  }
  if (scores.empty()) throw InvalidArgument("cannot extract keywords from an empty response");
  const std::size_t n = scores.size();
  // The small offset keeps products like 0.3·10 from rounding up past 3.
  const auto wanted = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-9));
  const std::size_t k = std::min(n, std::max<std::size_t>(1, wanted));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

Tokens extract_keywords(const Tokens& response, std::span<const double> scores, double ratio) {
  if (response.size() != scores.size()) {
    throw InvalidArgument("extract_keywords: one score per response token required");
  }
  Tokens out;
  for (std::size_t pos : keyword_positions(scores, ratio)) out.push_back(response[pos]);
  return out;
}

void annotate_keywords(std::vector<DialogueExample>& examples, double ratio) {
  if (examples.empty()) return;
  std::vector<Tokens> responses;
  responses.reserve(examples.size());
  for (const auto& e : examples) responses.push_back(e.response);
  const TfidfScores tfidf = build_tfidf(responses);
  for (std::size_t i = 0; i < examples.size(); ++i)
    examples[i].keywords = extract_keywords(examples[i].response, tfidf.scores[i], ratio);
}

ContextRow build_context_row(const std::vector<Utterance>& context, const Vocabulary& vocab,
                             std::size_t max_context_len) {
  if (context.empty()) throw InvalidArgument("dialogue context is empty");
  if (max_context_len < 3) throw InvalidArgument("max_context_len must be at least 3");
  if (vocab.token(kClsId) != "[CLS]" || vocab.token(kSepId) != "[SEP]") {
    throw InvalidArgument("vocabulary lacks reserved tokens");
  }
  const int first_speaker = context.front().speaker;
  std::size_t first = 0;
  auto length_from = [&](std::size_t begin) {
    std::size_t total = 1;
    for (std::size_t i = begin; i < context.size(); ++i) total += context[i].tokens.size() + 1;
    return total;
  };
  while (first + 1 < context.size() && length_from(first) > max_context_len) ++first;

  ContextRow row;
  auto push = [&](int token, int type) {
    row.token_ids.push_back(token);
    row.type_ids.push_back(type);
    row.position_ids.push_back(static_cast<int>(row.position_ids.size()));
    row.padding.push_back(false);
  };
  push(kClsId, (context[first].speaker ^ first_speaker) & 1);
  for (std::size_t i = first; i < context.size(); ++i) {
    const int type = (context[i].speaker ^ first_speaker) & 1;
    const Tokens& tokens = context[i].tokens;
    // A single utterance longer than the budget keeps its last tokens.
    const std::size_t room = max_context_len - row.size() - 1;
    const std::size_t skip = tokens.size() > room ? tokens.size() - room : 0;
    for (std::size_t t = skip; t < tokens.size(); ++t) push(vocab.id(tokens[t]), type);
    push(kSepId, type);
  }
  return row;
}

EncodedExample build_input_representation(const DialogueExample& example, const Vocabulary& vocab,
                                          const SequenceLimits& limits) {
  if (vocab.token(kBosId) != "[BOS]" || vocab.token(kPadId) != "[PAD]") {
    throw InvalidArgument("vocabulary lacks reserved tokens");
  }
  EncodedExample out;
  out.context = build_context_row(example.context, vocab, limits.max_context_len);
  out.keyword_target.push_back(kBosId);
  for (std::size_t i = 0; i < example.keywords.size() && i < limits.max_keyword_len; ++i)
    out.keyword_target.push_back(vocab.id(example.keywords[i]));
  out.keyword_target.push_back(kSepId);
  out.response_target.push_back(kBosId);
  for (std::size_t i = 0; i < example.response.size() && i < limits.max_response_len; ++i)
    out.response_target.push_back(vocab.id(example.response[i]));
  out.response_target.push_back(kSepId);
  return out;
}

std::vector<EncodedBatch> token_budget_batches(std::span<const EncodedExample> examples,
                                               std::size_t max_tokens, Rng& rng) {
  for (const auto& e : examples) {
    if (e.token_count() > max_tokens) {
      throw InvalidArgument("example " + std::to_string(e.example_index) + " needs " +
                            std::to_string(e.token_count()) + " tokens, over the budget of " +
                            std::to_string(max_tokens));
    }
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return examples[a].token_count() < examples[b].token_count();
  });

  std::vector<std::vector<const EncodedExample*>> groups;
  std::vector<const EncodedExample*> current;
  std::size_t ctx = 0, kw = 0, resp = 0;
  for (std::size_t idx : order) {
    const EncodedExample& e = examples[idx];
    const std::size_t nctx = std::max(ctx, e.context.size());
    const std::size_t nkw = std::max(kw, e.keyword_target.size());
    const std::size_t nresp = std::max(resp, e.response_target.size());
    if (!current.empty() && (current.size() + 1) * (nctx + nkw + nresp) > max_tokens) {
      groups.push_back(std::move(current));
      current.clear();
      ctx = kw = resp = 0;
    }
    current.push_back(&e);
    ctx = std::max(ctx, e.context.size());
    kw = std::max(kw, e.keyword_target.size());
    resp = std::max(resp, e.response_target.size());
  }
  if (!current.empty()) groups.push_back(std::move(current));
  rng.shuffle(std::span<std::vector<const EncodedExample*>>(groups));

  std::vector<EncodedBatch> batches;
  batches.reserve(groups.size());
  for (const auto& g : groups) batches.push_back(EncodedBatch::from_examples(g));
  return batches;
}

void save_examples_jsonl(const std::filesystem::path& path,
                         const std::vector<DialogueExample>& examples) {
  std::string out;
  for (const auto& e : examples) {
    nlohmann::json j;
    j["context"] = nlohmann::json::array();
    for (const auto& u : e.context) j["context"].push_back(detokenize(u.tokens));
    j["response"] = detokenize(e.response);
    j["keywords"] = e.keywords;
    out += j.dump() + '\n';
  }
  write_file_atomic(path, out);
}

std::vector<DialogueExample> load_examples_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<DialogueExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      DialogueExample e;
      int speaker = 0;
      for (const auto& u : j.at("context")) {
        e.context.push_back({tokenize(u.get<std::string>()), speaker});
        speaker ^= 1;
      }
      e.response = tokenize(j.at("response").get<std::string>());
      e.keywords = j.at("keywords").get<Tokens>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return out;
}

}  // namespace kwseq
