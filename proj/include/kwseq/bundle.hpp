#pragma once

#include <filesystem>
#include <memory>

#include "json.hpp"
#include "kwseq/corpus.hpp"
#include "kwseq/model.hpp"
#include "kwseq/optim.hpp"

namespace kwseq {

// A checkpoint directory holds config.json, params.bin, vocab.txt and, for
// training checkpoints, optimizer.bin.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kParamsFile = "params.bin";
inline constexpr const char* kOptimizerFile = "optimizer.bin";
inline constexpr const char* kVocabFile = "vocab.txt";

struct LoadedModel {
  Vocabulary vocab;
  std::shared_ptr<const KwSeq2Seq> model;
  nlohmann::json config;  // full config.json contents
};

// Writes into "<dir>.tmp" and renames over `dir` once every file is complete.
// `extra` is merged into config.json next to the "model" entry.
void save_checkpoint(const std::filesystem::path& dir, const KwSeq2Seq& model,
                     const Vocabulary& vocab, const AdamState* optimizer,
                     const nlohmann::json& extra = nlohmann::json::object());

// Validates that the vocabulary and every parameter agree with the config.
LoadedModel load_checkpoint(const std::filesystem::path& dir);
AdamState load_optimizer(const std::filesystem::path& dir, const AdamOptions& options);

}  // namespace kwseq
