#include "kwseq/bundle.hpp"

#include <system_error>

#include "kwseq/checkpoint.hpp"

namespace kwseq {

namespace fs = std::filesystem;

void save_checkpoint(const fs::path& dir, const KwSeq2Seq& model, const Vocabulary& vocab,
                     const AdamState* optimizer, const nlohmann::json& extra) {
  if (vocab.size() != model.config().vocab_size) {
    throw InvalidArgument("vocabulary size " + std::to_string(vocab.size()) +
                          " does not match model vocab_size " +
                          std::to_string(model.config().vocab_size));
  }
  fs::path staging = dir;
  staging += ".tmp";
  std::error_code ec;
  fs::remove_all(staging, ec);
  if (!fs::create_directories(staging, ec) && ec) {
    throw IoError("cannot create checkpoint directory " + staging.string() + ": " + ec.message());
  }
  nlohmann::json config = extra.is_object() ? extra : nlohmann::json::object();
  config["model"] = model.config();
  write_file_atomic(staging / kConfigFile, config.dump(2) + "\n");
  save_tensors(staging / kParamsFile, model.named_parameters());
  if (optimizer) save_tensors(staging / kOptimizerFile, optimizer->to_tensors());
  vocab.save(staging / kVocabFile);

  fs::remove_all(dir, ec);
  fs::rename(staging, dir, ec);
  if (ec) throw IoError("cannot move checkpoint into " + dir.string() + ": " + ec.message());
}

LoadedModel load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  LoadedModel out;
  try {
    out.config = nlohmann::json::parse(read_file(dir / kConfigFile));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed " + (dir / kConfigFile).string() + ": " + e.what());
  }
  if (!out.config.contains("model")) throw IoError("config.json has no \"model\" entry");
  ModelConfig config = out.config.at("model").get<ModelConfig>();
  config.validate();
  out.vocab = Vocabulary::load(dir / kVocabFile);
  if (out.vocab.size() != config.vocab_size) {
    throw InvalidArgument("vocab.txt holds " + std::to_string(out.vocab.size()) +
                          " tokens but config says " + std::to_string(config.vocab_size));
  }
  auto model = std::make_shared<KwSeq2Seq>(config, 0);
  assign_tensors(load_tensors(dir / kParamsFile), model->named_parameters());
  out.model = std::move(model);
  return out;
}

AdamState load_optimizer(const fs::path& dir, const AdamOptions& options) {
  return AdamState::from_tensors(load_tensors(dir / kOptimizerFile), options);
}

}  // namespace kwseq
