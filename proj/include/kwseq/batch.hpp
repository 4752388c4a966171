#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace kwseq {

// Reserved vocabulary ids; every vocabulary starts with these five tokens.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kBosId = 4;
inline constexpr int kReservedTokens = 5;

// One encoded dialogue context, possibly right-padded.
struct ContextRow {
  std::vector<int> token_ids;
  std::vector<int> type_ids;
  std::vector<int> position_ids;
  std::vector<bool> padding;  // true at padded positions

  std::size_t size() const { return token_ids.size(); }
  std::size_t real_length() const;
};

// Model-ready form of one DialogueExample.
struct EncodedExample {
  ContextRow context;
  std::vector<int> keyword_target;   // [BOS] k1 .. kS [SEP]
  std::vector<int> response_target;  // [BOS] y1 .. yM [SEP]
  std::size_t example_index = 0;

  std::size_t token_count() const {
    return context.size() + keyword_target.size() + response_target.size();
  }
};

/// A padded batch. Matrices are row-major with `batch_size` rows; padding
/// uses kPadId in id matrices and `true` in context_padding.
struct EncodedBatch {
  std::size_t batch_size = 0;
  std::size_t context_len = 0;
  std::size_t keyword_len = 0;
  std::size_t response_len = 0;
  std::vector<int> token_ids;
  std::vector<int> type_ids;
  std::vector<int> position_ids;
  std::vector<std::uint8_t> context_padding;
  std::vector<int> keyword_targets;
  std::vector<int> response_targets;
  std::vector<std::size_t> context_lengths;
  std::vector<std::size_t> keyword_lengths;
  std::vector<std::size_t> response_lengths;
  std::vector<std::size_t> example_indices;

  static EncodedBatch from_examples(const std::vector<const EncodedExample*>& examples);

  ContextRow context_row(std::size_t b) const;
  // Unpadded [BOS] .. [SEP] target sequences.
  std::vector<int> keyword_target(std::size_t b) const;
  std::vector<int> response_target(std::size_t b) const;
  // Cost of the batch in padded tokens.
  std::size_t padded_tokens() const { return batch_size * (context_len + keyword_len + response_len); }
  std::size_t real_tokens() const;
};

}  // namespace kwseq
