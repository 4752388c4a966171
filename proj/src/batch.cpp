#include "kwseq/batch.hpp"

#include <algorithm>

#include "kwseq/tensor.hpp"

namespace kwseq {

std::size_t ContextRow::real_length() const {
  return static_cast<std::size_t>(std::count(padding.begin(), padding.end(), false));
}

EncodedBatch EncodedBatch::from_examples(const std::vector<const EncodedExample*>& examples) {
  if (examples.empty()) throw InvalidArgument("cannot build an empty batch");
  EncodedBatch b;
  b.batch_size = examples.size();
  for (const EncodedExample* e : examples) {
    b.context_len = std::max(b.context_len, e->context.size());
    b.keyword_len = std::max(b.keyword_len, e->keyword_target.size());
    b.response_len = std::max(b.response_len, e->response_target.size());
  }
  b.token_ids.assign(b.batch_size * b.context_len, kPadId);
  b.type_ids.assign(b.batch_size * b.context_len, 0);
  b.position_ids.assign(b.batch_size * b.context_len, 0);
  b.context_padding.assign(b.batch_size * b.context_len, 1);
  b.keyword_targets.assign(b.batch_size * b.keyword_len, kPadId);
  b.response_targets.assign(b.batch_size * b.response_len, kPadId);
  for (std::size_t r = 0; r < b.batch_size; ++r) {
    const EncodedExample& e = *examples[r];
    for (std::size_t t = 0; t < b.context_len; ++t) {
      const std::size_t i = r * b.context_len + t;
      b.position_ids[i] = static_cast<int>(t);
      if (t < e.context.size()) {
        b.token_ids[i] = e.context.token_ids[t];
        b.type_ids[i] = e.context.type_ids[t];
        b.position_ids[i] = e.context.position_ids[t];
        b.context_padding[i] = e.context.padding[t] ? 1 : 0;
      }
    }
    std::copy(e.keyword_target.begin(), e.keyword_target.end(),
              b.keyword_targets.begin() + static_cast<long>(r * b.keyword_len));
    std::copy(e.response_target.begin(), e.response_target.end(),
              b.response_targets.begin() + static_cast<long>(r * b.response_len));
    b.context_lengths.push_back(e.context.real_length());
    b.keyword_lengths.push_back(e.keyword_target.size());
    b.response_lengths.push_back(e.response_target.size());
    b.example_indices.push_back(e.example_index);
  }
  return b;
}

ContextRow EncodedBatch::context_row(std::size_t b) const {
  if (b >= batch_size) throw ShapeError("batch row out of range");
  ContextRow row;
  const auto begin = static_cast<long>(b * context_len);
  const auto end = begin + static_cast<long>(context_len);
  row.token_ids.assign(token_ids.begin() + begin, token_ids.begin() + end);
  row.type_ids.assign(type_ids.begin() + begin, type_ids.begin() + end);
  row.position_ids.assign(position_ids.begin() + begin, position_ids.begin() + end);
  for (auto it = context_padding.begin() + begin; it != context_padding.begin() + end; ++it)
    row.padding.push_back(*it != 0);
  return row;
}

std::vector<int> EncodedBatch::keyword_target(std::size_t b) const {
  if (b >= batch_size) throw ShapeError("batch row out of range");
  auto begin = keyword_targets.begin() + static_cast<long>(b * keyword_len);
  return {begin, begin + static_cast<long>(keyword_lengths[b])};
}

std::vector<int> EncodedBatch::response_target(std::size_t b) const {
  if (b >= batch_size) throw ShapeError("batch row out of range");
  auto begin = response_targets.begin() + static_cast<long>(b * response_len);
  return {begin, begin + static_cast<long>(response_lengths[b])};
}

std::size_t EncodedBatch::real_tokens() const {
  std::size_t n = 0;
  for (std::size_t r = 0; r < batch_size; ++r)
    n += context_lengths[r] + keyword_lengths[r] + response_lengths[r];
  return n;
}

}  // namespace kwseq
