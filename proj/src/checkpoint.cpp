#include "kwseq/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

namespace kwseq {

namespace {

constexpr char kMagic[8] = {'K', 'W', 'S', 'Q', 'T', 'N', 'S', 'R'};

template <class T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, std::string source) : data_(data), source_(std::move(source)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw IoError(source_ + ": truncated tensor container");
  }

  const std::string& data_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kTensorFileVersion);
  put<std::uint64_t>(out, tensors.size());
  for (const NamedTensor& t : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    const Shape& shape = t.tensor.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) put<std::uint64_t>(out, d);
    for (double v : t.tensor.values()) put<double>(out, v);
  }
  write_file_atomic(path, out);
}

std::vector<NamedTensor> load_tensors(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  Reader in(data, path.string());
  if (in.bytes(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw IoError(path.string() + ": not a tensor container");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kTensorFileVersion) {
    throw IoError(path.string() + ": unsupported container version " + std::to_string(version));
  }
  const auto count = in.get<std::uint64_t>();
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = in.bytes(in.get<std::uint32_t>());
    const auto rank = in.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>());
    std::vector<double> values(numel(shape));
    for (double& v : values) v = in.get<double>();
    t.tensor = Tensor(std::move(shape), std::move(values));
    out.push_back(std::move(t));
  }
  if (!in.done()) throw IoError(path.string() + ": trailing bytes after tensor container");
  return out;
}

void assign_tensors(const std::vector<NamedTensor>& stored,
                    const std::vector<NamedTensor>& targets) {
  std::map<std::string, const Tensor*> by_name;
  for (const NamedTensor& t : stored) by_name[t.name] = &t.tensor;
  for (const NamedTensor& target : targets) {
    auto it = by_name.find(target.name);
    if (it == by_name.end()) throw IoError("checkpoint lacks parameter " + target.name);
    if (it->second->shape() != target.tensor.shape()) {
      throw ShapeError("checkpoint parameter " + target.name + " has shape " +
                       shape_string(it->second->shape()) + ", model expects " +
                       shape_string(target.tensor.shape()));
    }
    Tensor dst = target.tensor;
    auto out = dst.mutable_values();
    auto src = it->second->values();
    std::copy(src.begin(), src.end(), out.begin());
  }
  if (by_name.size() != targets.size()) {
    throw IoError("checkpoint holds " + std::to_string(by_name.size()) +
                  " parameters, model has " + std::to_string(targets.size()));
  }
}

}  // namespace kwseq
