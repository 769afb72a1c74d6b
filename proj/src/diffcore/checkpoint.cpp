#include "fmtk/diffcore/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "fmtk/common/error.hpp"
#include "fmtk/common/io_util.hpp"

namespace fmtk {

namespace {

constexpr char kMagic[4] = {'F', 'M', 'T', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double d) {
  const uint64_t v = std::bit_cast<uint64_t>(d);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  bool eof() const { return pos_ == buf_.size(); }

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<std::size_t>(i)])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string bytes(std::size_t len) {
    need(len);
    std::string s = buf_.substr(pos_, len);
    pos_ += len;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw DataError(fmt::format("truncated checkpoint '{}'", path_));
  }
  const std::string& buf_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<uint32_t>(t->rank()));
    for (int d : t->shape()) put_u32(out, static_cast<uint32_t>(d));
    for (double v : t->values()) put_f64(out, v);
  }
  write_file_atomic(path, out);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 8 || std::memcmp(buf.data(), kMagic, 4) != 0) {
    throw DataError(fmt::format("'{}' is not a FMTK checkpoint", path));
  }
  Reader r(buf, path);
  r.bytes(4);  // magic
  const uint32_t version = r.u32();
  if (version != kVersion) throw DataError(fmt::format("unsupported checkpoint version {} in '{}'", version, path));
  std::map<std::string, Tensor> out;
  while (!r.eof()) {
    const uint32_t name_len = r.u32();
    if (name_len > 4096) throw DataError(fmt::format("implausible tensor name length in '{}'", path));
    const std::string name = r.bytes(name_len);
    const uint32_t rank = r.u32();
    if (rank > 8) throw DataError(fmt::format("implausible tensor rank {} in '{}'", rank, path));
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    const int64_t n = shape_numel(shape);
    std::vector<double> values(static_cast<std::size_t>(n));
    for (auto& v : values) v = r.f64();
    if (!out.emplace(name, Tensor(std::move(shape), std::move(values))).second) {
      throw DataError(fmt::format("duplicate tensor '{}' in '{}'", name, path));
    }
  }
  return out;
}

}  // namespace fmtk
