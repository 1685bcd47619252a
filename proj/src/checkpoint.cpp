#include "ncanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ncanet/errors.hpp"

namespace ncanet {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'N', 'C', 'A', 'N'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) u64(t.dim(i));
    for (float v : t.vec()) f32(v);
  }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string origin) : data_(std::move(data)), origin_(std::move(origin)) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() { return raw(u32()); }
  Tensor<float> tensor_body() {
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > Shape::kMaxRank) fail("bad tensor rank " + std::to_string(rank));
    std::vector<std::size_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = u64();
      if (d != 0 && n > (std::size_t(1) << 40) / d) fail("tensor too large");
      n *= d;
    }
    need(n * 4);
    std::vector<float> v(n);
    for (auto& x : v) x = std::bit_cast<float>(u32());
    Shape s = rank == 1   ? Shape{dims[0]}
              : rank == 2 ? Shape{dims[0], dims[1]}
              : rank == 3 ? Shape{dims[0], dims[1], dims[2]}
                          : Shape{dims[0], dims[1], dims[2], dims[3]};
    return Tensor<float>(s, std::move(v));
  }
  bool done() const { return pos_ == data_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw IoError("checkpoint " + origin_ + ": " + what + " at byte " + std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) fail("truncated");
  }
  std::string data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  auto params = flatten_params<Tensor<float>>(ckpt.model.rblock);
  const bool with_adam = !ckpt.adam.m.empty();
  if (with_adam && (ckpt.adam.m.size() != params.size() || ckpt.adam.v.size() != params.size()))
    throw std::invalid_argument("save_checkpoint: optimizer state does not match the model");

  Writer w;
  w.bytes(std::string(kMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size() * (with_adam ? 3 : 1)));
  for (const auto& [name, t] : params) w.tensor(name, *t);
  if (with_adam) {
    for (std::size_t i = 0; i < params.size(); ++i) w.tensor("adam.m." + params[i].first, ckpt.adam.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) w.tensor("adam.v." + params[i].first, ckpt.adam.v[i]);
  }
  std::ostringstream cfg;
  for (const auto& [k, v] : to_key_values(ckpt.config)) cfg << k << '=' << v << '\n';
  cfg << "epoch=" << ckpt.epoch << '\n' << "adam_step=" << ckpt.adam.step << '\n';
  w.str(cfg.str());

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 8 || std::memcmp(data.data(), kMagic, 4) != 0)
    throw VersionError(path.string() + " is not an NCANet checkpoint (bad magic)");
  Reader r(std::move(data), path.string());
  r.raw(4);
  if (const std::uint32_t version = r.u32(); version != kCheckpointVersion)
    throw VersionError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));

  std::map<std::string, Tensor<float>> entries;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    Tensor<float> t = r.tensor_body();
    if (!entries.emplace(name, std::move(t)).second) r.fail("duplicate tensor " + name);
  }
  const std::string cfg_text = r.str();
  if (!r.done()) r.fail("trailing bytes");

  Checkpoint ckpt;
  std::istringstream lines(cfg_text);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) r.fail("malformed config line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    try {
      if (key == "epoch")
        ckpt.epoch = std::stoull(value);
      else if (key == "adam_step")
        ckpt.adam.step = std::stoull(value);
      else
        apply_key_value(ckpt.config, key, value);
    } catch (const std::exception& e) {
      r.fail(std::string("bad config entry: ") + e.what());
    }
  }

  ckpt.model = initial_model(ckpt.config);
  auto params = flatten_params<Tensor<float>>(ckpt.model.rblock);
  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = entries.find(name);
    if (it == entries.end()) throw IoError("checkpoint " + path.string() + " lacks tensor " + name);
    if (!(it->second.shape() == shape))
      throw IoError("checkpoint tensor " + name + " has shape " + it->second.shape().str() + ", model expects " +
                    shape.str());
    Tensor<float> t = std::move(it->second);
    entries.erase(it);
    return t;
  };
  for (auto& [name, t] : params) *t = take(name, t->shape());
  if (!entries.empty() && entries.count("adam.m." + params.front().first)) {
    for (auto& [name, t] : params) ckpt.adam.m.push_back(take("adam.m." + name, t->shape()));
    for (auto& [name, t] : params) ckpt.adam.v.push_back(take("adam.v." + name, t->shape()));
  }
  if (!entries.empty())
    throw IoError("checkpoint " + path.string() + " has unexpected tensor " + entries.begin()->first);
  return ckpt;
}

}  // namespace ncanet
