#include "fdp/app/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fdp::app {
namespace {

constexpr std::uint8_t kDtypeF32 = 1;

class Writer {
 public:
  template <class U>
  void put(U v) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_string32(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void put_f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }

  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end, const std::string& origin)
      : b_(b), end_(end), origin_(origin) {}

  template <class U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }
  std::string get_string(std::uint64_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<long>(pos_), b_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::size_t pos() const noexcept { return pos_; }

  [[noreturn]] void fail(const std::string& msg) const { throw DataError(origin_ + ": " + msg); }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) fail("checkpoint truncated");
  }
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

template <class Set, class Fn>
void for_each_tensor(Set& ps, Fn&& fn) {
  for (auto& p : ps.parameters()) fn(p.name, p.value);
  for (auto& b : ps.buffers()) fn(b.name, b.value);
}

}  // namespace

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const RunConfig& cfg, const std::vector<std::string>& classes,
                                            const model::FdpModel<float>& model) {
  Writer w;
  w.out = {'F', 'D', 'P', '1'};
  w.put(kCheckpointVersion);
  const std::string text = to_text(cfg);
  w.put(static_cast<std::uint64_t>(text.size()));
  w.out.insert(w.out.end(), text.begin(), text.end());
  w.put(static_cast<std::uint32_t>(classes.size()));
  for (const auto& c : classes) w.put_string32(c);
  const auto& ps = model.params();
  w.put(static_cast<std::uint32_t>(ps.parameters().size() + ps.buffers().size()));
  for_each_tensor(ps, [&](const std::string& name, const num::Tensor<float>& t) {
    w.put_string32(name);
    w.put(kDtypeF32);
    w.put(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.dims()) w.put(static_cast<std::uint64_t>(d));
    for (float v : t.data()) w.put_f32(v);
  });
  w.put(fnv1a(w.out.data(), w.out.size()));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "FDP1", 4) != 0) {
    throw DataError(origin + ": not a checkpoint (bad magic)");
  }
  const std::size_t body = bytes.size() - 8;
  {
    Reader tail(bytes, bytes.size(), origin);
    std::uint64_t stored = 0;
    for (std::size_t i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
    if (stored != fnv1a(bytes.data(), body)) tail.fail("checkpoint checksum mismatch");
  }
  Reader r(bytes, body, origin);
  r.get_string(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  const auto text_len = r.get<std::uint64_t>();
  ck.config = parse_config(r.get_string(text_len), origin + " (config)");
  const auto n_classes = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_classes; ++i) ck.classes.push_back(r.get_string(r.get<std::uint32_t>()));
  if (ck.classes.size() < 2) r.fail("checkpoint needs at least 2 classes");

  ck.model = std::make_unique<model::FdpModel<float>>(ck.config.model(ck.classes.size()), ck.config.seed);
  auto& ps = ck.model->params();
  const auto n_tensors = r.get<std::uint32_t>();
  if (n_tensors != ps.parameters().size() + ps.buffers().size()) {
    r.fail("checkpoint holds " + std::to_string(n_tensors) + " tensors, model expects " +
           std::to_string(ps.parameters().size() + ps.buffers().size()));
  }
  for_each_tensor(ps, [&](const std::string& name, num::Tensor<float>& t) {
    const auto stored_name = r.get_string(r.get<std::uint32_t>());
    if (stored_name != name) r.fail("expected tensor '" + name + "', found '" + stored_name + "'");
    if (r.get<std::uint8_t>() != kDtypeF32) r.fail("tensor '" + name + "' has an unsupported dtype");
    const auto rank = r.get<std::uint32_t>();
    num::Shape dims(rank);
    for (auto& d : dims) d = static_cast<std::size_t>(r.get<std::uint64_t>());
    if (dims != t.dims()) r.fail("tensor '" + name + "' has dims " + num::shape_string(dims));
    for (auto& v : t.data()) v = r.get_f32();
  });
  if (r.pos() != body) r.fail("trailing bytes after the last tensor");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const std::vector<std::string>& classes,
                     const model::FdpModel<float>& model) {
  const auto bytes = encode_checkpoint(cfg, classes, model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace fdp::app
