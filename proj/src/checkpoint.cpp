#include "awrs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <span>

#include "awrs/error.hpp"

namespace awrs {

namespace {

constexpr char kMagic[8] = {'A', 'W', 'R', 'S', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot write checkpoint " + path.string());
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw Error("failed writing checkpoint " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  Reader(const std::filesystem::path& path) : path_(path.string()), in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open checkpoint " + path_);
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) fail("truncated file");
    offset_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  std::string str(std::uint64_t limit) {
    const auto n = u64();
    if (n > limit) fail("string length " + std::to_string(n) + " is implausible");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  [[noreturn]] void fail(const std::string& what) const {
    // Line numbers are meaningless here; report the byte offset instead.
    throw ParseError(path_, 0, what + " at byte " + std::to_string(offset_));
  }

 private:
  std::string path_;
  std::ifstream in_;
  std::size_t offset_ = 0;
};

}  // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

template <typename Real>
void save_checkpoint(const std::filesystem::path& path, const ad::ParameterStore<Real>& store,
                     const std::string& meta) {
  Writer w(path);
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kCheckpointVersion);
  w.str(meta);
  const auto params = store.all();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.str(p->name());
    w.u64(p->shape().rows);
    w.u64(p->shape().cols);
    w.u32(sizeof(Real));
    w.bytes(p->value().data.data(), p->value().data.size() * sizeof(Real));
  }
  w.finish(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(path);
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof magic) != 0) r.fail("not an AWRS checkpoint");
  Checkpoint ck;
  ck.version = r.u32();
  if (ck.version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(ck.version));
  }
  ck.meta = r.str(1u << 24);
  const auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointTensor t;
    t.name = r.str(4096);
    t.rows = r.u64();
    t.cols = r.u64();
    const auto width = r.u32();
    if (width != 4 && width != 8) r.fail("bad element width " + std::to_string(width));
    if (t.cols != 0 && t.rows > (std::uint64_t{1} << 34) / t.cols) r.fail("tensor too large");
    t.element_bytes = static_cast<std::uint8_t>(width);
    const auto n = t.rows * t.cols;
    t.values.resize(n);
    if (width == 8) {
      r.bytes(t.values.data(), n * 8);
    } else {
      std::vector<float> tmp(n);
      r.bytes(tmp.data(), n * 4);
      std::copy(tmp.begin(), tmp.end(), t.values.begin());
    }
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <typename Real>
void load_parameters(const Checkpoint& checkpoint, ad::ParameterStore<Real>& store) {
  for (auto* p : store.all()) {
    const auto* t = checkpoint.find(p->name());
    if (t == nullptr) throw Error("checkpoint has no tensor " + p->name());
    if (t->rows != p->shape().rows || t->cols != p->shape().cols) {
      throw Error("checkpoint tensor " + p->name() + " is " + std::to_string(t->rows) + "x" +
                  std::to_string(t->cols) + ", model expects " + ad::to_string(p->shape()));
    }
    auto& data = p->value().data;
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<Real>(t->values[i]);
  }
}

template void save_checkpoint<float>(const std::filesystem::path&, const ad::ParameterStore<float>&,
                                     const std::string&);
template void save_checkpoint<double>(const std::filesystem::path&,
                                      const ad::ParameterStore<double>&, const std::string&);
template void load_parameters<float>(const Checkpoint&, ad::ParameterStore<float>&);
template void load_parameters<double>(const Checkpoint&, ad::ParameterStore<double>&);

}  // namespace awrs
