#include "dcnav/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "dcnav/error.hpp"
#include "dcnav/util.hpp"

namespace dcnav {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(double) == 8);

namespace {

constexpr char kMagic[4] = {'D', 'C', 'N', 'V'};

void put_u32(std::string& out, uint32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_u64(std::string& out, uint64_t v) {
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

class Reader {
 public:
  Reader(std::string bytes, std::string path)
      : bytes_(std::move(bytes)), path_(std::move(path)) {}

  uint32_t u32() {
    uint32_t v;
    take(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    take(&v, 8);
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void doubles(double* dst, size_t n) { take(dst, n * 8); }
  bool exhausted() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(path_ + ": " + what);
  }

 private:
  void need(size_t n) const {
    if (pos_ + n > bytes_.size()) fail("truncated checkpoint");
  }
  void take(void* dst, size_t n) {
    need(n);
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::string bytes_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& params) {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<uint32_t>(params.size()));
  for (const auto& [name, var] : params.entries()) {
    put_u32(out, static_cast<uint32_t>(name.size()));
    out.append(name);
    const Tensor& t = var.value();
    put_u32(out, static_cast<uint32_t>(t.rank()));
    for (size_t d = 0; d < t.rank(); ++d) put_u64(out, t.dim(d));
    out.append(reinterpret_cast<const char*>(t.data()), t.numel() * 8);
  }
  atomic_write_file(path, out);
}

std::map<std::string, Tensor> read_checkpoint(const std::string& path) {
  Reader r(read_file(path), path);
  if (r.str(4) != std::string(kMagic, 4)) r.fail("bad magic (not a checkpoint)");
  uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    std::ostringstream os;
    os << "unsupported checkpoint version " << version;
    r.fail(os.str());
  }
  uint32_t count = r.u32();
  std::map<std::string, Tensor> out;
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    if (name.empty()) r.fail("empty parameter name");
    uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) r.fail("implausible rank for parameter " + name);
    std::vector<size_t> shape(rank);
    size_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      uint64_t dim = r.u64();
      if (dim == 0 || dim > (1ull << 32)) r.fail("implausible dim for " + name);
      shape[d] = static_cast<size_t>(dim);
      numel *= shape[d];
    }
    std::vector<double> data(numel);
    r.doubles(data.data(), numel);
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      r.fail("duplicate parameter " + name);
    }
  }
  if (!r.exhausted()) r.fail("trailing bytes after last parameter");
  return out;
}

void load_checkpoint(const std::string& path, ParamStore& params) {
  auto loaded = read_checkpoint(path);
  if (loaded.size() != params.size()) {
    std::ostringstream os;
    os << path << ": checkpoint has " << loaded.size() << " parameters, model has "
       << params.size();
    throw ParseError(os.str());
  }
  for (const auto& [name, var] : params.entries()) {
    auto it = loaded.find(name);
    if (it == loaded.end()) {
      throw ParseError(path + ": checkpoint missing parameter " + name);
    }
    if (!var.value().same_shape(it->second)) {
      throw ParseError(path + ": shape mismatch for " + name + ": model " +
                       var.value().shape_str() + " vs checkpoint " +
                       it->second.shape_str());
    }
    const_cast<ag::Variable&>(var).mutable_value() = it->second;
  }
}

}  // namespace dcnav
