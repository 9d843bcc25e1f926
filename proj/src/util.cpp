#include "dcnav/util.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include "dcnav/error.hpp"
#include "dcnav/rng.hpp"

namespace dcnav {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return buf.str();
}

void atomic_write_file(const std::string& path, const std::string& contents) {
  fs::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) {
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + target.parent_path().string() +
                          ": " + ec.message());
  }
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("rename failed for " + path + ": " + ec.message());
  }
}

std::string file_hash_hex(const std::string& path) {
  std::string bytes = read_file(path);
  uint64_t h = fnv1a64(bytes.data(), bytes.size());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf, 16);
}

void parallel_for(size_t n, unsigned threads,
                  const std::function<void(size_t)>& body) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    for (size_t i = 0; i < n; ++i) body(i);
    return;
  }
  unsigned workers = std::min<unsigned>(threads, static_cast<unsigned>(n));
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex err_mu;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          body(i);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!failed.exchange(true)) first_error = e.what();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failed.load()) throw Error("parallel_for worker failed: " + first_error);
}

namespace {
constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}  // namespace

std::string base64_encode(const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (size_t i = 0; i < n; i += 3) {
    uint32_t chunk = static_cast<uint32_t>(p[i]) << 16;
    if (i + 1 < n) chunk |= static_cast<uint32_t>(p[i + 1]) << 8;
    if (i + 2 < n) chunk |= p[i + 2];
    out.push_back(kB64Alphabet[(chunk >> 18) & 0x3f]);
    out.push_back(kB64Alphabet[(chunk >> 12) & 0x3f]);
    out.push_back(i + 1 < n ? kB64Alphabet[(chunk >> 6) & 0x3f] : '=');
    out.push_back(i + 2 < n ? kB64Alphabet[chunk & 0x3f] : '=');
  }
  return out;
}

std::string base64_decode(const std::string& s) {
  if (s.size() % 4 != 0) throw ParseError("base64: length not a multiple of 4");
  static const auto inverse = [] {
    std::array<int8_t, 256> inv;
    inv.fill(-1);
    for (int i = 0; i < 64; ++i) inv[static_cast<unsigned char>(kB64Alphabet[i])] = i;
    return inv;
  }();
  std::string out;
  out.reserve(s.size() / 4 * 3);
  for (size_t i = 0; i < s.size(); i += 4) {
    int pad = 0;
    uint32_t chunk = 0;
    for (size_t k = 0; k < 4; ++k) {
      char c = s[i + k];
      if (c == '=') {
        if (i + 4 != s.size() || k < 2) throw ParseError("base64: bad padding");
        ++pad;
        chunk <<= 6;
        continue;
      }
      if (pad > 0) throw ParseError("base64: data after padding");
      int8_t v = inverse[static_cast<unsigned char>(c)];
      if (v < 0) throw ParseError("base64: invalid character");
      chunk = (chunk << 6) | static_cast<uint32_t>(v);
    }
    out.push_back(static_cast<char>((chunk >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((chunk >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(chunk & 0xff));
  }
  return out;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::now();
  std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return std::string(buf);
}

}  // namespace dcnav
