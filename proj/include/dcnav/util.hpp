#pragma once

#include <cstdint>
#include <functional>
#include <string>

namespace dcnav {

// Reads a whole file as bytes; throws IoError on failure.
std::string read_file(const std::string& path);

// Writes via a temp file in the same directory + rename, so a crash never
// leaves a half-written file at `path`. Creates parent directories.
void atomic_write_file(const std::string& path, const std::string& contents);

// FNV-1a 64 of the file's bytes, hex-encoded (16 lowercase chars).
std::string file_hash_hex(const std::string& path);

// Standard base64 (RFC 4648, with padding).
std::string base64_encode(const void* data, size_t n);
std::string base64_decode(const std::string& s);  // throws ParseError on bad input

// Runs body(i) for i in [0, n) on up to `threads` workers. threads <= 1 runs
// inline. Work is split into contiguous chunks; body must be thread-safe
// across distinct i.
void parallel_for(size_t n, unsigned threads, const std::function<void(size_t)>& body);

// ISO-8601 UTC timestamp, seconds resolution.
std::string utc_timestamp();

}  // namespace dcnav
