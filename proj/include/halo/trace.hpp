#pragma once

// Workflow traces: one gzip-compressed JSON document per run (`.halo.json.gz`).

#include <unistd.h>
#include <zlib.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "halo/error.hpp"

namespace halo {

inline constexpr const char* kTraceSchemaVersion = "1.0";
inline constexpr const char* kTraceExtension = ".halo.json.gz";

/// Fixed gzip output: default compression, header mtime 0, no file name.
inline std::string gzip_compress(std::string_view data) {
  z_stream zs{};
  if (deflateInit2(&zs, Z_DEFAULT_COMPRESSION, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw Error(Errc::TraceParse, "deflateInit2 failed");
  }
  gz_header header{};
  header.os = 255;
  deflateSetHeader(&zs, &header);
  std::string out;
  out.resize(deflateBound(&zs, static_cast<uLong>(data.size())) + 32);
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  zs.next_out = reinterpret_cast<Bytef*>(out.data());
  zs.avail_out = static_cast<uInt>(out.size());
  int rc = deflate(&zs, Z_FINISH);
  out.resize(zs.total_out);
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error(Errc::TraceParse, "gzip compression did not finish");
  return out;
}

/// Inflates a gzip stream. A damaged or cut-off stream names the input byte where it stopped.
inline std::string gzip_decompress(std::string_view data) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw Error(Errc::TraceParse, "inflateInit2 failed");
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(data.data()));
  zs.avail_in = static_cast<uInt>(data.size());
  std::string out;
  char chunk[16384];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(chunk);
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    out.append(chunk, sizeof chunk - zs.avail_out);
    if (rc == Z_STREAM_END) break;
    if (rc == Z_OK && zs.avail_in > 0) continue;
    if (rc == Z_OK && zs.avail_out == 0) continue;
    auto offset = zs.total_in;
    std::string why = rc == Z_OK || rc == Z_BUF_ERROR ? "compressed stream is truncated"
                                                      : (zs.msg ? zs.msg : "corrupt compressed stream");
    inflateEnd(&zs);
    throw Error(Errc::TraceParse, why + " at byte " + std::to_string(offset));
  }
  inflateEnd(&zs);
  return out;
}

/// Writes to a sibling temporary file, then renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::TraceParse, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(Errc::TraceParse, "short write to " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::TraceParse, "cannot move trace into place at " + path.string());
  }
}

inline std::string encode_trace(const nlohmann::json& trace) { return gzip_compress(trace.dump()); }

inline void write_trace(const std::filesystem::path& path, const nlohmann::json& trace) {
  write_file_atomic(path, encode_trace(trace));
}

/// Parses trace bytes (gzip or plain JSON) and checks the schema major version.
inline nlohmann::json decode_trace(std::string_view bytes) {
  const bool gz = bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0x1f &&
                  static_cast<unsigned char>(bytes[1]) == 0x8b;
  const std::string text = gz ? gzip_decompress(bytes) : std::string(bytes);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::TraceParse, "trace JSON is malformed at byte " + std::to_string(e.byte) +
                                      (gz ? " of the decompressed document" : ""));
  }
  if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_string()) {
    throw Error(Errc::TraceParse, "trace has no schema_version");
  }
  auto version = j["schema_version"].get<std::string>();
  if (version.substr(0, version.find('.')) != "1") {
    throw Error(Errc::TraceParse, "unsupported trace schema version " + version);
  }
  return j;
}

inline nlohmann::json read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::TraceParse, "cannot open trace " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_trace(ss.str());
}

inline std::string new_run_id() {
  std::random_device rd;
  std::uniform_int_distribution<int> hex(0, 15);
  std::string id;
  for (int i = 0; i < 16; ++i) id.push_back("0123456789abcdef"[hex(rd)]);
  return id;
}

inline std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Drops the per-run identity fields so traces of identical runs compare equal.
inline nlohmann::json strip_run_identity(nlohmann::json trace) {
  trace.erase("run_id");
  trace.erase("created_at");
  if (trace.contains("outcome") && trace["outcome"].is_object()) trace["outcome"].erase("trace_ref");
  return trace;
}

}  // namespace halo
