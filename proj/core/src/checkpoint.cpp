#include "atb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "atb/error.hpp"
#include "atb/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian float32");

namespace atb {

using nlohmann::json;

std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const ParamMap& tensors) {
  // Payload first so its hash can go into the header.
  std::vector<float> payload;
  payload.reserve(total_elements(tensors));
  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    const std::uint64_t bytes = t.size() * sizeof(float);
    entry["length"] = bytes;
    dir.push_back(entry);
    for (double v : t.data()) payload.push_back(static_cast<float>(v));
    offset += bytes;
  }
  const std::uint64_t payload_hash =
      fnv1a64(payload.data(), payload.size() * sizeof(float));

  json header;
  header["kind"] = meta.kind;
  header["config"] = meta.config_json.empty() ? json::object() : json::parse(meta.config_json);
  if (!meta.run_config_json.empty()) {
    header["run_config"] = json::parse(meta.run_config_json);
  }
  header["tensors"] = dir;
  header["payload_hash"] = hash_hex(payload_hash);
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write("ATBT", 4);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw IoError("short write while saving checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "ATBT", 4) != 0) {
    throw IoError("not an ATBT checkpoint: " + path);
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version in " + path);
  }
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw IoError("truncated checkpoint header: " + path);

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw IoError("corrupt checkpoint header in " + path + ": " + e.what());
  }

  std::vector<char> payload((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
  const std::uint64_t payload_hash = fnv1a64(payload.data(), payload.size());
  const std::string stored = header.value("payload_hash", "");
  if (hash_hex(payload_hash) != stored) {
    throw IoError("checkpoint payload hash mismatch in " + path + " (stored " + stored +
                  ", computed " + hash_hex(payload_hash) + ")");
  }

  LoadedCheckpoint ck;
  ck.payload_hash = payload_hash;
  ck.meta.kind = header.value("kind", "");
  ck.meta.config_json = header.contains("config") ? header["config"].dump() : "";
  ck.meta.run_config_json = header.contains("run_config") ? header["run_config"].dump() : "";

  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto length = entry.at("length").get<std::uint64_t>();
    if (offset + length > payload.size()) {
      throw IoError("checkpoint tensor " + name + " overruns payload in " + path);
    }
    Tensor t((shape));
    if (t.size() * sizeof(float) != length) {
      throw IoError("checkpoint tensor " + name + " length mismatch in " + path);
    }
    const auto* f = reinterpret_cast<const float*>(payload.data() + offset);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(f[i]);
    ck.tensors.emplace(name, std::move(t));
  }
  return ck;
}

std::uint64_t file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    if (got > 0) h = fnv1a64(buf, static_cast<std::size_t>(got), h);
  }
  return h;
}

}  // namespace atb
