#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "matrn/nn.hpp"

namespace matrn {

uint32_t crc32(const unsigned char* data, size_t len, uint32_t seed = 0);

namespace detail {

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw CheckpointError("truncated checkpoint");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

template <class T>
void write_scalar_le(std::vector<unsigned char>& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  // x86 hosts are little-endian; byte order is pinned by construction here
  out.insert(out.end(), b, b + sizeof(T));
}

}  // namespace detail

constexpr uint32_t kCheckpointVersion = 1;

/// Binary checkpoint: magic, version, config text, named parameter manifest,
/// little-endian float payload, CRC32 of the payload.
template <class T>
void save_checkpoint(const std::string& path, const ParamRegistry<T>& reg,
                     const std::string& config_text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write("MTRN", 4);
  detail::write_u32(f, kCheckpointVersion);
  detail::write_u32(f, static_cast<uint32_t>(config_text.size()));
  f.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  detail::write_u32(f, static_cast<uint32_t>(reg.items.size()));
  std::vector<unsigned char> payload;
  for (const auto& [name, t] : reg.items) {
    detail::write_u32(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(f, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) detail::write_u32(f, static_cast<uint32_t>(d));
    f.put(sizeof(T) == 4 ? 0 : 1);  // dtype tag
    for (int64_t i = 0; i < t.size(); ++i) detail::write_scalar_le(payload, (*t.data)[static_cast<size_t>(i)]);
  }
  f.write(reinterpret_cast<const char*>(payload.data()),
          static_cast<std::streamsize>(payload.size()));
  detail::write_u32(f, crc32(payload.data(), payload.size()));
  if (!f) throw IoError("short write to " + path);
}

struct CheckpointManifestEntry {
  std::string name;
  Shape shape;
  int dtype = 0;
};

template <class T>
struct LoadedCheckpoint {
  std::string config_text;
  std::vector<CheckpointManifestEntry> manifest;
  std::vector<std::vector<T>> values;
};

template <class T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::string(magic, 4) != "MTRN") throw CheckpointError(path + ": bad magic");
  const uint32_t version = detail::read_u32(f);
  if (version != kCheckpointVersion)
    throw CheckpointError(path + ": unsupported version " + std::to_string(version));
  const uint32_t cfg_len = detail::read_u32(f);
  std::string cfg_text(cfg_len, '\0');
  f.read(cfg_text.data(), cfg_len);
  if (!f) throw CheckpointError(path + ": truncated config block");
  const uint32_t n_params = detail::read_u32(f);
  LoadedCheckpoint<T> out;
  out.config_text = cfg_text;
  std::vector<int64_t> sizes;
  for (uint32_t i = 0; i < n_params; ++i) {
    const uint32_t name_len = detail::read_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t ndim = detail::read_u32(f);
    Shape s;
    int64_t numel = 1;
    for (uint32_t d = 0; d < ndim; ++d) {
      s.push_back(static_cast<int>(detail::read_u32(f)));
      numel *= s.back();
    }
    const int dtype = f.get();
    if (dtype != (sizeof(T) == 4 ? 0 : 1))
      throw CheckpointError(path + ": dtype mismatch for parameter " + name);
    out.manifest.push_back({name, s, dtype});
    sizes.push_back(numel);
  }
  int64_t total = 0;
  for (int64_t s : sizes) total += s;
  std::vector<unsigned char> payload(static_cast<size_t>(total) * sizeof(T));
  f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!f) throw CheckpointError(path + ": truncated payload");
  const uint32_t stored_crc = detail::read_u32(f);
  if (crc32(payload.data(), payload.size()) != stored_crc)
    throw CheckpointError(path + ": payload checksum mismatch");
  size_t off = 0;
  for (size_t i = 0; i < sizes.size(); ++i) {
    std::vector<T> vals(static_cast<size_t>(sizes[i]));
    std::memcpy(vals.data(), payload.data() + off, vals.size() * sizeof(T));
    off += vals.size() * sizeof(T);
    out.values.push_back(std::move(vals));
  }
  return out;
}

/// Copies checkpoint values into an existing registry; names and shapes must
/// match exactly.
template <class T>
void apply_checkpoint(const LoadedCheckpoint<T>& ckpt, ParamRegistry<T>& reg) {
  if (ckpt.manifest.size() != reg.items.size())
    throw CheckpointError("parameter count mismatch: checkpoint has " +
                          std::to_string(ckpt.manifest.size()) + ", model has " +
                          std::to_string(reg.items.size()));
  for (size_t i = 0; i < reg.items.size(); ++i) {
    auto& [name, t] = reg.items[i];
    const auto& entry = ckpt.manifest[i];
    if (entry.name != name)
      throw CheckpointError("parameter name mismatch at slot " + std::to_string(i) + ": '" +
                            entry.name + "' vs '" + name + "'");
    if (entry.shape != t.shape)
      throw CheckpointError("shape mismatch for " + name);
    std::copy(ckpt.values[i].begin(), ckpt.values[i].end(), t.data->begin());
  }
}

}  // namespace matrn
