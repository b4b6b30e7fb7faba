#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "mcfuse/nn/params.hpp"

// Checkpoint container: little-endian binary file holding named f64 arrays.
//
//   magic "MCFK" | u32 version | u64 config_hash | u64 count
//   per array: u32 name_len | name bytes | u64 rows | u64 cols
//              | rows*cols f64 (column-major)
//
// Loading into a ParamStore validates that the file carries exactly the
// store's parameter names with matching shapes.

namespace mcfuse::nn {

namespace ckpt_detail {

constexpr char kMagic[4] = {'M', 'C', 'F', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint: " + path);
  return v;
}

}  // namespace ckpt_detail

inline void save_arrays(const std::string& path,
                        const std::vector<std::pair<std::string, Mat>>& arrays,
                        std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(ckpt_detail::kMagic, 4);
  ckpt_detail::write_pod(out, ckpt_detail::kVersion);
  ckpt_detail::write_pod(out, config_hash);
  ckpt_detail::write_pod(out, static_cast<std::uint64_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    ckpt_detail::write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    ckpt_detail::write_pod(out, static_cast<std::uint64_t>(m.rows()));
    ckpt_detail::write_pod(out, static_cast<std::uint64_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  }
  if (!out) throw IoError("write failed: " + path);
}

struct LoadedArrays {
  std::uint64_t config_hash = 0;
  std::vector<std::pair<std::string, Mat>> arrays;
};

inline LoadedArrays load_arrays(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, ckpt_detail::kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  const auto version = ckpt_detail::read_pod<std::uint32_t>(in, path);
  if (version != ckpt_detail::kVersion)
    throw IoError("unsupported checkpoint version in " + path);
  LoadedArrays out;
  out.config_hash = ckpt_detail::read_pod<std::uint64_t>(in, path);
  const auto count = ckpt_detail::read_pod<std::uint64_t>(in, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = ckpt_detail::read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = ckpt_detail::read_pod<std::uint64_t>(in, path);
    const auto cols = ckpt_detail::read_pod<std::uint64_t>(in, path);
    Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    if (!in) throw IoError("truncated checkpoint: " + path);
    out.arrays.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

inline void save_checkpoint(const std::string& path, const ParamStore& store,
                            std::uint64_t config_hash) {
  std::vector<std::pair<std::string, Mat>> arrays;
  arrays.reserve(store.names().size());
  for (const std::string& name : store.names())
    arrays.emplace_back(name, store.value(name));
  save_arrays(path, arrays, config_hash);
}

// Returns the embedded config hash. The store must already hold the expected
// names and shapes (i.e., be freshly constructed from the model config).
inline std::uint64_t load_checkpoint(const std::string& path,
                                     ParamStore& store) {
  LoadedArrays loaded = load_arrays(path);
  std::size_t matched = 0;
  for (auto& [name, m] : loaded.arrays) {
    if (!store.has(name))
      throw IoError("checkpoint " + path + " carries unknown array '" + name +
                    "'");
    Mat& dst = store.value(name);
    if (dst.rows() != m.rows() || dst.cols() != m.cols())
      throw ShapeError("checkpoint " + path + " shape mismatch for '" + name +
                       "'");
    dst = std::move(m);
    ++matched;
  }
  if (matched != store.names().size())
    throw IoError("checkpoint " + path + " is missing arrays (" +
                  std::to_string(matched) + " of " +
                  std::to_string(store.names().size()) + ")");
  return loaded.config_hash;
}

}  // namespace mcfuse::nn
