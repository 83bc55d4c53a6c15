#pragma once

// NVSC checkpoints: "NVSC", u32 version, u32 count, then per tensor
// u16 name length, name bytes, u8 rank, rank x u64 dims, float32 LE data.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nvs/blocks.hpp"

namespace nvs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  Shape shape;
  std::vector<float> data;
};

using TensorTable = std::map<std::string, StoredTensor>;

/// Written to `path.tmp` then renamed, so readers never see a half file.
void save_checkpoint(const std::string& path, const TensorTable& table);
/// Parses the whole file before returning; throws IoError naming the byte offset.
TensorTable load_checkpoint(const std::string& path);
TensorTable parse_checkpoint(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> serialize_checkpoint(const TensorTable& table);

template <typename T>
void store_params(TensorTable& table, const ParamStore<T>& ps);
/// Copies stored values into every parameter of `ps`; missing or misshapen entries throw.
template <typename T>
void restore_params(const TensorTable& table, ParamStore<T>& ps);

void put_scalar(TensorTable& table, const std::string& name, double value);
double get_scalar(const TensorTable& table, const std::string& name);
/// Text stored as one float per byte.
void put_text(TensorTable& table, const std::string& name, const std::string& text);
std::string get_text(const TensorTable& table, const std::string& name);

}  // namespace nvs
