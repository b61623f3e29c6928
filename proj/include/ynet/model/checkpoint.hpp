#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ynet/nn/module.hpp"

// Binary container (all integers little-endian):
//   "YNET" | u32 version | u64 count |
//   count x { u16 name_len | name | u8 dtype (0=f32, 1=f64) | u8 rank | rank x u64 dim | payload } |
//   u64 json_len | json (UTF-8 config)
namespace ynet::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  std::uint8_t dtype = 0;
  Shape shape;
  std::vector<double> values;  // widened; f32 round-trips exactly
};

struct Checkpoint {
  std::vector<StoredTensor> tensors;
  nlohmann::json config;
};

template <typename T>
std::string serialize_checkpoint(const std::vector<nn::NamedTensor<T>>& state, const nlohmann::ordered_json& config);

Checkpoint parse_checkpoint(const std::string& bytes);

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::Module<T>& module,
                     const nlohmann::ordered_json& config);

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies stored values into the module's parameters and buffers. Every
// state entry must be present with the same shape (DataError otherwise).
template <typename T>
void apply_checkpoint(nn::Module<T>& module, const Checkpoint& ckpt);

}  // namespace ynet::model
