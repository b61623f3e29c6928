#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ynet/nn/blocks.hpp"

namespace ynet::model {

enum class Sharing { none, add, concat };

Sharing parse_sharing(std::string_view name);
std::string_view sharing_name(Sharing s);

struct NetworkConfig {
  std::size_t w = 128;
  std::size_t d = 5;
  nn::BlockKind encoder = nn::BlockKind::esp;
  nn::BlockKind decoder = nn::BlockKind::psp;
  Sharing sharing = Sharing::concat;
  std::size_t tissue_classes = 8;
  std::size_t diagnostic_classes = 4;

  // Throws ConfigError with a hint. Covers the classification head too, so a
  // valid config can always be extended to joint mode.
  void validate() const;

  nlohmann::ordered_json to_json() const;
  // Reads the network keys (w, d, encoder_block, decoder_block,
  // feature_sharing, tissue_classes, diagnostic_classes) and ignores the rest;
  // missing keys keep their defaults. Validates the result.
  static NetworkConfig from_json(const nlohmann::json& j);
};

}  // namespace ynet::model
