#include "ynet/model/config.hpp"

namespace ynet::model {

Sharing parse_sharing(std::string_view name) {
  if (name == "none") return Sharing::none;
  if (name == "add") return Sharing::add;
  if (name == "concat") return Sharing::concat;
  throw ConfigError("unknown feature_sharing '" + std::string(name) + "' (expected none, add or concat)");
}

std::string_view sharing_name(Sharing s) {
  switch (s) {
    case Sharing::none:
      return "none";
    case Sharing::add:
      return "add";
    case Sharing::concat:
      return "concat";
  }
  return "?";
}

void NetworkConfig::validate() const {
  if (w < 2 || w % 2 != 0) {
    throw ConfigError("w=" + std::to_string(w) + " must be even and >= 2 (level 5 uses w/2 channels)");
  }
  if (d < 1) throw ConfigError("d must be >= 1");
  if (tissue_classes < 2) throw ConfigError("tissue_classes must be >= 2");
  if (diagnostic_classes < 2) throw ConfigError("diagnostic_classes must be >= 2");
  // Block widths: encoder w, 2w, w, w/2; decoder 2w, w, 16.
  if (encoder == nn::BlockKind::esp && w % 8 != 0) {
    throw ConfigError("esp encoder blocks need w divisible by 8 (level 5 blocks have w/2 channels split into 4 "
                      "branches); got w=" + std::to_string(w));
  }
  if (encoder == nn::BlockKind::psp && w % 8 != 0) {
    throw ConfigError("psp encoder blocks need w divisible by 8; got w=" + std::to_string(w));
  }
  if (decoder != nn::BlockKind::rcb && w % 4 != 0) {
    throw ConfigError(std::string(nn::block_kind_name(decoder)) + " decoder blocks need w divisible by 4; got w=" +
                      std::to_string(w));
  }
}

nlohmann::ordered_json NetworkConfig::to_json() const {
  nlohmann::ordered_json j;
  j["w"] = w;
  j["d"] = d;
  j["encoder_block"] = std::string(nn::block_kind_name(encoder));
  j["decoder_block"] = std::string(nn::block_kind_name(decoder));
  j["feature_sharing"] = std::string(sharing_name(sharing));
  j["tissue_classes"] = tissue_classes;
  j["diagnostic_classes"] = diagnostic_classes;
  return j;
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  try {
    if (j.contains("w")) c.w = j.at("w").get<std::size_t>();
    if (j.contains("d")) c.d = j.at("d").get<std::size_t>();
    if (j.contains("encoder_block")) c.encoder = nn::parse_block_kind(j.at("encoder_block").get<std::string>());
    if (j.contains("decoder_block")) c.decoder = nn::parse_block_kind(j.at("decoder_block").get<std::string>());
    if (j.contains("feature_sharing")) c.sharing = parse_sharing(j.at("feature_sharing").get<std::string>());
    if (j.contains("tissue_classes")) c.tissue_classes = j.at("tissue_classes").get<std::size_t>();
    if (j.contains("diagnostic_classes")) c.diagnostic_classes = j.at("diagnostic_classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }
  c.validate();
  return c;
}

}  // namespace ynet::model
