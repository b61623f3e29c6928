#include "ynet/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace ynet::model {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void put(std::string& out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof(U));
    pos_ += sizeof(U);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

template <typename T>
constexpr std::uint8_t dtype_code() {
  return std::is_same_v<T, float> ? 0 : 1;
}

}  // namespace

template <typename T>
std::string serialize_checkpoint(const std::vector<nn::NamedTensor<T>>& state, const nlohmann::ordered_json& config) {
  std::string out = "YNET";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, state.size());
  for (const auto& [name, t] : state) {
    if (name.size() > 0xffff) throw DataError("tensor name too long: " + name.substr(0, 64) + "...");
    if (t.rank() > 0xff) throw DataError("tensor rank too large: " + name);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, dtype_code<T>());
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    const auto data = t.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(T));
  }
  const std::string js = config.dump();
  put<std::uint64_t>(out, js.size());
  out += js;
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != "YNET") throw DataError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint64_t>();
  Checkpoint c;
  for (std::uint64_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.bytes(r.get<std::uint16_t>());
    t.dtype = r.get<std::uint8_t>();
    if (t.dtype > 1) throw DataError("tensor '" + t.name + "': unknown dtype code " + std::to_string(t.dtype));
    const auto rank = r.get<std::uint8_t>();
    for (std::uint8_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint64_t>());
    const std::size_t n = numel(t.shape);
    t.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) t.values[k] = t.dtype == 0 ? double(r.get<float>()) : r.get<double>();
    c.tensors.push_back(std::move(t));
  }
  const std::string js = r.bytes(r.get<std::uint64_t>());
  if (!r.done()) throw DataError("trailing bytes after checkpoint config");
  try {
    c.config = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  return c;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const nn::Module<T>& module,
                     const nlohmann::ordered_json& config) {
  const std::string bytes = serialize_checkpoint(module.named_state(), config);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return parse_checkpoint(ss.str());
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

template <typename T>
void apply_checkpoint(nn::Module<T>& module, const Checkpoint& ckpt) {
  std::map<std::string, const StoredTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  for (auto& [name, t] : module.named_state()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("checkpoint lacks tensor '" + name + "'");
    const StoredTensor& s = *it->second;
    if (s.shape != t.shape()) {
      throw DataError("tensor '" + name + "': checkpoint shape " + shape_str(s.shape) + " vs model " +
                      shape_str(t.shape()));
    }
    auto dst = t.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(s.values[i]);
  }
  if (by_name.size() != module.named_state().size()) {
    throw DataError("checkpoint has " + std::to_string(by_name.size()) + " tensors, model expects " +
                    std::to_string(module.named_state().size()));
  }
}

template std::string serialize_checkpoint<float>(const std::vector<nn::NamedTensor<float>>&, const nlohmann::ordered_json&);
template std::string serialize_checkpoint<double>(const std::vector<nn::NamedTensor<double>>&, const nlohmann::ordered_json&);
template void save_checkpoint<float>(const std::filesystem::path&, const nn::Module<float>&, const nlohmann::ordered_json&);
template void save_checkpoint<double>(const std::filesystem::path&, const nn::Module<double>&, const nlohmann::ordered_json&);
template void apply_checkpoint<float>(nn::Module<float>&, const Checkpoint&);
template void apply_checkpoint<double>(nn::Module<double>&, const Checkpoint&);

}  // namespace ynet::model
