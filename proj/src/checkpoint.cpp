#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "jrl/errors.hpp"
#include "jrl/model.hpp"

namespace jrl {

namespace {

constexpr char kMagic[8] = {'J', 'R', 'L', 'C', 'K', 'P', 'T', '\n'};

void put_u64(std::string& out, std::uint64_t x) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return x;
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

double get_f64(const char* p) { return std::bit_cast<double>(get_u64(p)); }

std::string config_mismatch(const ModelConfig& expected, const ModelConfig& found) {
  const auto a = to_json(expected), b = to_json(found);
  std::string diff;
  for (const auto& [key, value] : a.items()) {
    if (b.at(key) != value) {
      if (!diff.empty()) diff += ", ";
      diff += key + " expected " + value.dump() + " found " + b.at(key).dump();
    }
  }
  return diff;
}

}  // namespace

void save_checkpoint(const JrlParams& params, const ModelConfig& config, const std::filesystem::path& path,
                     const nlohmann::json& metadata) {
  nlohmann::json directory = nlohmann::json::array();
  std::string payload;
  for_each_tensor(params, [&](const std::string& name, const auto& t) {
    directory.push_back({{"name", name}, {"shape", tensor_shape(t)}, {"offset", payload.size()}});
    for (double v : t.values()) put_f64(payload, v);
  });
  const nlohmann::json header = {{"format_version", kCheckpointVersion},
                                 {"config", to_json(config)},
                                 {"metadata", metadata},
                                 {"tensors", directory},
                                 {"data_bytes", payload.size()}};
  const std::string header_text = header.dump();

  std::string bytes(kMagic, sizeof kMagic);
  put_u64(bytes, header_text.size());
  bytes += header_text;
  bytes += payload;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "': path not found or unreadable");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint '" + path.string() + "'";

  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw IoError(where + " is corrupt: bad magic or truncated header");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) throw IoError(where + " is corrupt: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + " is corrupt: unreadable header (" + e.what() + ")");
  }

  LoadedCheckpoint out;
  std::size_t data_bytes = 0;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw ContractError(where + " has format version " + std::to_string(version) + ", this build reads version " +
                          std::to_string(kCheckpointVersion));
    }
    out.config = model_config_from_json(header.at("config"));
    out.metadata = header.value("metadata", nlohmann::json::object());
    data_bytes = header.at("data_bytes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + " is corrupt: malformed header (" + e.what() + ")");
  }
  if (expected != nullptr && !(out.config == *expected)) {
    throw ContractError(where + " shape mismatch: " + config_mismatch(*expected, out.config));
  }

  const std::size_t data_begin = 16 + header_len;
  if (bytes.size() - data_begin != data_bytes) {
    throw IoError(where + " is corrupt: expected " + std::to_string(data_bytes) + " tensor bytes, found " +
                  std::to_string(bytes.size() - data_begin));
  }
  out.config.validate();
  out.params = JrlParams::zeros(out.config);

  const nlohmann::json& directory = header.at("tensors");
  std::size_t k = 0;
  for_each_tensor(out.params, [&](const std::string& name, auto& t) {
    if (k >= directory.size()) throw IoError(where + " is corrupt: tensor directory is missing '" + name + "'");
    const nlohmann::json& entry = directory[k++];
    std::vector<std::size_t> shape;
    std::size_t offset = 0;
    try {
      if (entry.at("name").get<std::string>() != name) {
        throw ContractError(where + ": expected tensor '" + name + "', found '" + entry.at("name").get<std::string>() +
                            "'");
      }
      shape = entry.at("shape").get<std::vector<std::size_t>>();
      offset = entry.at("offset").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(where + " is corrupt: malformed tensor entry (" + e.what() + ")");
    }
    if (shape != tensor_shape(t)) {
      throw ContractError(where + " shape mismatch for tensor '" + name + "'");
    }
    const std::size_t count = t.values().size();
    if (offset > data_bytes || count * 8 > data_bytes - offset) {
      throw IoError(where + " is corrupt: tensor '" + name + "' lies outside the data section");
    }
    const char* p = bytes.data() + data_begin + offset;
    auto values = t.values();
    for (std::size_t i = 0; i < count; ++i) values[i] = get_f64(p + 8 * i);
    if (!all_finite(values)) throw IoError(where + " is corrupt: tensor '" + name + "' has non-finite values");
  });
  if (k != directory.size()) throw IoError(where + " is corrupt: unexpected extra tensors");
  return out;
}

}  // namespace jrl
