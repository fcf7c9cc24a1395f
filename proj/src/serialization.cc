#include "slicescope/serialization.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "slicescope/errors.h"

namespace slicescope {

Json to_json(const ModelSpec& spec) {
  Json json;
  json["kind"] = to_string(spec.kind);
  json["feature_dim"] = spec.feature_dim;
  json["num_classes"] = spec.num_classes;
  json["hidden_dim"] = spec.hidden_dim;
  json["bias"] = spec.bias;
  json["layer_mask"] = {{"first_block", spec.mask.first_block},
                        {"block_count", spec.mask.block_count}};
  return json;
}

ModelSpec model_spec_from_json(const Json& json) {
  try {
    ModelSpec spec;
    spec.kind = model_kind_from_string(json.at("kind").get<std::string>());
    spec.feature_dim = json.at("feature_dim").get<std::size_t>();
    spec.num_classes = json.at("num_classes").get<std::size_t>();
    spec.hidden_dim = json.value("hidden_dim", std::size_t{0});
    spec.bias = json.value("bias", true);
    if (json.contains("layer_mask")) {
      const auto& mask = json.at("layer_mask");
      spec.mask.first_block = mask.value("first_block", std::size_t{0});
      spec.mask.block_count = mask.value("block_count", std::size_t{0});
    }
    spec.validate();
    return spec;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bad model spec: ") + e.what());
  }
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t hash) {
  for (std::byte b : bytes) {
    hash ^= static_cast<std::uint64_t>(b);
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t fnv1a(std::string_view text, std::uint64_t hash) {
  return fnv1a(std::as_bytes(std::span(text.data(), text.size())), hash);
}

std::string hex64(std::uint64_t value) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << value;
  return out.str();
}

std::string model_hash(const Model& model) {
  std::uint64_t hash = fnv1a(to_json(model.spec()).dump());
  const Vector& values = model.params().values();
  const auto packed = pack_f64(std::span(values.data(), static_cast<std::size_t>(values.size())));
  return hex64(fnv1a(packed, hash));
}

namespace {

template <typename Word>
void put_le(Word word, std::byte* out) {
  for (std::size_t b = 0; b < sizeof(Word); ++b) {
    out[b] = static_cast<std::byte>((word >> (8 * b)) & 0xff);
  }
}

template <typename Word>
Word get_le(const std::byte* in) {
  Word word = 0;
  for (std::size_t b = 0; b < sizeof(Word); ++b) {
    word |= static_cast<Word>(std::to_integer<unsigned>(in[b])) << (8 * b);
  }
  return word;
}

}  // namespace

std::vector<std::byte> pack_f64(std::span<const double> values) {
  std::vector<std::byte> out(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    put_le(std::bit_cast<std::uint64_t>(values[i]), out.data() + 8 * i);
  }
  return out;
}

std::vector<double> unpack_f64(std::span<const std::byte> bytes) {
  if (bytes.size() % 8 != 0) throw FormatError("f64 payload length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes.data() + 8 * i));
  }
  return out;
}

std::vector<std::byte> pack_f32(std::span<const double> values) {
  std::vector<std::byte> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    put_le(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])), out.data() + 4 * i);
  }
  return out;
}

std::vector<double> unpack_f32(std::span<const std::byte> bytes) {
  if (bytes.size() % 4 != 0) throw FormatError("f32 payload length is not a multiple of 4");
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes.data() + 4 * i)));
  }
  return out;
}

namespace {

std::vector<std::byte> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> bytes(raw.size());
  std::memcpy(bytes.data(), raw.data(), raw.size());
  return bytes;
}

void write_all(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

}  // namespace

void write_artifact(const std::filesystem::path& path, std::string_view magic, const Json& header,
                    std::span<const std::byte> payload) {
  require(magic.size() == 8, "artifact magic must be 8 bytes");
  const std::string text = header.dump();
  std::vector<std::byte> bytes(16 + text.size() + payload.size());
  std::memcpy(bytes.data(), magic.data(), 8);
  put_le(static_cast<std::uint64_t>(text.size()), bytes.data() + 8);
  std::memcpy(bytes.data() + 16, text.data(), text.size());
  if (!payload.empty()) std::memcpy(bytes.data() + 16 + text.size(), payload.data(), payload.size());
  write_all(path, bytes);
}

Artifact read_artifact(const std::filesystem::path& path, std::string_view magic) {
  const auto bytes = read_all(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), magic.data(), 8) != 0) {
    throw FormatError(path.string() + ": missing " + std::string(magic) + " magic");
  }
  const auto header_length = get_le<std::uint64_t>(bytes.data() + 8);
  if (header_length > bytes.size() - 16) throw FormatError(path.string() + ": truncated header");
  Artifact artifact;
  try {
    artifact.header = Json::parse(reinterpret_cast<const char*>(bytes.data() + 16),
                                  reinterpret_cast<const char*>(bytes.data() + 16 + header_length));
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": bad header JSON: " + e.what());
  }
  artifact.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(16 + header_length), bytes.end());
  return artifact;
}

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  const Vector& values = model.params().values();
  const auto packed = pack_f64(std::span(values.data(), static_cast<std::size_t>(values.size())));
  std::vector<std::byte> bytes(8 + packed.size());
  std::memcpy(bytes.data(), kCheckpointMagic.data(), 8);
  std::memcpy(bytes.data() + 8, packed.data(), packed.size());
  write_all(path, bytes);

  Json sidecar;
  sidecar["format"] = "slicescope-checkpoint";
  sidecar["version"] = 1;
  sidecar["model_spec"] = to_json(model.spec());
  sidecar["param_count"] = model.spec().param_count();
  sidecar["model_hash"] = model_hash(model);
  write_json(checkpoint_sidecar(path), sidecar);
}

Model load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic.data(), 8) != 0) {
    throw FormatError(path.string() + ": not a parameter checkpoint");
  }
  const Json sidecar = read_json(checkpoint_sidecar(path));
  const ModelSpec spec = model_spec_from_json(sidecar.at("model_spec"));
  const auto values = unpack_f64(std::span(bytes).subspan(8));
  if (values.size() != spec.param_count()) {
    throw FormatError(path.string() + ": parameter count does not match sidecar spec");
  }
  Vector theta = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
  if (!theta.allFinite()) throw FormatError(path.string() + ": non-finite parameters");
  return Model(spec, ParamVector(std::move(theta)));
}

void write_json(const std::filesystem::path& path, const Json& json) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << json.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace slicescope
