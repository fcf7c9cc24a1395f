#ifndef SLICESCOPE_SERIALIZATION_H_
#define SLICESCOPE_SERIALIZATION_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "slicescope/model.h"

namespace slicescope {

using Json = nlohmann::ordered_json;

Json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const Json& json);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

// Hash of the spec's canonical JSON and the raw parameter values.
std::string model_hash(const Model& model);

// Little-endian packing independent of host byte order.
std::vector<std::byte> pack_f64(std::span<const double> values);
std::vector<double> unpack_f64(std::span<const std::byte> bytes);
std::vector<std::byte> pack_f32(std::span<const double> values);
std::vector<double> unpack_f32(std::span<const std::byte> bytes);

// Artifact container: 8-byte magic, u64 LE header length, UTF-8 JSON header,
// then the raw payload.
struct Artifact {
  Json header;
  std::vector<std::byte> payload;
};

void write_artifact(const std::filesystem::path& path, std::string_view magic, const Json& header,
                    std::span<const std::byte> payload);
Artifact read_artifact(const std::filesystem::path& path, std::string_view magic);

// Parameter checkpoint: 8-byte magic followed by the raw f64 values, plus a
// JSON sidecar at "<path>.json" recording the model spec.
inline constexpr std::string_view kCheckpointMagic = "SSPARAM1";
std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);
void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

// Writes `json` with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& path, const Json& json);
Json read_json(const std::filesystem::path& path);

}  // namespace slicescope

#endif  // SLICESCOPE_SERIALIZATION_H_
