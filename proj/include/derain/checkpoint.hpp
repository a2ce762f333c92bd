#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "derain/discriminator.hpp"
#include "derain/generator.hpp"

namespace derain {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary archive: magic "DRNCKPT1", u32 format version, u64 length + JSON
/// metadata, u32 entry count, then per entry u32 name length, name, four i32
/// dims (n, c, h, w) and the float32 payload. Little-endian.
struct Archive {
    nlohmann::json meta = nlohmann::json::object();
    std::map<std::string, Tensor> tensors;
};

/// Writes via a temporary file and rename; throws IoError on failure.
void write_archive(const std::filesystem::path& path, const Archive& archive,
                   std::uint32_t version = kCheckpointVersion);
/// Throws StructuralError on a bad magic or an unsupported version.
Archive read_archive(const std::filesystem::path& path);

nlohmann::json to_json(const GeneratorConfig& config);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiscriminatorConfig& config);
DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j);

/// Stores parameters under "<prefix>/<name>".
void store_parameters(Archive& archive, const std::string& prefix, const ParameterSet& params);
/// Overwrites values from "<prefix>/<name>"; every parameter must be present with its shape.
void restore_parameters(const Archive& archive, const std::string& prefix, ParameterSet& params);

void store_generator(Archive& archive, const Generator& generator);
/// expected_channels = 0 accepts any channel count.
Generator load_generator(const Archive& archive, int expected_channels = 0);
Generator load_generator(const std::filesystem::path& path, int expected_channels = 0);

} // namespace derain
