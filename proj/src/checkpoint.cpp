#include "derain/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "derain/errors.hpp"

namespace derain {

namespace fs = std::filesystem;

namespace {

constexpr std::array<char, 8> kMagic{'D', 'R', 'N', 'C', 'K', 'P', 'T', '1'};

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const fs::path& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw StructuralError("checkpoint " + path.string() + " is truncated");
    return v;
}

} // namespace

void write_archive(const fs::path& path, const Archive& archive, std::uint32_t version) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
        os.write(kMagic.data(), kMagic.size());
        put<std::uint32_t>(os, version);
        const std::string meta = archive.meta.dump();
        put<std::uint64_t>(os, meta.size());
        os.write(meta.data(), static_cast<std::streamsize>(meta.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(archive.tensors.size()));
        for (const auto& [name, t] : archive.tensors) {
            put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            const Shape& s = t.shape();
            for (int d : {s.n, s.c, s.h, s.w}) put<std::int32_t>(os, d);
            os.write(reinterpret_cast<const char*>(t.data()),
                     static_cast<std::streamsize>(t.numel() * sizeof(float)));
        }
        os.flush();
        if (!os) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw IoError("writing " + tmp.string() + " failed (disk full?)");
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot move checkpoint into " + path.string() + ": " + ec.message());
}

Archive read_archive(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != kMagic) throw StructuralError(path.string() + " is not a checkpoint archive");
    const auto version = get<std::uint32_t>(is, path);
    if (version != kCheckpointVersion) {
        throw StructuralError("checkpoint " + path.string() + " has format version " + std::to_string(version) +
                              ", this build reads version " + std::to_string(kCheckpointVersion));
    }
    Archive a;
    const auto meta_len = get<std::uint64_t>(is, path);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw StructuralError("checkpoint " + path.string() + " is truncated");
    try {
        a.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError("checkpoint metadata is corrupt: " + std::string(e.what()));
    }
    const auto count = get<std::uint32_t>(is, path);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(is, path);
        std::string name(len, '\0');
        is.read(name.data(), len);
        Shape s;
        s.n = get<std::int32_t>(is, path);
        s.c = get<std::int32_t>(is, path);
        s.h = get<std::int32_t>(is, path);
        s.w = get<std::int32_t>(is, path);
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw StructuralError("corrupt tensor entry " + name);
        Tensor t(s);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
        if (!is) throw StructuralError("checkpoint " + path.string() + " is truncated");
        a.tensors.emplace(std::move(name), std::move(t));
    }
    return a;
}

nlohmann::json to_json(const GeneratorConfig& c) {
    return {{"channels", c.channels},
            {"base_width", c.base_width},
            {"residual_blocks", c.residual_blocks},
            {"iterations", c.iterations},
            {"background_activation", to_string(c.background_activation)},
            {"raindrop_activation", to_string(c.raindrop_activation)},
            {"mask_activation", to_string(c.mask_activation)}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
    try {
        GeneratorConfig c;
        c.channels = j.at("channels").get<int>();
        c.base_width = j.at("base_width").get<int>();
        c.residual_blocks = j.at("residual_blocks").get<int>();
        c.iterations = j.at("iterations").get<int>();
        c.background_activation = parse_head_activation(j.at("background_activation").get<std::string>());
        c.raindrop_activation = parse_head_activation(j.at("raindrop_activation").get<std::string>());
        c.mask_activation = parse_head_activation(j.at("mask_activation").get<std::string>());
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError("generator metadata is incomplete: " + std::string(e.what()));
    }
}

nlohmann::json to_json(const DiscriminatorConfig& c) {
    return {{"channels", c.channels},
            {"base_width", c.base_width},
            {"downsampling_layers", c.downsampling_layers},
            {"leaky_slope", c.leaky_slope}};
}

DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j) {
    try {
        DiscriminatorConfig c;
        c.channels = j.at("channels").get<int>();
        c.base_width = j.at("base_width").get<int>();
        c.downsampling_layers = j.at("downsampling_layers").get<int>();
        c.leaky_slope = j.at("leaky_slope").get<float>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw StructuralError("discriminator metadata is incomplete: " + std::string(e.what()));
    }
}

void store_parameters(Archive& archive, const std::string& prefix, const ParameterSet& params) {
    for (const auto& e : params.entries()) archive.tensors[prefix + "/" + e.name] = e.var.value();
}

void restore_parameters(const Archive& archive, const std::string& prefix, ParameterSet& params) {
    for (auto& e : params.entries()) {
        const std::string key = prefix + "/" + e.name;
        auto it = archive.tensors.find(key);
        if (it == archive.tensors.end()) throw StructuralError("checkpoint lacks parameter '" + key + "'");
        if (!(it->second.shape() == e.var.shape())) {
            throw StructuralError("parameter '" + key + "' is " + it->second.shape().str() + ", expected " +
                                  e.var.shape().str());
        }
        e.var.mutable_value() = it->second;
    }
}

void store_generator(Archive& archive, const Generator& generator) {
    archive.meta["format_version"] = kCheckpointVersion;
    archive.meta["generator"] = to_json(generator.config());
    store_parameters(archive, "generator", generator.parameters());
}

Generator load_generator(const Archive& archive, int expected_channels) {
    if (!archive.meta.contains("generator")) throw StructuralError("checkpoint holds no generator");
    const GeneratorConfig cfg = generator_config_from_json(archive.meta.at("generator"));
    if (expected_channels != 0 && cfg.channels != expected_channels) {
        throw StructuralError("checkpoint generator has " + std::to_string(cfg.channels) + " channels, expected " +
                              std::to_string(expected_channels));
    }
    Generator g(cfg, 0);
    restore_parameters(archive, "generator", g.parameters());
    return g;
}

Generator load_generator(const fs::path& path, int expected_channels) {
    return load_generator(read_archive(path), expected_channels);
}

} // namespace derain
