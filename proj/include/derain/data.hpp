#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "derain/decomposition.hpp"

namespace derain {

enum class Pairing { unpaired, paired };

/// Directory conventions:
///   flat:   rain/ and clean/, pairs share a file name
///   nus:    data/ and gt/, "<id>_rain.<ext>" pairs with "<id>_clean.<ext>"
///   rainds: raindrop/ and gt/, "rd-<id>.<ext>" pairs with "norain-<id>.<ext>"
///           (identical names also pair)
enum class Layout { nus, rainds, flat };

std::string to_string(Layout layout);
Layout parse_layout(const std::string& text);

struct DatasetManifest {
    std::vector<std::filesystem::path> rainy_paths;
    std::vector<std::filesystem::path> clean_paths;
    Pairing pairing = Pairing::unpaired;
    Layout layout = Layout::flat;
};

/// Rainy and clean sub-directory names for a layout.
std::pair<std::string, std::string> layout_dirs(Layout layout);

/// Sorted, deterministic listing. Paired manifests are index-aligned by the
/// layout's name rule. With verify_decode every file is decoded once.
DatasetManifest build_manifest(const std::filesystem::path& root, Layout layout, Pairing pairing,
                               bool verify_decode = true);

/// Sorted image files directly inside a directory.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

struct CropOffset {
    int y = 0;
    int x = 0;
};

/// Uniform offset of a size x size window inside an h x w image.
CropOffset choose_crop(int height, int width, int size, std::mt19937_64& rng);
ImageTensor crop(const ImageTensor& image, CropOffset offset, int size);
ImageTensor random_crop(const ImageTensor& image, int size, std::mt19937_64& rng);
/// Same offset for both images of a pair.
std::pair<ImageTensor, ImageTensor> random_crop_pair(const ImageTensor& a, const ImageTensor& b, int size,
                                                     std::mt19937_64& rng);
ImageTensor flip_horizontal(const ImageTensor& image);

struct SyntheticSpec {
    int count = 50;
    int size = 64;
    int channels = 3;
    int min_drops = 3;
    int max_drops = 8;
    float min_radius = 3.0f;
    float max_radius = 7.0f;
    float feather = 1.5f;
    int blur_radius = 2;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SyntheticSample {
    ImageTensor rainy;
    DecompositionTriple truth;
};

/// Procedural backgrounds with feathered elliptical drops. Each rainy image is
/// compose(truth) exactly.
std::vector<SyntheticSample> synthesize(const SyntheticSpec& spec);

} // namespace derain
