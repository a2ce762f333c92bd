#include "derain/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "derain/errors.hpp"
#include "derain/image_io.hpp"

namespace derain {

namespace fs = std::filesystem;

std::string to_string(Layout layout) {
    switch (layout) {
    case Layout::nus: return "nus";
    case Layout::rainds: return "rainds";
    case Layout::flat: return "flat";
    }
    return "?";
}

Layout parse_layout(const std::string& text) {
    if (text == "nus") return Layout::nus;
    if (text == "rainds") return Layout::rainds;
    if (text == "flat") return Layout::flat;
    throw ConfigError("unknown layout '" + text + "' (nus, rainds, flat)");
}

std::pair<std::string, std::string> layout_dirs(Layout layout) {
    switch (layout) {
    case Layout::nus: return {"data", "gt"};
    case Layout::rainds: return {"raindrop", "gt"};
    case Layout::flat: return {"rain", "clean"};
    }
    return {};
}

std::vector<fs::path> list_images(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

std::string strip(const std::string& s, const std::string& prefix, const std::string& suffix) {
    std::string r = s;
    if (!prefix.empty() && r.rfind(prefix, 0) == 0) r = r.substr(prefix.size());
    if (!suffix.empty() && r.size() >= suffix.size() &&
        r.compare(r.size() - suffix.size(), suffix.size(), suffix) == 0) {
        r = r.substr(0, r.size() - suffix.size());
    }
    return r;
}

// Name under which a file is matched with its counterpart.
std::string pair_key(const fs::path& p, Layout layout, bool rainy) {
    const std::string stem = p.stem().string();
    switch (layout) {
    case Layout::nus: return rainy ? strip(stem, "", "_rain") : strip(stem, "", "_clean");
    case Layout::rainds: return rainy ? strip(stem, "rd-", "") : strip(stem, "norain-", "");
    case Layout::flat: return p.filename().string();
    }
    return stem;
}

} // namespace

DatasetManifest build_manifest(const fs::path& root, Layout layout, Pairing pairing, bool verify_decode) {
    if (!fs::is_directory(root)) throw StructuralError("dataset root " + root.string() + " does not exist");
    const auto [rain_dir, clean_dir] = layout_dirs(layout);
    DatasetManifest m;
    m.layout = layout;
    m.pairing = pairing;
    m.rainy_paths = list_images(root / rain_dir);
    m.clean_paths = list_images(root / clean_dir);
    if (m.rainy_paths.empty() && m.clean_paths.empty()) {
        throw StructuralError("no images found under " + root.string());
    }
    if (m.rainy_paths.empty()) throw StructuralError("no images found in " + (root / rain_dir).string());
    if (m.clean_paths.empty()) throw StructuralError("no images found in " + (root / clean_dir).string());

    if (pairing == Pairing::paired) {
        std::map<std::string, fs::path> clean_by_key;
        for (const auto& p : m.clean_paths) clean_by_key[pair_key(p, layout, false)] = p;
        std::vector<fs::path> aligned;
        for (const auto& p : m.rainy_paths) {
            auto it = clean_by_key.find(pair_key(p, layout, true));
            if (it == clean_by_key.end()) {
                throw StructuralError("rainy image " + p.string() + " has no clean counterpart");
            }
            aligned.push_back(it->second);
            clean_by_key.erase(it);
        }
        if (!clean_by_key.empty()) {
            throw StructuralError("clean image " + clean_by_key.begin()->second.string() +
                                  " has no rainy counterpart");
        }
        m.clean_paths = std::move(aligned);
    }

    if (verify_decode) {
        for (const auto* list : {&m.rainy_paths, &m.clean_paths})
            for (const auto& p : *list) (void)load_image(p);
    }
    return m;
}

CropOffset choose_crop(int height, int width, int size, std::mt19937_64& rng) {
    if (size < 1) throw StructuralError("crop size must be >= 1");
    if (height < size || width < size) {
        throw StructuralError("image " + std::to_string(height) + "x" + std::to_string(width) +
                              " is smaller than the crop size " + std::to_string(size));
    }
    std::uniform_int_distribution<int> dy(0, height - size);
    std::uniform_int_distribution<int> dx(0, width - size);
    CropOffset o;
    o.y = dy(rng);
    o.x = dx(rng);
    return o;
}

ImageTensor crop(const ImageTensor& image, CropOffset offset, int size) {
    if (offset.y < 0 || offset.x < 0 || offset.y + size > image.height() || offset.x + size > image.width()) {
        throw StructuralError("crop window outside the image");
    }
    Tensor t(Shape{1, image.channels(), size, size});
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) t.at(0, c, y, x) = image.at(c, offset.y + y, offset.x + x);
    return ImageTensor(std::move(t));
}

ImageTensor random_crop(const ImageTensor& image, int size, std::mt19937_64& rng) {
    return crop(image, choose_crop(image.height(), image.width(), size, rng), size);
}

std::pair<ImageTensor, ImageTensor> random_crop_pair(const ImageTensor& a, const ImageTensor& b, int size,
                                                     std::mt19937_64& rng) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw StructuralError("paired crop of differently sized images");
    }
    const CropOffset o = choose_crop(a.height(), a.width(), size, rng);
    return {crop(a, o, size), crop(b, o, size)};
}

ImageTensor flip_horizontal(const ImageTensor& image) {
    Tensor t(image.tensor().shape());
    const int w = image.width();
    for (int c = 0; c < image.channels(); ++c)
        for (int y = 0; y < image.height(); ++y)
            for (int x = 0; x < w; ++x) t.at(0, c, y, x) = image.at(c, y, w - 1 - x);
    return ImageTensor(std::move(t));
}

void SyntheticSpec::validate() const {
    if (count < 1) throw ConfigError("synthetic count must be >= 1");
    if (size < 1) throw ConfigError("synthetic image size must be >= 1");
    if (channels != 1 && channels != 3) throw ConfigError("synthetic channels must be 1 or 3");
    if (min_drops < 0 || max_drops < min_drops) throw ConfigError("invalid droplet count range");
    if (min_radius < 1.0f || max_radius < min_radius) throw ConfigError("droplet radii must be >= 1 pixel");
    if (feather < 0.0f) throw ConfigError("feather width must be >= 0");
    if (blur_radius < 0) throw ConfigError("blur radius must be >= 0");
}

namespace {

// Integer-frequency waves over a shared base colour. Every image has the same
// mean and contrast, because an instance-normalised generator cannot recover
// per-image intensity offsets or gains from its input.
Tensor textured_background(int channels, int size, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::uniform_int_distribution<int> freq(1, 4);
    constexpr int kWaves = 4;
    constexpr float kAmplitude = 0.08f;
    struct Wave {
        float fy, fx, phase, amp;
        float tint[3];
    };
    std::vector<Wave> waves(kWaves);
    for (auto& wv : waves) {
        wv.fy = static_cast<float>(freq(rng)) * (unit(rng) < 0.5f ? -1.0f : 1.0f);
        wv.fx = static_cast<float>(freq(rng));
        wv.phase = unit(rng) * 2.0f * std::numbers::pi_v<float>;
        wv.amp = kAmplitude;
        for (float& t : wv.tint) t = 0.75f + 0.5f * unit(rng);
    }
    const float base[3] = {0.45f, 0.5f, 0.4f};

    // one soft-edged block gives the scene a few straight edges
    const float by0 = unit(rng) * size * 0.6f;
    const float bx0 = unit(rng) * size * 0.6f;
    const float bh = size * (0.2f + 0.3f * unit(rng));
    const float bw = size * (0.2f + 0.3f * unit(rng));
    const float sign = unit(rng) < 0.5f ? -1.0f : 1.0f;
    float block[3];
    for (float& b : block) b = sign * 0.1f;

    Tensor t(Shape{1, channels, size, size});
    const float two_pi = 2.0f * std::numbers::pi_v<float>;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const bool in_block = y >= by0 && y < by0 + bh && x >= bx0 && x < bx0 + bw;
            for (int c = 0; c < channels; ++c) {
                float v = base[c];
                for (const auto& wv : waves) {
                    v += wv.amp * wv.tint[c] *
                         std::sin(two_pi * (wv.fy * y + wv.fx * x) / static_cast<float>(size) + wv.phase);
                }
                if (in_block) v += block[c];
                t.at(0, c, y, x) = std::clamp(v, 0.05f, 0.95f);
            }
        }
    return t;
}

Tensor box_blur(const Tensor& src, int radius) {
    if (radius == 0) return src;
    const Shape s = src.shape();
    Tensor tmp(s);
    Tensor out(s);
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                float acc = 0.0f;
                int n = 0;
                for (int k = -radius; k <= radius; ++k) {
                    const int xx = x + k;
                    if (xx < 0 || xx >= s.w) continue;
                    acc += src.at(0, c, y, xx);
                    ++n;
                }
                tmp.at(0, c, y, x) = acc / static_cast<float>(n);
            }
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) {
                float acc = 0.0f;
                int n = 0;
                for (int k = -radius; k <= radius; ++k) {
                    const int yy = y + k;
                    if (yy < 0 || yy >= s.h) continue;
                    acc += tmp.at(0, c, yy, x);
                    ++n;
                }
                out.at(0, c, y, x) = acc / static_cast<float>(n);
            }
    }
    return out;
}

} // namespace

std::vector<SyntheticSample> synthesize(const SyntheticSpec& spec) {
    spec.validate();
    std::vector<SyntheticSample> out;
    out.reserve(static_cast<std::size_t>(spec.count));
    const int n = spec.size;
    for (int i = 0; i < spec.count; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                          static_cast<std::uint32_t>(i)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<float> unit(0.0f, 1.0f);

        const Tensor background = textured_background(spec.channels, n, rng);

        Tensor mask(Shape{1, 1, n, n});
        const int drops = std::uniform_int_distribution<int>(spec.min_drops, spec.max_drops)(rng);
        for (int d = 0; d < drops; ++d) {
            const float ry = spec.min_radius + (spec.max_radius - spec.min_radius) * unit(rng);
            const float rx = spec.min_radius + (spec.max_radius - spec.min_radius) * unit(rng);
            // keep the ellipse inside the frame when it fits
            const float cy = std::min(ry, n * 0.5f) + unit(rng) * std::max(0.0f, n - 2.0f * ry);
            const float cx = std::min(rx, n * 0.5f) + unit(rng) * std::max(0.0f, n - 2.0f * rx);
            const float opacity = 0.8f + 0.2f * unit(rng);
            const float rmin = std::min(rx, ry);
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    const float dy = (y + 0.5f - cy) / ry;
                    const float dx = (x + 0.5f - cx) / rx;
                    const float dist = std::sqrt(dy * dy + dx * dx);
                    float a = 0.0f;
                    if (dist <= 1.0f) {
                        a = 1.0f;
                    } else if (spec.feather > 0.0f) {
                        a = std::clamp(1.0f - (dist - 1.0f) * rmin / spec.feather, 0.0f, 1.0f);
                    }
                    float& m = mask.at(0, 0, y, x);
                    m = std::max(m, a * opacity);
                }
        }

        const Tensor blurred = box_blur(background, spec.blur_radius);
        Tensor raindrop = background;
        for (int c = 0; c < spec.channels; ++c)
            for (int y = 0; y < n; ++y)
                for (int x = 0; x < n; ++x) {
                    if (mask.at(0, 0, y, x) > 0.0f) {
                        raindrop.at(0, c, y, x) = std::clamp(0.7f * blurred.at(0, c, y, x) + 0.35f, 0.0f, 1.0f);
                    }
                }

        DecompositionTriple truth{ImageTensor(background), ImageTensor(std::move(raindrop)),
                                  TransparencyMask(std::move(mask))};
        ImageTensor rainy = compose(truth);
        out.push_back({std::move(rainy), std::move(truth)});
    }
    return out;
}

} // namespace derain
