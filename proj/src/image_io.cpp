#include "derain/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "derain/errors.hpp"

namespace derain {

namespace {

std::uint8_t to_byte(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write(const std::filesystem::path& path, const cv::Mat& mat) {
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), mat);
    } catch (const cv::Exception& e) {
        throw IoError("cannot write " + path.string() + ": " + e.what());
    }
    if (!ok) throw IoError("cannot write " + path.string());
}

} // namespace

bool is_image_file(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

ImageTensor load_image(const std::filesystem::path& path, int channels) {
    if (channels != 1 && channels != 3) throw StructuralError("channels must be 1 or 3");
    cv::Mat mat;
    try {
        mat = cv::imread(path.string(), channels == 3 ? cv::IMREAD_COLOR : cv::IMREAD_GRAYSCALE);
    } catch (const cv::Exception& e) {
        throw IoError("cannot decode " + path.string() + ": " + e.what());
    }
    if (mat.empty()) throw IoError("cannot decode " + path.string());
    if (mat.depth() != CV_8U) throw IoError(path.string() + " is not an 8-bit image");
    Tensor t(Shape{1, channels, mat.rows, mat.cols});
    for (int y = 0; y < mat.rows; ++y) {
        const std::uint8_t* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < mat.cols; ++x) {
            for (int c = 0; c < channels; ++c) {
                // OpenCV stores BGR
                const int src = channels == 3 ? 2 - c : 0;
                t.at(0, c, y, x) = row[x * channels + src] / 255.0f;
            }
        }
    }
    return ImageTensor(std::move(t));
}

void save_image(const std::filesystem::path& path, const ImageTensor& image) {
    const int ch = image.channels();
    cv::Mat mat(image.height(), image.width(), ch == 3 ? CV_8UC3 : CV_8UC1);
    for (int y = 0; y < image.height(); ++y) {
        std::uint8_t* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width(); ++x)
            for (int c = 0; c < ch; ++c) row[x * ch + (ch == 3 ? 2 - c : 0)] = to_byte(image.at(c, y, x));
    }
    write(path, mat);
}

void save_mask(const std::filesystem::path& path, const TransparencyMask& mask) {
    cv::Mat mat(mask.height(), mask.width(), CV_8UC1);
    for (int y = 0; y < mask.height(); ++y) {
        std::uint8_t* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < mask.width(); ++x) row[x] = to_byte(mask.at(y, x));
    }
    write(path, mat);
}

ImageTensor mask_heatmap(const TransparencyMask& mask) {
    ImageTensor out(3, mask.height(), mask.width());
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) {
            const float v = mask.at(y, x);
            out.set(0, y, x, std::min(1.0f, 2.0f * v));
            out.set(1, y, x, std::max(0.0f, 2.0f * v - 1.0f));
            out.set(2, y, x, 0.0f);
        }
    return out;
}

ImageTensor heatmap_colorbar(int width, int height) {
    TransparencyMask ramp(height, width);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) ramp.set(y, x, width > 1 ? static_cast<float>(x) / (width - 1) : 0.0f);
    return mask_heatmap(ramp);
}

} // namespace derain
