#include "derain/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "derain/errors.hpp"

namespace derain {

namespace {

void clamp_unit(Tensor& t, const char* what) {
    for (float& v : t.values()) {
        if (!std::isfinite(v)) throw NumericError(std::string(what) + " holds a non-finite value");
        v = std::clamp(v, 0.0f, 1.0f);
    }
}

std::string dims(int c, int h, int w) {
    std::ostringstream os;
    os << c << "x" << h << "x" << w;
    return os.str();
}

} // namespace

ImageTensor::ImageTensor(Tensor data) : data_(std::move(data)) {
    const Shape& s = data_.shape();
    if (s.n != 1 || (s.c != 1 && s.c != 3) || s.h < 1 || s.w < 1) {
        throw StructuralError("image must be 1x{1,3}xHxW, got " + s.str());
    }
    clamp_unit(data_, "image");
}

ImageTensor::ImageTensor(int channels, int height, int width, float fill)
    : ImageTensor(Tensor(Shape{1, channels, height, width}, fill)) {}

void ImageTensor::set(int c, int y, int x, float v) {
    if (!std::isfinite(v)) throw NumericError("image value is not finite");
    data_.at(0, c, y, x) = std::clamp(v, 0.0f, 1.0f);
}

TransparencyMask::TransparencyMask(Tensor data) : data_(std::move(data)) {
    const Shape& s = data_.shape();
    if (s.n != 1 || s.c != 1 || s.h < 1 || s.w < 1) {
        throw StructuralError("mask must be 1x1xHxW, got " + s.str());
    }
    clamp_unit(data_, "mask");
}

TransparencyMask::TransparencyMask(int height, int width, float fill)
    : TransparencyMask(Tensor(Shape{1, 1, height, width}, fill)) {}

void TransparencyMask::set(int y, int x, float v) {
    if (!std::isfinite(v)) throw NumericError("mask value is not finite");
    data_.at(0, 0, y, x) = std::clamp(v, 0.0f, 1.0f);
}

void DecompositionTriple::validate() const {
    const auto& b = background;
    const auto& r = raindrop;
    if (b.channels() != r.channels() || b.height() != r.height() || b.width() != r.width()) {
        throw StructuralError("background " + dims(b.channels(), b.height(), b.width()) +
                              " and raindrop " + dims(r.channels(), r.height(), r.width()) +
                              " differ");
    }
    if (mask.height() != b.height() || mask.width() != b.width()) {
        throw StructuralError("mask " + dims(1, mask.height(), mask.width()) +
                              " does not match image " +
                              dims(b.channels(), b.height(), b.width()));
    }
}

ImageTensor compose(const DecompositionTriple& triple) {
    triple.validate();
    const Tensor& b = triple.background.tensor();
    const Tensor& r = triple.raindrop.tensor();
    const float* a = triple.mask.tensor().data();
    Tensor out(b.shape());
    const std::size_t plane = b.shape().plane();
    for (int c = 0; c < b.shape().c; ++c) {
        const float* bp = b.plane(0, c);
        const float* rp = r.plane(0, c);
        float* op = out.plane(0, c);
        for (std::size_t i = 0; i < plane; ++i) {
            const float v = (1.0f - a[i]) * bp[i] + a[i] * rp[i];
            // rounding must not leave the [min, max] hull of the two layers
            op[i] = std::clamp(v, std::min(bp[i], rp[i]), std::max(bp[i], rp[i]));
        }
    }
    return ImageTensor(std::move(out));
}

double residual(const ImageTensor& rainy, const DecompositionTriple& triple) {
    const ImageTensor composed = compose(triple);
    const Shape& s = rainy.tensor().shape();
    if (!(s == composed.tensor().shape())) {
        throw StructuralError("rainy image " + s.str() + " vs decomposition " +
                              composed.tensor().shape().str());
    }
    const auto x = rainy.tensor().values();
    const auto y = composed.tensor().values();
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sum += std::abs(static_cast<double>(y[i]) - x[i]);
    return sum / static_cast<double>(x.size());
}

} // namespace derain
