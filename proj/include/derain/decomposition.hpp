#pragma once

#include "derain/tensor.hpp"

namespace derain {

/// C x H x W image with intensities in [0,1]. C is 1 or 3.
class ImageTensor {
public:
    ImageTensor() = default;
    /// Clamps into [0,1]; throws NumericError on non-finite input.
    explicit ImageTensor(Tensor data);
    ImageTensor(int channels, int height, int width, float fill = 0.0f);

    int channels() const { return data_.shape().c; }
    int height() const { return data_.shape().h; }
    int width() const { return data_.shape().w; }

    const Tensor& tensor() const { return data_; }
    float at(int c, int y, int x) const { return data_.at(0, c, y, x); }
    void set(int c, int y, int x, float v);

    bool operator==(const ImageTensor&) const = default;

private:
    Tensor data_;
};

/// 1 x H x W blend weights in [0,1].
class TransparencyMask {
public:
    TransparencyMask() = default;
    explicit TransparencyMask(Tensor data);
    TransparencyMask(int height, int width, float fill = 0.0f);

    int height() const { return data_.shape().h; }
    int width() const { return data_.shape().w; }

    const Tensor& tensor() const { return data_; }
    float at(int y, int x) const { return data_.at(0, 0, y, x); }
    void set(int y, int x, float v);

    bool operator==(const TransparencyMask&) const = default;

private:
    Tensor data_;
};

struct DecompositionTriple {
    ImageTensor background;
    ImageTensor raindrop;
    TransparencyMask mask;

    /// Throws StructuralError naming the mismatched dimensions.
    void validate() const;
};

/// (1 - mask) * background + mask * raindrop, the mask broadcast over channels.
ImageTensor compose(const DecompositionTriple& triple);

/// Mean absolute difference between compose(triple) and the rainy image.
double residual(const ImageTensor& rainy, const DecompositionTriple& triple);

} // namespace derain
