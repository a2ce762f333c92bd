#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace derain {

/// Dense NCHW shape. Single images use n = 1.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Contiguous float32 NCHW array with value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(int n, int c, int y, int x) { return data_[index(n, c, y, x)]; }
    float at(int n, int c, int y, int x) const { return data_[index(n, c, y, x)]; }

    /// Pointer to the (n, c) plane.
    float* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }
    const float* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }

    /// Copy of item n as a 1-batch tensor.
    Tensor item(int n) const;
    void fill(float v);

    bool operator==(const Tensor&) const = default;

private:
    std::size_t index(int n, int c, int y, int x) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    Shape shape_{0, 0, 0, 0};
    std::vector<float> data_;
};

/// Stacks 1-batch tensors of identical CHW shape along n.
Tensor stack(std::span<const Tensor> items);

} // namespace derain
