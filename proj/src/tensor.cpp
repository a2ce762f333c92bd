#include "derain/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "derain/errors.hpp"

namespace derain {

std::string Shape::str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
        throw StructuralError("negative tensor dimension " + shape.str());
    }
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape.numel()) {
        throw StructuralError("tensor " + shape.str() + " given " + std::to_string(data_.size()) +
                              " values");
    }
}

Tensor Tensor::item(int n) const {
    Shape s = shape_;
    s.n = 1;
    const std::size_t len = s.numel();
    std::vector<float> v(data_.begin() + static_cast<std::ptrdiff_t>(n * len),
                         data_.begin() + static_cast<std::ptrdiff_t>((n + 1) * len));
    return Tensor(s, std::move(v));
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor stack(std::span<const Tensor> items) {
    if (items.empty()) throw StructuralError("cannot stack an empty batch");
    Shape s = items.front().shape();
    std::vector<float> out;
    out.reserve(s.numel() * items.size());
    for (const Tensor& t : items) {
        Shape ts = t.shape();
        if (ts.n != 1 || ts.c != s.c || ts.h != s.h || ts.w != s.w) {
            throw StructuralError("stack: item " + ts.str() + " does not match " + s.str());
        }
        out.insert(out.end(), t.values().begin(), t.values().end());
    }
    s.n = static_cast<int>(items.size());
    return Tensor(s, std::move(out));
}

} // namespace derain
