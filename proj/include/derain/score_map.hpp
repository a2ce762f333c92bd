#pragma once

#include "derain/tensor.hpp"

namespace derain {

/// Raw (pre-sigmoid) patch scores, n x 1 x h x w. One cell per receptive-field patch.
class ScoreMap {
public:
    ScoreMap() = default;
    explicit ScoreMap(Tensor data);

    const Tensor& tensor() const { return data_; }
    int height() const { return data_.shape().h; }
    int width() const { return data_.shape().w; }

private:
    Tensor data_;
};

} // namespace derain
