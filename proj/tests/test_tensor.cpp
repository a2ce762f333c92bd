#include <doctest.h>

#include "derain/errors.hpp"
#include "derain/tensor.hpp"

using namespace derain;

TEST_CASE("tensor indexing is NCHW row-major") {
    Tensor t(Shape{2, 3, 4, 5});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i);
    CHECK(t.at(1, 2, 3, 4) == static_cast<float>(((1 * 3 + 2) * 4 + 3) * 5 + 4));
    CHECK(t.plane(1, 1) - t.data() == (1 * 3 + 1) * 20);
    CHECK(t.shape().str() == "2x3x4x5");
}

TEST_CASE("item and stack are inverses") {
    Tensor t(Shape{3, 2, 2, 2});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i) * 0.5f;
    const std::vector<Tensor> items{t.item(0), t.item(1), t.item(2)};
    CHECK(items[1].shape() == Shape{1, 2, 2, 2});
    CHECK(items[1][0] == t[8]);
    CHECK(stack(items) == t);
}

TEST_CASE("stack rejects mismatched items and empty batches") {
    const std::vector<Tensor> bad{Tensor(Shape{1, 1, 2, 2}), Tensor(Shape{1, 1, 2, 3})};
    CHECK_THROWS_AS(stack(bad), StructuralError);
    CHECK_THROWS_AS(stack(std::span<const Tensor>{}), StructuralError);
}

TEST_CASE("value count must match the shape") {
    CHECK_THROWS_AS(Tensor(Shape{1, 1, 2, 2}, std::vector<float>(3)), StructuralError);
}
