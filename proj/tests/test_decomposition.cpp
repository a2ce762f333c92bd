#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "derain/decomposition.hpp"
#include "derain/errors.hpp"

using namespace derain;

namespace {

ImageTensor random_image(int c, int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t(Shape{1, c, h, w});
    for (float& v : t.values()) v = u(rng);
    return ImageTensor(std::move(t));
}

TransparencyMask random_mask(int h, int w, std::mt19937_64& rng) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t(Shape{1, 1, h, w});
    for (float& v : t.values()) v = u(rng);
    return TransparencyMask(std::move(t));
}

} // namespace

TEST_CASE("mask endpoints select one layer exactly") {
    std::mt19937_64 rng(1);
    const ImageTensor b = random_image(3, 5, 6, rng);
    const ImageTensor r = random_image(3, 5, 6, rng);
    CHECK(compose({b, r, TransparencyMask(5, 6, 0.0f)}) == b);
    CHECK(compose({b, r, TransparencyMask(5, 6, 1.0f)}) == r);
}

TEST_CASE("half mask over uniform layers") {
    const ImageTensor out = compose({ImageTensor(3, 4, 4, 0.2f), ImageTensor(3, 4, 4, 0.8f), TransparencyMask(4, 4, 0.5f)});
    // (1 - 0.5) * 0.2 + 0.5 * 0.8 evaluated in double
    const double expected = 0.5 * 0.2 + 0.5 * 0.8;
    for (float v : out.tensor().values()) CHECK(v == doctest::Approx(expected).epsilon(1e-7));
}

TEST_CASE("mask broadcasts over every channel") {
    std::mt19937_64 rng(2);
    const ImageTensor b = random_image(3, 4, 4, rng);
    const ImageTensor r = random_image(3, 4, 4, rng);
    const TransparencyMask a = random_mask(4, 4, rng);
    const ImageTensor out = compose({b, r, a});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const double e = (1.0 - a.at(y, x)) * b.at(c, y, x) + double(a.at(y, x)) * r.at(c, y, x);
                CHECK(out.at(c, y, x) == doctest::Approx(e).epsilon(1e-6));
            }
}

TEST_CASE("shape mismatches name the dimensions") {
    const ImageTensor b(3, 4, 4);
    try {
        compose({b, ImageTensor(3, 4, 5), TransparencyMask(4, 4)});
        FAIL("expected a structural error");
    } catch (const StructuralError& e) {
        CHECK(std::string(e.what()).find("3x4x5") != std::string::npos);
    }
    CHECK_THROWS_AS(compose({b, ImageTensor(1, 4, 4), TransparencyMask(4, 4)}), StructuralError);
    CHECK_THROWS_AS(compose({b, b, TransparencyMask(3, 4)}), StructuralError);
    CHECK_THROWS_AS(residual(ImageTensor(3, 5, 5), {b, b, TransparencyMask(4, 4)}), StructuralError);
}

TEST_CASE("construction clamps into [0,1] and rejects non-finite values") {
    Tensor t(Shape{1, 1, 1, 3}, std::vector<float>{-0.5f, 0.25f, 1.5f});
    const ImageTensor img(t);
    CHECK(img.at(0, 0, 0) == 0.0f);
    CHECK(img.at(0, 0, 1) == 0.25f);
    CHECK(img.at(0, 0, 2) == 1.0f);
    t[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(ImageTensor{t}, NumericError);
    CHECK_THROWS_AS(TransparencyMask(Tensor(Shape{1, 1, 1, 1}, std::numeric_limits<float>::infinity())), NumericError);
    CHECK_THROWS_AS(ImageTensor(Tensor(Shape{1, 2, 4, 4})), StructuralError);
    CHECK_THROWS_AS(TransparencyMask(Tensor(Shape{1, 3, 4, 4})), StructuralError);
}

TEST_CASE("residual examples") {
    const ImageTensor zero(3, 4, 4, 0.0f);
    const ImageTensor one(3, 4, 4, 1.0f);
    CHECK(residual(zero, {one, one, TransparencyMask(4, 4, 0.3f)}) == 1.0);
    const ImageTensor quarter(3, 4, 4, 0.25f);
    const ImageTensor three_quarters(3, 4, 4, 0.75f);
    CHECK(residual(quarter, {three_quarters, three_quarters, TransparencyMask(4, 4, 0.5f)}) ==
          doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("convexity and round trip on random triples") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const DecompositionTriple t{random_image(3, 8, 8, rng), random_image(3, 8, 8, rng), random_mask(8, 8, rng)};
        const ImageTensor out = compose(t);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const float b = t.background.at(c, y, x);
                    const float r = t.raindrop.at(c, y, x);
                    REQUIRE(out.at(c, y, x) >= std::min(b, r));
                    REQUIRE(out.at(c, y, x) <= std::max(b, r));
                }
        REQUIRE(residual(out, t) <= 1e-7);
    }
}

TEST_CASE("compose is linear in the background and in the raindrop layer") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    for (int trial = 0; trial < 50; ++trial) {
        const ImageTensor b1 = random_image(3, 8, 8, rng);
        const ImageTensor b2 = random_image(3, 8, 8, rng);
        const ImageTensor r = random_image(3, 8, 8, rng);
        const TransparencyMask a = random_mask(8, 8, rng);
        const float w = u(rng);
        Tensor mixed(Shape{1, 3, 8, 8});
        for (std::size_t i = 0; i < mixed.numel(); ++i)
            mixed[i] = w * b1.tensor()[i] + (1.0f - w) * b2.tensor()[i];
        const ImageTensor lhs = compose({ImageTensor(mixed), r, a});
        const ImageTensor c1 = compose({b1, r, a});
        const ImageTensor c2 = compose({b2, r, a});
        const ImageTensor lhs_r = compose({r, ImageTensor(mixed), a});
        const ImageTensor d1 = compose({r, b1, a});
        const ImageTensor d2 = compose({r, b2, a});
        for (std::size_t i = 0; i < mixed.numel(); ++i) {
            const double rhs = w * double(c1.tensor()[i]) + (1.0 - w) * c2.tensor()[i];
            REQUIRE(std::abs(lhs.tensor()[i] - rhs) <= 1e-6);
            const double rhs_r = w * double(d1.tensor()[i]) + (1.0 - w) * d2.tensor()[i];
            REQUIRE(std::abs(lhs_r.tensor()[i] - rhs_r) <= 1e-6);
        }
    }
}
