#include <doctest.h>

#include <random>

#include "derain/discriminator.hpp"
#include "derain/errors.hpp"

using namespace derain;
using ag::Var;

namespace {

// floor((n + 2p - k) / s) + 1 through three stride-2 and two stride-1 k4 p1 layers
int patch_grid(int n) {
    for (int stride : {2, 2, 2, 1, 1}) {
        if (n + 2 < 4) return 0;
        n = (n + 2 - 4) / stride + 1;
    }
    return n;
}

DiscriminatorConfig narrow() {
    DiscriminatorConfig c;
    c.base_width = 4;
    return c;
}

Tensor random_image(Shape s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Tensor t(s);
    for (float& v : t.values()) v = u(rng);
    return t;
}

} // namespace

TEST_CASE("256x256 input gives a 30x30 score map") {
    CHECK(patch_grid(256) == 30);
    const Discriminator d(DiscriminatorConfig{}, 0);
    CHECK(d.output_shape(256, 256) == Shape{1, 1, 30, 30});
    const ScoreMap s = score(Discriminator(narrow(), 0), ImageTensor(random_image(Shape{1, 3, 256, 256}, 1)));
    CHECK(s.height() == 30);
    CHECK(s.width() == 30);
}

TEST_CASE("output shape follows the layer arithmetic") {
    const Discriminator d(narrow(), 0);
    for (int h : {24, 25, 31, 32, 40, 64, 70, 100}) {
        for (int w : {24, 33, 64}) {
            const Shape o = d.output_shape(h, w);
            CHECK(o.h == patch_grid(h));
            CHECK(o.w == patch_grid(w));
        }
    }
    const Var out = d.forward(Var(random_image(Shape{2, 3, 40, 64}, 2)));
    CHECK(out.shape() == Shape{2, 1, patch_grid(40), patch_grid(64)});
}

TEST_CASE("minimum input size yields a single cell") {
    int oracle = 1;
    while (patch_grid(oracle) < 1) ++oracle;
    const Discriminator d(narrow(), 0);
    CHECK(d.min_input_size() == oracle);
    const ScoreMap s = score(d, ImageTensor(random_image(Shape{1, 3, oracle, oracle}, 3)));
    CHECK(s.height() == 1);
    CHECK(s.width() == 1);
    try {
        score(d, ImageTensor(3, oracle - 1, oracle - 1));
        FAIL("expected a structural error");
    } catch (const StructuralError& e) {
        CHECK(std::string(e.what()).find(std::to_string(oracle)) != std::string::npos);
    }
}

TEST_CASE("scores are deterministic and depend only on input") {
    const Discriminator d(narrow(), 4);
    const ImageTensor x(random_image(Shape{1, 3, 64, 64}, 5));
    CHECK(score(d, x).tensor() == score(d, x).tensor());
    CHECK(score(Discriminator(narrow(), 4), x).tensor() == score(d, x).tensor());
    CHECK_FALSE(score(Discriminator(narrow(), 5), x).tensor() == score(d, x).tensor());
}

TEST_CASE("shifting by the stride product shifts the map by one cell") {
    const Discriminator d(narrow(), 6);
    const int size = 256;
    const int shift = 8; // 2 * 2 * 2
    const Tensor pattern = random_image(Shape{1, 3, 24, 24}, 7);
    const auto place = [&](int dx) {
        Tensor t(Shape{1, 3, size, size}, 0.0f);
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 24; ++y)
                for (int x = 0; x < 24; ++x) t.at(0, c, 116 + y, 108 + dx + x) = pattern.at(0, c, y, x);
        return t;
    };
    ag::NoGradGuard no_grad;
    const Tensor a = d.forward(Var(place(0))).value();
    const Tensor b = d.forward(Var(place(shift))).value();
    const Shape s = a.shape();
    int compared = 0;
    // cells whose receptive field stays clear of the zero-padded border
    for (int y = 6; y < s.h - 6; ++y)
        for (int x = 6; x < s.w - 7; ++x) {
            CHECK(b.at(0, 0, y, x + 1) == doctest::Approx(a.at(0, 0, y, x)).epsilon(1e-5));
            ++compared;
        }
    CHECK(compared > 50);
}

TEST_CASE("channel mismatch is rejected") {
    const Discriminator d(narrow(), 0);
    CHECK_THROWS_AS(d.forward(Var(Tensor(Shape{1, 1, 64, 64}))), StructuralError);
}
