#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "derain/checkpoint.hpp"
#include "derain/errors.hpp"
#include "temp_dir.hpp"

using namespace derain;
using testing::TempDir;

namespace {

GeneratorConfig small_generator(int channels = 3) {
    GeneratorConfig c;
    c.channels = channels;
    c.base_width = 4;
    c.residual_blocks = 1;
    c.iterations = 2;
    c.mask_activation = HeadActivation::hard_sigmoid;
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

} // namespace

TEST_CASE("archives round-trip tensors and metadata") {
    TempDir dir;
    Archive a;
    a.meta["answer"] = 42;
    Tensor t(Shape{2, 1, 3, 2});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(i) * 0.25f - 1.0f;
    a.tensors["x/y"] = t;
    a.tensors["empty"] = Tensor(Shape{0, 0, 0, 0});
    write_archive(dir / "a.ckpt", a);
    const Archive b = read_archive(dir / "a.ckpt");
    CHECK(b.meta == a.meta);
    CHECK(b.tensors.at("x/y") == t);
    CHECK(b.tensors.size() == 2);
    CHECK_FALSE(std::filesystem::exists(dir / "a.ckpt.tmp"));
}

TEST_CASE("the header is the magic string and a little-endian version") {
    TempDir dir;
    write_archive(dir / "a.ckpt", Archive{});
    const std::string bytes = slurp(dir / "a.ckpt");
    REQUIRE(bytes.size() >= 12);
    CHECK(bytes.substr(0, 8) == "DRNCKPT1");
    const auto* u = reinterpret_cast<const unsigned char*>(bytes.data() + 8);
    CHECK(u[0] + (u[1] << 8) + (u[2] << 16) + (u[3] << 24) == static_cast<int>(kCheckpointVersion));
}

TEST_CASE("a version mismatch names both versions") {
    TempDir dir;
    write_archive(dir / "old.ckpt", Archive{}, 7);
    try {
        read_archive(dir / "old.ckpt");
        FAIL("expected a structural error");
    } catch (const StructuralError& e) {
        const std::string msg = e.what();
        CHECK(msg.find('7') != std::string::npos);
        CHECK(msg.find(std::to_string(kCheckpointVersion)) != std::string::npos);
    }
}

TEST_CASE("corrupt files are rejected") {
    TempDir dir;
    { std::ofstream(dir / "junk.ckpt") << "definitely not a checkpoint"; }
    CHECK_THROWS_AS(read_archive(dir / "junk.ckpt"), StructuralError);
    CHECK_THROWS_AS(read_archive(dir / "missing.ckpt"), IoError);

    Archive a;
    a.tensors["w"] = Tensor(Shape{1, 1, 4, 4}, 1.0f);
    write_archive(dir / "full.ckpt", a);
    const std::string bytes = slurp(dir / "full.ckpt");
    { std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 10); }
    CHECK_THROWS_AS(read_archive(dir / "cut.ckpt"), StructuralError);
}

TEST_CASE("generators round-trip with their configuration") {
    TempDir dir;
    Generator g(small_generator(), 3);
    for (auto& e : g.parameters().entries())
        for (float& v : e.var.mutable_value().values()) v += 0.01f;
    Archive a;
    store_generator(a, g);
    write_archive(dir / "g.ckpt", a);
    const Generator back = load_generator(dir / "g.ckpt");
    CHECK(back.config().iterations == 2);
    CHECK(back.config().mask_activation == HeadActivation::hard_sigmoid);
    CHECK(back.parameters().snapshot() == g.parameters().snapshot());
    const ImageTensor x(3, 16, 16, 0.3f);
    CHECK(run_generator(back, x).triples.back().background == run_generator(g, x).triples.back().background);
}

TEST_CASE("loading with a different channel count fails") {
    Archive a;
    store_generator(a, Generator(small_generator(1), 0));
    CHECK_NOTHROW(load_generator(a, 1));
    CHECK_THROWS_AS(load_generator(a, 3), StructuralError);
}

TEST_CASE("missing or reshaped parameters fail to restore") {
    Generator g(small_generator(), 0);
    Archive a;
    store_generator(a, g);
    Archive missing = a;
    missing.tensors.erase("generator/out.weight");
    CHECK_THROWS_AS(load_generator(missing), StructuralError);
    Archive reshaped = a;
    reshaped.tensors["generator/out.bias"] = Tensor(Shape{1, 1, 1, 3});
    CHECK_THROWS_AS(load_generator(reshaped), StructuralError);
}
