#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "derain/cli.hpp"
#include "derain/image_io.hpp"
#include "derain/training.hpp"
#include "temp_dir.hpp"

using namespace derain;
using testing::TempDir;

namespace {

struct Outcome {
    int code = -1;
    std::string output; // stdout and stderr
};

Outcome invoke(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + DERAIN_CLI_PATH + " " + args + " 2>&1";
    Outcome o;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe)) o.output += buf;
    const int status = pclose(pipe);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream is(p);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

// Values of one tab-separated metrics column, header skipped.
std::vector<double> column(const std::string& tsv, int index) {
    std::vector<double> out;
    std::istringstream lines(tsv);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
        std::istringstream fields(line);
        std::string field;
        for (int i = 0; i <= index; ++i) std::getline(fields, field, '\t');
        out.push_back(std::stod(field));
    }
    return out;
}

const std::string kTinyArch =
    "--gen_width 4 --gen_blocks 1 --disc_width 4 --iterations 2 --crop 32 --batch_size 2 --weight_decay 0 "
    "--checkpoint_every 0";
const std::string kTinyTrain = kTinyArch + " --optimizer adam --max_steps 2";

// Synthetic flat dataset plus a trained tiny checkpoint, shared by the tests below.
struct Fixture {
    TempDir dir;
    std::filesystem::path data = dir / "data";
    std::filesystem::path run = dir / "run";

    Fixture() {
        REQUIRE(invoke("synth --out " + data.string() + " --count 4 --size 36 --seed 2").code == 0);
        const Outcome o = invoke("train --rainy " + (data / "rain").string() + " --clean " + (data / "clean").string() +
                                 " --out " + run.string() + " " + kTinyTrain);
        INFO(o.output);
        REQUIRE(o.code == 0);
    }
    std::string checkpoint() const { return (run / kFinalCheckpoint).string(); }
};

} // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(invoke("").code == 1);
    CHECK(invoke("frobnicate").code == 1);
    CHECK(invoke("train --rainy a").code == 1);
    CHECK(invoke("--help").code == 0);
}

TEST_CASE("train --help lists every config key with its default") {
    const Outcome o = invoke("train --help");
    CHECK(o.code == 0);
    const TrainConfig defaults;
    for (const auto& key : config_keys()) {
        CAPTURE(key);
        CHECK(o.output.find("--" + key) != std::string::npos);
        CHECK(o.output.find(get_config_value(defaults, key)) != std::string::npos);
    }
    CHECK(o.output.find("400") != std::string::npos);
    for (const char* sub : {"infer", "decompose", "eval"}) CHECK(invoke(std::string(sub) + " --help").output.find("--pad") != std::string::npos);
}

TEST_CASE("a missing data directory exits with 2 and names the path") {
    TempDir dir;
    const std::string missing = (dir / "nowhere").string();
    const Outcome o = invoke("train --rainy " + missing + " --clean " + missing + " --out " + (dir / "o").string());
    CHECK(o.code == 2);
    CHECK(o.output.find(missing) != std::string::npos);
}

TEST_CASE("invalid config values exit with 1") {
    TempDir dir;
    const Outcome o = invoke("train --rainy . --clean . --out " + (dir / "o").string() + " --crop 30");
    CHECK(o.code == 1);
    CHECK(o.output.find("crop") != std::string::npos);
    { std::ofstream(dir / "bad.cfg") << "no_such_key = 1\n"; }
    CHECK(invoke("train --rainy . --clean . --out " + (dir / "o").string() + " --config " + (dir / "bad.cfg").string())
              .code == 1);
}

TEST_CASE("synth writes the four layers and a manifest") {
    TempDir dir;
    REQUIRE(invoke("synth --out " + dir.path().string() + " --count 3 --size 24 --channels 1").code == 0);
    for (const char* sub : {"rain", "clean", "raindrop", "mask"}) {
        CHECK(std::filesystem::exists(dir / sub / "0002.png"));
        CHECK_FALSE(std::filesystem::exists(dir / sub / "0003.png"));
    }
    CHECK(load_image(dir / "rain" / "0000.png", 1).height() == 24);
    const std::string manifest = read_file(dir / "manifest.txt");
    CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 4);
}

TEST_CASE("train, decompose, infer and eval end to end") {
    Fixture f;
    CHECK(std::filesystem::exists(f.run / "config.txt"));
    CHECK(column(read_file(f.run / kMetricsFile), 0) == std::vector<double>{1, 2});

    SUBCASE("decompose writes every iteration at the input size") {
        const std::string out = (f.dir / "dec").string();
        const Outcome o =
            invoke("decompose --checkpoint " + f.checkpoint() + " --image " + (f.data / "rain" / "0001.png").string() +
                   " --out " + out);
        REQUIRE(o.code == 0);
        for (int i = 1; i <= 2; ++i)
            for (const char* layer : {"background", "raindrop", "mask", "reconstruction"})
                CHECK(std::filesystem::exists(f.dir / "dec" / ("0001_" + std::string(layer) + "_iter" +
                                                               std::to_string(i) + ".png")));
        CHECK(std::filesystem::exists(f.dir / "dec" / "mask_colorbar.png"));
        CHECK(load_image(f.dir / "dec" / "0001_background_iter2.png").width() == 36);
    }

    SUBCASE("inputs off the stride grid need --pad") {
        ImageTensor odd(3, 30, 30, 0.5f);
        save_image(f.dir / "odd.png", odd);
        const std::string base =
            "decompose --checkpoint " + f.checkpoint() + " --image " + (f.dir / "odd.png").string() + " --out ";
        const Outcome plain = invoke(base + (f.dir / "a").string());
        CHECK(plain.code == 1);
        CHECK(plain.output.find("multiple of 4") != std::string::npos);
        CHECK(plain.output.find("--pad") != std::string::npos);
        REQUIRE(invoke(base + (f.dir / "b").string() + " --pad").code == 0);
        const ImageTensor bg = load_image(f.dir / "b" / "odd_background_iter2.png");
        CHECK(bg.height() == 30);
        CHECK(bg.width() == 30);
    }

    SUBCASE("infer writes one background per input") {
        REQUIRE(invoke("infer --checkpoint " + f.checkpoint() + " --input " + (f.data / "rain").string() + " --out " +
                       (f.dir / "inf").string())
                    .code == 0);
        for (const auto& p : std::filesystem::directory_iterator(f.data / "rain"))
            CHECK(std::filesystem::exists(f.dir / "inf" / p.path().filename()));
    }

    SUBCASE("eval reports per-image and mean metrics") {
        const auto report = f.dir / "report.tsv";
        const Outcome o = invoke("eval --checkpoint " + f.checkpoint() + " --data " + f.data.string() +
                                 " --layout flat --report " + report.string());
        REQUIRE(o.code == 0);
        CHECK(o.output.find("pairs 4") != std::string::npos);
        const std::string text = read_file(report);
        CHECK(text.rfind("filename\tpsnr\tssim\n", 0) == 0);
        CHECK(text.find("\nmean\t") != std::string::npos);
        CHECK(std::count(text.begin(), text.end(), '\n') == 6);
    }

    SUBCASE("a checkpoint with the wrong file type is a data error") {
        { std::ofstream(f.dir / "junk.ckpt") << "junk"; }
        const Outcome o = invoke("infer --checkpoint " + (f.dir / "junk.ckpt").string() + " --input " +
                                 (f.data / "rain").string() + " --out " + (f.dir / "x").string());
        CHECK(o.code == 2);
        CHECK(o.output.find("not a checkpoint") != std::string::npos);
    }

    SUBCASE("resume continues the metrics log") {
        const Outcome o = invoke("train --rainy " + (f.data / "rain").string() + " --clean " +
                                 (f.data / "clean").string() + " --out " + f.run.string() + " " + kTinyArch +
                                 " --optimizer adam --max_steps 3 --resume " + f.checkpoint());
        REQUIRE(o.code == 0);
        CHECK(column(read_file(f.run / kMetricsFile), 0) == std::vector<double>{1, 2, 3});
    }
}

TEST_CASE("--ablation no_cyc logs a zero cycle column") {
    TempDir dir;
    REQUIRE(invoke("synth --out " + (dir / "d").string() + " --count 4 --size 36").code == 0);
    const Outcome o = invoke("train --rainy " + (dir / "d" / "rain").string() + " --clean " +
                             (dir / "d" / "clean").string() + " --out " + (dir / "r").string() + " " + kTinyTrain +
                             " --ablation no_cyc");
    REQUIRE(o.code == 0);
    const std::string log = read_file(dir / "r" / kMetricsFile);
    for (double v : column(log, 2)) CHECK(v == 0.0);
    for (double v : column(log, 3)) CHECK(v > 0.0);
}

TEST_CASE("determinism follows the environment switch") {
    TempDir dir;
    REQUIRE(invoke("synth --out " + (dir / "d").string() + " --count 4 --size 36").code == 0);
    const auto train = [&](const std::string& out, const std::string& env) {
        REQUIRE(invoke("train --rainy " + (dir / "d" / "rain").string() + " --clean " +
                           (dir / "d" / "clean").string() + " --out " + (dir / out).string() + " " + kTinyTrain,
                       env)
                    .code == 0);
        return read_file(dir / out / kMetricsFile);
    };
    CHECK(train("a", "") == train("b", std::string(cli::kDeterministicEnv) + "=1"));
    CHECK_FALSE(train("c", std::string(cli::kDeterministicEnv) + "=0") == train("d", std::string(cli::kDeterministicEnv) + "=0"));
}

TEST_CASE("diverging training exits with 3") {
    TempDir dir;
    REQUIRE(invoke("synth --out " + (dir / "d").string() + " --count 4 --size 36").code == 0);
    const Outcome o = invoke("train --rainy " + (dir / "d" / "rain").string() + " --clean " +
                             (dir / "d" / "clean").string() + " --out " + (dir / "r").string() + " " + kTinyArch +
                             " --optimizer sgd --learning_rate 1e30 --max_steps 4");
    INFO(o.output);
    CHECK(o.code == 3);
    CHECK(o.output.find("step") != std::string::npos);
}

TEST_CASE("reflect padding mirrors the last rows and columns") {
    Tensor t(Shape{1, 1, 3, 3});
    for (int i = 0; i < 9; ++i) t[i] = static_cast<float>(i) / 8.0f;
    const ImageTensor p = cli::pad_to_multiple(ImageTensor(t), 4);
    CHECK(p.height() == 4);
    CHECK(p.width() == 4);
    // rows and columns 0 1 2 1
    const float expected[4][4] = {{0, 1, 2, 1}, {3, 4, 5, 4}, {6, 7, 8, 7}, {3, 4, 5, 4}};
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(p.at(0, y, x) == expected[y][x] / 8.0f);
    CHECK(cli::crop_top_left(p, 3, 3) == ImageTensor(t));
    CHECK_THROWS(cli::pad_to_multiple(ImageTensor(Tensor(Shape{1, 1, 2, 2})), 4));
}
