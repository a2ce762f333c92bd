#pragma once

#include <string>
#include <vector>

#include "derain/decomposition.hpp"

namespace derain::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericAbort = 3 };

/// Environment variable that forces deterministic training ("1") or not ("0").
inline constexpr const char* kDeterministicEnv = "DERAIN_DETERMINISTIC";

/// Entry point of the `derain` tool: train, eval, infer, decompose, synth.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

/// Reflect-pads bottom and right edges up to the next multiple.
ImageTensor pad_to_multiple(const ImageTensor& image, int multiple);
/// Top-left height x width window.
ImageTensor crop_top_left(const ImageTensor& image, int height, int width);

} // namespace derain::cli
