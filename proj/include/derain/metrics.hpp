#pragma once

#include <span>

#include "derain/decomposition.hpp"

namespace derain {

/// Returned for identical images instead of +inf.
inline constexpr double kPsnrCapDb = 99.0;

struct MetricReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    int count = 0;
};

/// 10 log10(peak^2 / MSE) over all channels, capped at kPsnrCapDb.
double psnr(const ImageTensor& a, const ImageTensor& b, double peak = 1.0);

/// Mean SSIM over every full 11x11 Gaussian window (sigma 1.5), per channel,
/// averaged over channels. No grayscale conversion.
double ssim(const ImageTensor& a, const ImageTensor& b, double peak = 1.0);

/// Arithmetic means of psnr and ssim over index-aligned pairs.
MetricReport evaluate_pairs(std::span<const ImageTensor> outputs, std::span<const ImageTensor> truths);

} // namespace derain
