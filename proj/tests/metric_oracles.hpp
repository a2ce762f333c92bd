#pragma once

#include <cmath>

#include "derain/decomposition.hpp"

namespace testing {

/// 10 log10(1 / MSE) straight from the definition.
inline double psnr_oracle(const derain::ImageTensor& a, const derain::ImageTensor& b) {
    double sum = 0.0;
    const auto x = a.tensor().values();
    const auto y = b.tensor().values();
    for (std::size_t i = 0; i < x.size(); ++i) sum += (double(x[i]) - y[i]) * (double(x[i]) - y[i]);
    return 10.0 * std::log10(1.0 / (sum / x.size()));
}

/// Brute-force SSIM: for every full 11x11 window, two-pass weighted moments
/// under a 2-D Gaussian built directly (not separably), per channel.
inline double ssim_oracle(const derain::ImageTensor& a, const derain::ImageTensor& b) {
    constexpr int k = 11;
    double g[k][k];
    double norm = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double di = i - 5, dj = j - 5;
            g[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
            norm += g[i][j];
        }
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        double sum = 0.0;
        int windows = 0;
        for (int y0 = 0; y0 + k <= a.height(); ++y0)
            for (int x0 = 0; x0 + k <= a.width(); ++x0) {
                double mx = 0.0, my = 0.0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        mx += g[i][j] / norm * a.at(c, y0 + i, x0 + j);
                        my += g[i][j] / norm * b.at(c, y0 + i, x0 + j);
                    }
                double vx = 0.0, vy = 0.0, cov = 0.0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        const double w = g[i][j] / norm;
                        const double dx = a.at(c, y0 + i, x0 + j) - mx;
                        const double dy = b.at(c, y0 + i, x0 + j) - my;
                        vx += w * dx * dx;
                        vy += w * dy * dy;
                        cov += w * dx * dy;
                    }
                sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
        total += sum / windows;
    }
    return total / a.channels();
}

} // namespace testing
