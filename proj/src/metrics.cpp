#include "derain/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "derain/errors.hpp"

namespace derain {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

void require_same(const ImageTensor& a, const ImageTensor& b, const char* what) {
    if (!(a.tensor().shape() == b.tensor().shape())) {
        throw StructuralError(std::string(what) + ": shapes " + a.tensor().shape().str() + " and " +
                              b.tensor().shape().str() + " differ");
    }
}

std::array<double, kWindow> gaussian_taps() {
    std::array<double, kWindow> taps{};
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        taps[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        sum += taps[i];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

// Valid-region separable filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w,
                                 const std::array<double, kWindow>& taps) {
    const int oh = h - kWindow + 1;
    const int ow = w - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += taps[k] * src[static_cast<std::size_t>(y) * w + x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) acc += taps[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

} // namespace

double psnr(const ImageTensor& a, const ImageTensor& b, double peak) {
    require_same(a, b, "psnr");
    const auto x = a.tensor().values();
    const auto y = b.tensor().values();
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(x.size());
    if (mse == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

double ssim(const ImageTensor& a, const ImageTensor& b, double peak) {
    require_same(a, b, "ssim");
    const int h = a.height();
    const int w = a.width();
    if (h < kWindow || w < kWindow) {
        throw StructuralError("ssim needs images of at least 11x11, got " + std::to_string(h) + "x" +
                              std::to_string(w));
    }
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const auto taps = gaussian_taps();
    const std::size_t plane = static_cast<std::size_t>(h) * w;

    double total = 0.0;
    for (int c = 0; c < a.channels(); ++c) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        const float* pa = a.tensor().plane(0, c);
        const float* pb = b.tensor().plane(0, c);
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = pa[i];
            y[i] = pb[i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, taps);
        const auto my = filter_valid(y, h, w, taps);
        const auto exx = filter_valid(xx, h, w, taps);
        const auto eyy = filter_valid(yy, h, w, taps);
        const auto exy = filter_valid(xy, h, w, taps);
        double sum = 0.0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = exx[i] - mx[i] * mx[i];
            const double vy = eyy[i] - my[i] * my[i];
            const double cov = exy[i] - mx[i] * my[i];
            const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2);
            const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
            sum += num / den;
        }
        total += sum / static_cast<double>(mx.size());
    }
    return total / a.channels();
}

MetricReport evaluate_pairs(std::span<const ImageTensor> outputs, std::span<const ImageTensor> truths) {
    if (outputs.size() != truths.size()) {
        throw StructuralError("evaluate_pairs: " + std::to_string(outputs.size()) + " outputs vs " +
                              std::to_string(truths.size()) + " references");
    }
    if (outputs.empty()) throw StructuralError("evaluate_pairs: no image pairs");
    MetricReport r;
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        r.psnr_db += psnr(outputs[i], truths[i]);
        r.ssim += ssim(outputs[i], truths[i]);
    }
    r.count = static_cast<int>(outputs.size());
    r.psnr_db /= r.count;
    r.ssim /= r.count;
    return r;
}

} // namespace derain
