#include <algorithm>
#include <utility>

#include <Eigen/Core>

#include "derain/autograd.hpp"
#include "derain/errors.hpp"

namespace derain::ag {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Sliding-window geometry of a plain convolution over an image of
// `channels` x in_h x in_w.
struct Geometry {
    int channels;
    int in_h;
    int in_w;
    int kernel;
    int stride;
    int pad;
    int out_h;
    int out_w;

    int rows() const { return channels * kernel * kernel; }
    int cols() const { return out_h * out_w; }
};

// Output columns [lo, hi) whose input column ox * stride - pad + kx lies inside [0, in_w).
std::pair<int, int> valid_columns(const Geometry& g, int kx) {
    const int shift = kx - g.pad;
    int lo = shift >= 0 ? 0 : (-shift + g.stride - 1) / g.stride;
    int hi = g.in_w - shift <= 0 ? 0 : (g.in_w - shift - 1) / g.stride + 1;
    lo = std::min(lo, g.out_w);
    hi = std::clamp(hi, lo, g.out_w);
    return {lo, hi};
}

void im2col(const float* img, const Geometry& g, float* cols) {
    const int ncols = g.cols();
    for (int c = 0; c < g.channels; ++c) {
        const float* plane = img + static_cast<std::ptrdiff_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kernel; ++ky)
            for (int kx = 0; kx < g.kernel; ++kx) {
                float* row = cols + static_cast<std::ptrdiff_t>((c * g.kernel + ky) * g.kernel + kx) * ncols;
                const auto [lo, hi] = valid_columns(g, kx);
                const int shift = kx - g.pad;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    float* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= g.in_h) {
                        std::fill_n(dst, g.out_w, 0.0f);
                        continue;
                    }
                    const float* src = plane + iy * g.in_w + shift;
                    std::fill_n(dst, lo, 0.0f);
                    if (g.stride == 1) {
                        std::copy(src + lo, src + hi, dst + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride];
                    }
                    std::fill(dst + hi, dst + g.out_w, 0.0f);
                }
            }
    }
}

void col2im(const float* cols, const Geometry& g, float* img) {
    const int ncols = g.cols();
    for (int c = 0; c < g.channels; ++c) {
        float* plane = img + static_cast<std::ptrdiff_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kernel; ++ky)
            for (int kx = 0; kx < g.kernel; ++kx) {
                const float* row = cols + static_cast<std::ptrdiff_t>((c * g.kernel + ky) * g.kernel + kx) * ncols;
                const auto [lo, hi] = valid_columns(g, kx);
                const int shift = kx - g.pad;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    const float* src = row + oy * g.out_w;
                    float* dst = plane + iy * g.in_w + shift;
                    if (g.stride == 1) {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] += src[ox];
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox * g.stride] += src[ox];
                    }
                }
            }
    }
}

void check_weight(const Shape& w, int in_channels, bool transposed) {
    const int wc = transposed ? w.n : w.c;
    if (w.h != w.w || wc != in_channels) {
        throw StructuralError(std::string(transposed ? "conv_transpose2d" : "conv2d") + ": weight " +
                              w.str() + " does not accept " + std::to_string(in_channels) +
                              " input channels");
    }
}

void add_bias(Tensor& out, const Var& bias) {
    if (!bias) return;
    const Shape s = out.shape();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            float* p = out.plane(n, c);
            const float b = bias.value()[static_cast<std::size_t>(c)];
            for (std::size_t i = 0; i < s.plane(); ++i) p[i] += b;
        }
}

void bias_backward(Node& self, Node& bias) {
    if (!bias.requires_grad) return;
    const Shape s = self.value.shape();
    Tensor& g = bias.grad_buffer();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float* dy = self.grad.plane(n, c);
            double sum = 0.0;
            for (std::size_t i = 0; i < s.plane(); ++i) sum += dy[i];
            g[static_cast<std::size_t>(c)] += static_cast<float>(sum);
        }
}

} // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
    const Shape s = x.shape();
    const Shape ws = weight.shape();
    check_weight(ws, s.c, false);
    const int k = ws.h;
    const int out_h = (s.h + 2 * pad - k) / stride + 1;
    const int out_w = (s.w + 2 * pad - k) / stride + 1;
    if (s.h + 2 * pad < k || s.w + 2 * pad < k || out_h < 1 || out_w < 1) {
        throw StructuralError("conv2d: input " + s.str() + " smaller than kernel " + std::to_string(k));
    }
    const Geometry g{s.c, s.h, s.w, k, stride, pad, out_h, out_w};
    const int cout = ws.n;
    Tensor out(Shape{s.n, cout, out_h, out_w});
    std::vector<float> cols(static_cast<std::size_t>(g.rows()) * g.cols());
    const ConstMap w(weight.value().data(), cout, g.rows());
    for (int n = 0; n < s.n; ++n) {
        im2col(x.value().plane(n, 0), g, cols.data());
        MutMap o(out.plane(n, 0), cout, g.cols());
        o.noalias() = w * ConstMap(cols.data(), g.rows(), g.cols());
    }
    add_bias(out, bias);

    std::vector<Var> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_result(std::move(out), std::move(parents), [g, cout](Node& self) {
        Node& xn = *self.parents[0];
        Node& wn = *self.parents[1];
        if (self.parents.size() > 2) bias_backward(self, *self.parents[2]);
        const int batch = self.value.shape().n;
        const ConstMap w(wn.value.data(), cout, g.rows());
        std::vector<float> cols(static_cast<std::size_t>(g.rows()) * g.cols());
        RowMat dcols;
        for (int n = 0; n < batch; ++n) {
            const ConstMap dy(self.grad.plane(n, 0), cout, g.cols());
            if (wn.requires_grad) {
                im2col(xn.value.plane(n, 0), g, cols.data());
                MutMap dw(wn.grad_buffer().data(), cout, g.rows());
                dw.noalias() += dy * ConstMap(cols.data(), g.rows(), g.cols()).transpose();
            }
            if (xn.requires_grad) {
                dcols.noalias() = w.transpose() * dy;
                col2im(dcols.data(), g, xn.grad_buffer().plane(n, 0));
            }
        }
    });
}

Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad,
                     int output_pad) {
    const Shape s = x.shape();
    const Shape ws = weight.shape();
    check_weight(ws, s.c, true);
    const int k = ws.h;
    const int cout = ws.c;
    const int out_h = (s.h - 1) * stride - 2 * pad + k + output_pad;
    const int out_w = (s.w - 1) * stride - 2 * pad + k + output_pad;
    if (out_h < 1 || out_w < 1) throw StructuralError("conv_transpose2d: empty output for " + s.str());
    // the adjoint convolution maps the output grid back onto the input grid
    const Geometry g{cout, out_h, out_w, k, stride, pad, s.h, s.w};
    if ((out_h + 2 * pad - k) / stride + 1 != s.h || (out_w + 2 * pad - k) / stride + 1 != s.w) {
        throw StructuralError("conv_transpose2d: inconsistent geometry for " + s.str());
    }
    const int cin = s.c;
    Tensor out(Shape{s.n, cout, out_h, out_w});
    const ConstMap w(weight.value().data(), cin, g.rows());
    RowMat cols;
    for (int n = 0; n < s.n; ++n) {
        cols.noalias() = w.transpose() * ConstMap(x.value().plane(n, 0), cin, g.cols());
        col2im(cols.data(), g, out.plane(n, 0));
    }
    add_bias(out, bias);

    std::vector<Var> parents{x, weight};
    if (bias) parents.push_back(bias);
    return make_result(std::move(out), std::move(parents), [g, cin](Node& self) {
        Node& xn = *self.parents[0];
        Node& wn = *self.parents[1];
        if (self.parents.size() > 2) bias_backward(self, *self.parents[2]);
        const int batch = self.value.shape().n;
        const ConstMap w(wn.value.data(), cin, g.rows());
        std::vector<float> cols(static_cast<std::size_t>(g.rows()) * g.cols());
        for (int n = 0; n < batch; ++n) {
            im2col(self.grad.plane(n, 0), g, cols.data());
            const ConstMap dcols(cols.data(), g.rows(), g.cols());
            if (xn.requires_grad) {
                MutMap dx(xn.grad_buffer().plane(n, 0), cin, g.cols());
                dx.noalias() += w * dcols;
            }
            if (wn.requires_grad) {
                MutMap dw(wn.grad_buffer().data(), cin, g.rows());
                dw.noalias() += ConstMap(xn.value.plane(n, 0), cin, g.cols()) * dcols.transpose();
            }
        }
    });
}

} // namespace derain::ag
