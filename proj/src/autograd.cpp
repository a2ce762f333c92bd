#include "derain/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "derain/errors.hpp"

namespace derain::ag {

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

float Var::item() const {
    if (value().numel() != 1) throw StructuralError("item() on tensor " + shape().str());
    return value()[0];
}

namespace {
thread_local bool t_grad_enabled = true;
} // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = t_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                      [](const Var& p) { return p.requires_grad(); });
    if (node->requires_grad) {
        node->parents.reserve(parents.size());
        for (const Var& p : parents) node->parents.push_back(p.shared());
        node->backward = std::move(backward);
    }
    return Var(std::move(node));
}

namespace {

std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order; // parents before children
}

} // namespace

void backward(const Var& root) {
    if (!root.requires_grad()) return;
    if (root.value().numel() != 1) throw StructuralError("backward needs a scalar root");
    Node* r = root.node();
    r->grad_buffer()[0] += 1.0f;
    const auto order = topo_order(r);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && !n->grad.empty()) n->backward(*n);
    }
}

std::vector<const Node*> collect_leaves(const Var& root) {
    std::vector<const Node*> leaves;
    if (!root.requires_grad()) return leaves;
    for (Node* n : topo_order(root.node())) {
        if (n->parents.empty()) leaves.push_back(n);
    }
    return leaves;
}

Var detach(const Var& x) { return Var(x.value(), false); }

namespace {

template <class Fwd, class Bwd>
Var unary(const Var& x, Fwd fwd, Bwd bwd) {
    Tensor out(x.shape());
    const auto in = x.value().values();
    auto o = out.values();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = fwd(in[i]);
    return make_result(std::move(out), {x}, [bwd](Node& self) {
        Node& p = *self.parents[0];
        if (!p.requires_grad) return;
        auto g = p.grad_buffer().values();
        const auto dy = self.grad.values();
        const auto xv = p.value.values();
        const auto yv = self.value.values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i] * bwd(xv[i], yv[i]);
    });
}

void require_same(const Shape& a, const Shape& b, const char* op) {
    if (!(a == b)) throw StructuralError(std::string(op) + ": " + a.str() + " vs " + b.str());
}

Tensor scalar(float v) { return Tensor(Shape{1, 1, 1, 1}, v); }

} // namespace

Var relu(const Var& x) {
    return unary(
        x, [](float v) { return v > 0.0f ? v : 0.0f; },
        [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Var leaky_relu(const Var& x, float slope) {
    return unary(
        x, [slope](float v) { return v > 0.0f ? v : slope * v; },
        [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Var sigmoid(const Var& x) {
    return unary(
        x, [](float v) { return kernels::sigmoid(v); },
        [](float, float y) { return y * (1.0f - y); });
}

Var hard_sigmoid(const Var& x) {
    return unary(
        x, [](float v) { return std::clamp(v / 6.0f + 0.5f, 0.0f, 1.0f); },
        [](float v, float) { return (v > -3.0f && v < 3.0f) ? 1.0f / 6.0f : 0.0f; });
}

Var add(const Var& a, const Var& b) {
    require_same(a.shape(), b.shape(), "add");
    Tensor out(a.shape());
    const auto av = a.value().values();
    const auto bv = b.value().values();
    auto o = out.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        const auto dy = self.grad.values();
        for (auto& p : self.parents) {
            if (!p->requires_grad) continue;
            auto g = p->grad_buffer().values();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy[i];
        }
    });
}

Var concat_channels(const Var& a, const Var& b) {
    const Shape sa = a.shape();
    const Shape sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw StructuralError("concat_channels: " + sa.str() + " vs " + sb.str());
    }
    Shape so{sa.n, sa.c + sb.c, sa.h, sa.w};
    Tensor out(so);
    const std::size_t pa = sa.c * sa.plane();
    const std::size_t pb = sb.c * sb.plane();
    for (int n = 0; n < sa.n; ++n) {
        std::copy_n(a.value().plane(n, 0), pa, out.plane(n, 0));
        std::copy_n(b.value().plane(n, 0), pb, out.plane(n, sa.c));
    }
    return make_result(std::move(out), {a, b}, [pa, pb](Node& self) {
        const int batch = self.value.shape().n;
        const int ca = self.parents[0]->value.shape().c;
        for (int n = 0; n < batch; ++n) {
            if (self.parents[0]->requires_grad) {
                float* g = self.parents[0]->grad_buffer().plane(n, 0);
                const float* dy = self.grad.plane(n, 0);
                for (std::size_t i = 0; i < pa; ++i) g[i] += dy[i];
            }
            if (self.parents[1]->requires_grad) {
                float* g = self.parents[1]->grad_buffer().plane(n, 0);
                const float* dy = self.grad.plane(n, ca);
                for (std::size_t i = 0; i < pb; ++i) g[i] += dy[i];
            }
        }
    });
}

Var slice_channels(const Var& x, int begin, int count) {
    const Shape s = x.shape();
    if (begin < 0 || count < 1 || begin + count > s.c) {
        throw StructuralError("slice_channels [" + std::to_string(begin) + ", +" +
                              std::to_string(count) + ") out of " + s.str());
    }
    Tensor out(Shape{s.n, count, s.h, s.w});
    const std::size_t len = count * s.plane();
    for (int n = 0; n < s.n; ++n) std::copy_n(x.value().plane(n, begin), len, out.plane(n, 0));
    return make_result(std::move(out), {x}, [begin, len](Node& self) {
        Node& p = *self.parents[0];
        for (int n = 0; n < self.value.shape().n; ++n) {
            float* g = p.grad_buffer().plane(n, begin);
            const float* dy = self.grad.plane(n, 0);
            for (std::size_t i = 0; i < len; ++i) g[i] += dy[i];
        }
    });
}

namespace {

int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

} // namespace

Var reflect_pad(const Var& x, int pad) {
    const Shape s = x.shape();
    if (pad < 0 || pad >= s.h || pad >= s.w) {
        throw StructuralError("reflect_pad " + std::to_string(pad) + " too large for " + s.str());
    }
    Shape so{s.n, s.c, s.h + 2 * pad, s.w + 2 * pad};
    Tensor out(so);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float* src = x.value().plane(n, c);
            float* dst = out.plane(n, c);
            for (int y = 0; y < so.h; ++y) {
                const int sy = reflect(y - pad, s.h);
                for (int xx = 0; xx < so.w; ++xx) dst[y * so.w + xx] = src[sy * s.w + reflect(xx - pad, s.w)];
            }
        }
    return make_result(std::move(out), {x}, [pad](Node& self) {
        Node& p = *self.parents[0];
        const Shape s = p.value.shape();
        const Shape so = self.value.shape();
        Tensor& g = p.grad_buffer();
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const float* dy = self.grad.plane(n, c);
                float* dst = g.plane(n, c);
                for (int y = 0; y < so.h; ++y) {
                    const int sy = reflect(y - pad, s.h);
                    for (int xx = 0; xx < so.w; ++xx) dst[sy * s.w + reflect(xx - pad, s.w)] += dy[y * so.w + xx];
                }
            }
    });
}

Var instance_norm(const Var& x, float eps) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    Tensor out(s);
    std::vector<float> inv_std(static_cast<std::size_t>(s.n) * s.c);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const float* src = x.value().plane(n, c);
            double sum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) sum += src[i];
            const double mean = sum / static_cast<double>(plane);
            double var = 0.0;
            for (std::size_t i = 0; i < plane; ++i) var += (src[i] - mean) * (src[i] - mean);
            var /= static_cast<double>(plane);
            const float is = static_cast<float>(1.0 / std::sqrt(var + eps));
            inv_std[static_cast<std::size_t>(n) * s.c + c] = is;
            float* dst = out.plane(n, c);
            const float m = static_cast<float>(mean);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - m) * is;
        }
    return make_result(std::move(out), {x}, [inv_std = std::move(inv_std), plane](Node& self) {
        Node& p = *self.parents[0];
        const Shape s = self.value.shape();
        Tensor& g = p.grad_buffer();
        const double inv_n = 1.0 / static_cast<double>(plane);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const float* dy = self.grad.plane(n, c);
                const float* xh = self.value.plane(n, c);
                double sum_dy = 0.0;
                double sum_dy_xh = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    sum_dy += dy[i];
                    sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
                }
                const float m_dy = static_cast<float>(sum_dy * inv_n);
                const float m_dyx = static_cast<float>(sum_dy_xh * inv_n);
                const float is = inv_std[static_cast<std::size_t>(n) * s.c + c];
                float* gx = g.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i) gx[i] += is * (dy[i] - m_dy - xh[i] * m_dyx);
            }
    });
}

Var compose(const Var& background, const Var& raindrop, const Var& mask) {
    const Shape s = background.shape();
    require_same(s, raindrop.shape(), "compose");
    const Shape sm = mask.shape();
    if (sm.n != s.n || sm.c != 1 || sm.h != s.h || sm.w != s.w) {
        throw StructuralError("compose: mask " + sm.str() + " vs image " + s.str());
    }
    Tensor out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const float* a = mask.value().plane(n, 0);
        for (int c = 0; c < s.c; ++c) {
            const float* b = background.value().plane(n, c);
            const float* r = raindrop.value().plane(n, c);
            float* o = out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) o[i] = (1.0f - a[i]) * b[i] + a[i] * r[i];
        }
    }
    return make_result(std::move(out), {background, raindrop, mask}, [plane](Node& self) {
        Node& bn = *self.parents[0];
        Node& rn = *self.parents[1];
        Node& an = *self.parents[2];
        const Shape s = self.value.shape();
        for (int n = 0; n < s.n; ++n) {
            const float* a = an.value.plane(n, 0);
            for (int c = 0; c < s.c; ++c) {
                const float* dy = self.grad.plane(n, c);
                if (bn.requires_grad) {
                    float* g = bn.grad_buffer().plane(n, c);
                    for (std::size_t i = 0; i < plane; ++i) g[i] += (1.0f - a[i]) * dy[i];
                }
                if (rn.requires_grad) {
                    float* g = rn.grad_buffer().plane(n, c);
                    for (std::size_t i = 0; i < plane; ++i) g[i] += a[i] * dy[i];
                }
                if (an.requires_grad) {
                    const float* b = bn.value.plane(n, c);
                    const float* r = rn.value.plane(n, c);
                    float* g = an.grad_buffer().plane(n, 0);
                    for (std::size_t i = 0; i < plane; ++i) g[i] += (r[i] - b[i]) * dy[i];
                }
            }
        }
    });
}

Var mean_abs_diff(const Var& a, const Var& b) {
    require_same(a.shape(), b.shape(), "mean_abs_diff");
    std::vector<float> ga(a.value().numel());
    std::vector<float> gb(b.value().numel());
    const float v = kernels::mean_abs_diff<float>(a.value().values(), b.value().values(), ga, gb);
    return make_result(scalar(v), {a, b}, [ga = std::move(ga), gb = std::move(gb)](Node& self) {
        const float dy = self.grad[0];
        const std::vector<float>* grads[] = {&ga, &gb};
        for (int k = 0; k < 2; ++k) {
            Node& p = *self.parents[k];
            if (!p.requires_grad) continue;
            auto g = p.grad_buffer().values();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy * (*grads[k])[i];
        }
    });
}

Var mean_abs(const Var& x) {
    std::vector<float> gx(x.value().numel());
    const float v = kernels::mean_abs<float>(x.value().values(), gx);
    return make_result(scalar(v), {x}, [gx = std::move(gx)](Node& self) {
        const float dy = self.grad[0];
        auto g = self.parents[0]->grad_buffer().values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy * gx[i];
    });
}

Var adversarial_d_loss(const Var& real_scores, const Var& fake_scores, AdversarialMode mode) {
    auto t = kernels::adversarial<float>(real_scores.value().values(), fake_scores.value().values(), mode);
    return make_result(scalar(t.d_loss), {real_scores, fake_scores},
                       [gr = std::move(t.d_grad_real), gf = std::move(t.d_grad_fake)](Node& self) {
                           const float dy = self.grad[0];
                           const std::vector<float>* grads[] = {&gr, &gf};
                           for (int k = 0; k < 2; ++k) {
                               Node& p = *self.parents[k];
                               if (!p.requires_grad) continue;
                               auto g = p.grad_buffer().values();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy * (*grads[k])[i];
                           }
                       });
}

Var adversarial_g_loss(const Var& fake_scores, AdversarialMode mode) {
    const auto fake = fake_scores.value().values();
    // the real half does not enter the generator term; reuse the kernel with fake as a stand-in
    auto t = kernels::adversarial<float>(fake, fake, mode);
    return make_result(scalar(t.g_loss), {fake_scores}, [gf = std::move(t.g_grad_fake)](Node& self) {
        const float dy = self.grad[0];
        auto g = self.parents[0]->grad_buffer().values();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += dy * gf[i];
    });
}

Var weighted_sum(std::span<const Var> terms, std::span<const double> weights) {
    if (terms.size() != weights.size()) throw StructuralError("weighted_sum: size mismatch");
    std::vector<Var> kept;
    std::vector<float> w;
    double total = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i].value().numel() != 1) throw StructuralError("weighted_sum over non-scalar");
        if (weights[i] == 0.0) continue;
        total += weights[i] * terms[i].item();
        kept.push_back(terms[i]);
        w.push_back(static_cast<float>(weights[i]));
    }
    return make_result(scalar(static_cast<float>(total)), kept, [w = std::move(w)](Node& self) {
        const float dy = self.grad[0];
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            Node& p = *self.parents[i];
            if (p.requires_grad) p.grad_buffer()[0] += dy * w[i];
        }
    });
}

} // namespace derain::ag
