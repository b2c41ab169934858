#include "core/ops.hpp"

#include <cmath>
#include <cstring>

#include "core/blas.hpp"
#include "core/error.hpp"

namespace steerlab::ops {
namespace {

bool grad_wanted(std::initializer_list<const Tensor*> inputs) {
    if (!GradTape::active()) return false;
    for (const Tensor* t : inputs)
        if (t->defined() && t->needs_grad()) return true;
    return false;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ContractError(std::string(op) + ": shape mismatch " +
                            shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

float sigmoid_f(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// im2col for 3x3/pad1: cols is [C*9, H*W], row index c*9 + ky*3 + kx.
void im2col3(const float* x, int c_in, int h, int w, float* cols) {
    for (int c = 0; c < c_in; c++) {
        const float* xc = x + size_t(c) * h * w;
        for (int ky = 0; ky < 3; ky++) {
            for (int kx = 0; kx < 3; kx++) {
                float* row = cols + size_t(c * 9 + ky * 3 + kx) * h * w;
                for (int y = 0; y < h; y++) {
                    int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) {
                        std::memset(row + size_t(y) * w, 0, sizeof(float) * w);
                        continue;
                    }
                    for (int x2 = 0; x2 < w; x2++) {
                        int sx = x2 + kx - 1;
                        row[y * w + x2] =
                            (sx < 0 || sx >= w) ? 0.0f : xc[sy * w + sx];
                    }
                }
            }
        }
    }
}

// Scatter-add of column gradients back to the input image.
void col2im3(const float* cols, int c_in, int h, int w, float* dx) {
    for (int c = 0; c < c_in; c++) {
        float* xc = dx + size_t(c) * h * w;
        for (int ky = 0; ky < 3; ky++) {
            for (int kx = 0; kx < 3; kx++) {
                const float* row = cols + size_t(c * 9 + ky * 3 + kx) * h * w;
                for (int y = 0; y < h; y++) {
                    int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    for (int x2 = 0; x2 < w; x2++) {
                        int sx = x2 + kx - 1;
                        if (sx < 0 || sx >= w) continue;
                        xc[sy * w + sx] += row[y * w + x2];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor y = Tensor::zeros(a.shape());
    const float* ad = a.data();
    const float* bd = b.data();
    float* yd = y.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; i++) yd[i] = ad[i] + bd[i];
    if (grad_wanted({&a, &b})) {
        y.node()->needs_grad = true;
        auto an = a.node(), bn = b.node(), yn = y.node();
        GradTape::active()->record([an, bn, yn, n] {
            if (an->needs_grad) {
                an->ensure_grad();
                for (int64_t i = 0; i < n; i++) an->grad[i] += yn->grad[i];
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (int64_t i = 0; i < n; i++) bn->grad[i] += yn->grad[i];
            }
        });
    }
    return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor y = Tensor::zeros(a.shape());
    const float* ad = a.data();
    const float* bd = b.data();
    float* yd = y.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; i++) yd[i] = ad[i] - bd[i];
    if (grad_wanted({&a, &b})) {
        y.node()->needs_grad = true;
        auto an = a.node(), bn = b.node(), yn = y.node();
        GradTape::active()->record([an, bn, yn, n] {
            if (an->needs_grad) {
                an->ensure_grad();
                for (int64_t i = 0; i < n; i++) an->grad[i] += yn->grad[i];
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (int64_t i = 0; i < n; i++) bn->grad[i] -= yn->grad[i];
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor y = Tensor::zeros(a.shape());
    const float* ad = a.data();
    const float* bd = b.data();
    float* yd = y.data();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; i++) yd[i] = ad[i] * bd[i];
    if (grad_wanted({&a, &b})) {
        y.node()->needs_grad = true;
        auto an = a.node(), bn = b.node(), yn = y.node();
        GradTape::active()->record([an, bn, yn, n] {
            if (an->needs_grad) {
                an->ensure_grad();
                for (int64_t i = 0; i < n; i++)
                    an->grad[i] += yn->grad[i] * bn->data[i];
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (int64_t i = 0; i < n; i++)
                    bn->grad[i] += yn->grad[i] * an->data[i];
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& x, double factor) {
    Tensor y = Tensor::zeros(x.shape());
    const float* xd = x.data();
    float* yd = y.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; i++) yd[i] = float(factor * double(xd[i]));
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, factor, n] {
            xn->ensure_grad();
            for (int64_t i = 0; i < n; i++)
                xn->grad[i] += float(factor * double(yn->grad[i]));
        });
    }
    return y;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
        throw ContractError("linear: inner dimensions disagree, x " +
                            shape_str(x.shape()) + " vs W " + shape_str(w.shape()));
    int bsz = x.dim(0), in = x.dim(1), out = w.dim(1);
    if (b.numel() != out)
        throw ContractError("linear: bias " + shape_str(b.shape()) +
                            " does not match output width " + std::to_string(out));
    Tensor y = Tensor::zeros({bsz, out});
    blas::sgemm(false, false, bsz, out, in, 1.0f, x.data(), in, w.data(), out,
                0.0f, y.data(), out);
    {
        const float* bd = b.data();
        float* yd = y.data();
        for (int r = 0; r < bsz; r++)
            for (int c = 0; c < out; c++) yd[r * out + c] += bd[c];
    }
    if (grad_wanted({&x, &w, &b})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), wn = w.node(), bn = b.node(), yn = y.node();
        GradTape::active()->record([xn, wn, bn, yn, bsz, in, out] {
            const float* dy = yn->grad.data();
            if (xn->needs_grad) {
                xn->ensure_grad();
                blas::sgemm(false, true, bsz, in, out, 1.0f, dy, out,
                            wn->data.data(), out, 1.0f, xn->grad.data(), in);
            }
            if (wn->needs_grad) {
                wn->ensure_grad();
                blas::sgemm(true, false, in, out, bsz, 1.0f, xn->data.data(), in,
                            dy, out, 1.0f, wn->grad.data(), out);
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (int r = 0; r < bsz; r++)
                    for (int c = 0; c < out; c++) bn->grad[c] += dy[r * out + c];
            }
        });
    }
    return y;
}

Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
    if (x.rank() != 4 || k.rank() != 4 || k.dim(2) != 3 || k.dim(3) != 3)
        throw ContractError("conv2d: expected x [B,C,H,W], k [O,C,3,3], got " +
                            shape_str(x.shape()) + " and " + shape_str(k.shape()));
    if (x.dim(1) != k.dim(1))
        throw ContractError("conv2d: channel mismatch, input " +
                            shape_str(x.shape()) + " vs kernel " +
                            shape_str(k.shape()));
    int bsz = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    int cout = k.dim(0), hw = h * w, ck = cin * 9;
    if (b.numel() != cout)
        throw ContractError("conv2d: bias size " + std::to_string(b.numel()) +
                            " vs out channels " + std::to_string(cout));
    Tensor y = Tensor::zeros({bsz, cout, h, w});
    std::vector<float> cols(size_t(ck) * hw);
    for (int bi = 0; bi < bsz; bi++) {
        im2col3(x.data() + size_t(bi) * cin * hw, cin, h, w, cols.data());
        blas::sgemm(false, false, cout, hw, ck, 1.0f, k.data(), ck, cols.data(),
                    hw, 0.0f, y.data() + size_t(bi) * cout * hw, hw);
    }
    {
        const float* bd = b.data();
        float* yd = y.data();
        for (int bi = 0; bi < bsz; bi++)
            for (int c = 0; c < cout; c++) {
                float bv = bd[c];
                float* p = yd + (size_t(bi) * cout + c) * hw;
                for (int i = 0; i < hw; i++) p[i] += bv;
            }
    }
    if (grad_wanted({&x, &k, &b})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), kn = k.node(), bn = b.node(), yn = y.node();
        GradTape::active()->record([xn, kn, bn, yn, bsz, cin, cout, h, w] {
            int hw = h * w, ck = cin * 9;
            std::vector<float> cols(size_t(ck) * hw);
            std::vector<float> dcols;
            if (kn->needs_grad) kn->ensure_grad();
            if (xn->needs_grad) {
                xn->ensure_grad();
                dcols.resize(size_t(ck) * hw);
            }
            for (int bi = 0; bi < bsz; bi++) {
                const float* dy = yn->grad.data() + size_t(bi) * cout * hw;
                if (kn->needs_grad || xn->needs_grad)
                    im2col3(xn->data.data() + size_t(bi) * cin * hw, cin, h, w,
                            cols.data());
                if (kn->needs_grad)
                    blas::sgemm(false, true, cout, ck, hw, 1.0f, dy, hw,
                                cols.data(), hw, 1.0f, kn->grad.data(), ck);
                if (xn->needs_grad) {
                    blas::sgemm(true, false, ck, hw, cout, 1.0f, kn->data.data(),
                                ck, dy, hw, 0.0f, dcols.data(), hw);
                    col2im3(dcols.data(), cin, h, w,
                            xn->grad.data() + size_t(bi) * cin * hw);
                }
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (int bi = 0; bi < bsz; bi++)
                    for (int c = 0; c < cout; c++) {
                        const float* dy =
                            yn->grad.data() + (size_t(bi) * cout + c) * hw;
                        float acc = 0.0f;
                        for (int i = 0; i < hw; i++) acc += dy[i];
                        bn->grad[c] += acc;
                    }
            }
        });
    }
    return y;
}

Tensor conv1x1(const Tensor& x, const Tensor& k, const Tensor& b) {
    if (x.rank() != 4 || k.rank() != 2 || x.dim(1) != k.dim(1))
        throw ContractError("conv1x1: expected x [B,C,H,W], k [O,C], got " +
                            shape_str(x.shape()) + " and " + shape_str(k.shape()));
    int bsz = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
    int cout = k.dim(0), hw = h * w;
    Tensor y = Tensor::zeros({bsz, cout, h, w});
    for (int bi = 0; bi < bsz; bi++)
        blas::sgemm(false, false, cout, hw, cin, 1.0f, k.data(), cin,
                    x.data() + size_t(bi) * cin * hw, hw, 0.0f,
                    y.data() + size_t(bi) * cout * hw, hw);
    {
        const float* bd = b.data();
        for (int bi = 0; bi < bsz; bi++)
            for (int c = 0; c < cout; c++) {
                float* p = y.data() + (size_t(bi) * cout + c) * hw;
                for (int i = 0; i < hw; i++) p[i] += bd[c];
            }
    }
    if (grad_wanted({&x, &k, &b})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), kn = k.node(), bn = b.node(), yn = y.node();
        GradTape::active()->record([xn, kn, bn, yn, bsz, cin, cout, hw] {
            for (int bi = 0; bi < bsz; bi++) {
                const float* dy = yn->grad.data() + size_t(bi) * cout * hw;
                if (kn->needs_grad) {
                    kn->ensure_grad();
                    blas::sgemm(false, true, cout, cin, hw, 1.0f, dy, hw,
                                xn->data.data() + size_t(bi) * cin * hw, hw, 1.0f,
                                kn->grad.data(), cin);
                }
                if (xn->needs_grad) {
                    xn->ensure_grad();
                    blas::sgemm(true, false, cin, hw, cout, 1.0f, kn->data.data(),
                                cin, dy, hw, 1.0f,
                                xn->grad.data() + size_t(bi) * cin * hw, hw);
                }
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (int bi = 0; bi < bsz; bi++)
                    for (int c = 0; c < cout; c++) {
                        const float* dy =
                            yn->grad.data() + (size_t(bi) * cout + c) * hw;
                        float acc = 0.0f;
                        for (int i = 0; i < hw; i++) acc += dy[i];
                        bn->grad[c] += acc;
                    }
            }
        });
    }
    return y;
}

Tensor group_norm(const Tensor& x, int groups, double eps) {
    if (x.rank() != 4)
        throw ContractError("group_norm: expected [B,C,H,W], got " +
                            shape_str(x.shape()));
    int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (groups < 1 || c % groups != 0)
        throw ConfigError("group_norm: channels " + std::to_string(c) +
                          " not divisible by groups " + std::to_string(groups));
    if (!(eps > 0)) throw ConfigError("group_norm: eps must be > 0");
    int cg = c / groups, gsz = cg * h * w;
    Tensor y = Tensor::zeros(x.shape());
    std::vector<double> mean_v(size_t(bsz) * groups), inv_v(size_t(bsz) * groups);
    const float* xd = x.data();
    float* yd = y.data();
    for (int bi = 0; bi < bsz; bi++) {
        for (int g = 0; g < groups; g++) {
            const float* p = xd + (size_t(bi) * c + size_t(g) * cg) * h * w;
            double s = 0.0;
            for (int i = 0; i < gsz; i++) s += p[i];
            double mu = s / gsz;
            double q = 0.0;
            for (int i = 0; i < gsz; i++) {
                double d = p[i] - mu;
                q += d * d;
            }
            double inv = 1.0 / std::sqrt(q / gsz + eps);
            mean_v[size_t(bi) * groups + g] = mu;
            inv_v[size_t(bi) * groups + g] = inv;
            float* o = yd + (size_t(bi) * c + size_t(g) * cg) * h * w;
            for (int i = 0; i < gsz; i++) o[i] = float((p[i] - mu) * inv);
        }
    }
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, bsz, c, groups, cg, h, w, mean_v,
                                    inv_v] {
            xn->ensure_grad();
            int gsz = cg * h * w;
            for (int bi = 0; bi < bsz; bi++) {
                for (int g = 0; g < groups; g++) {
                    size_t off = (size_t(bi) * c + size_t(g) * cg) * h * w;
                    const float* xp = xn->data.data() + off;
                    const float* dy = yn->grad.data() + off;
                    float* dx = xn->grad.data() + off;
                    double mu = mean_v[size_t(bi) * groups + g];
                    double inv = inv_v[size_t(bi) * groups + g];
                    double sum_dy = 0.0, sum_dy_xhat = 0.0;
                    for (int i = 0; i < gsz; i++) {
                        double xh = (xp[i] - mu) * inv;
                        sum_dy += dy[i];
                        sum_dy_xhat += dy[i] * xh;
                    }
                    double m_dy = sum_dy / gsz, m_dyx = sum_dy_xhat / gsz;
                    for (int i = 0; i < gsz; i++) {
                        double xh = (xp[i] - mu) * inv;
                        dx[i] += float(inv * (dy[i] - m_dy - xh * m_dyx));
                    }
                }
            }
        });
    }
    return y;
}

Tensor silu(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const float* xd = x.data();
    float* yd = y.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; i++) yd[i] = xd[i] * sigmoid_f(xd[i]);
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, n] {
            xn->ensure_grad();
            for (int64_t i = 0; i < n; i++) {
                float s = sigmoid_f(xn->data[i]);
                xn->grad[i] += yn->grad[i] * s * (1.0f + xn->data[i] * (1.0f - s));
            }
        });
    }
    return y;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const float* xd = x.data();
    float* yd = y.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; i++) yd[i] = sigmoid_f(xd[i]);
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, n] {
            xn->ensure_grad();
            for (int64_t i = 0; i < n; i++) {
                float s = yn->data[i];
                xn->grad[i] += yn->grad[i] * s * (1.0f - s);
            }
        });
    }
    return y;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    const float* xd = x.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; i++) acc += xd[i];
    Tensor y = Tensor::scalar(float(acc));
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, n] {
            xn->ensure_grad();
            float g = yn->grad[0];
            for (int64_t i = 0; i < n; i++) xn->grad[i] += g;
        });
    }
    return y;
}

Tensor mean(const Tensor& x) {
    double acc = 0.0;
    const float* xd = x.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; i++) acc += xd[i];
    Tensor y = Tensor::scalar(float(acc / double(n)));
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, n] {
            xn->ensure_grad();
            float g = float(double(yn->grad[0]) / double(n));
            for (int64_t i = 0; i < n; i++) xn->grad[i] += g;
        });
    }
    return y;
}

Tensor mse(const Tensor& pred, const Tensor& target) {
    check_same_shape(pred, target, "mse");
    int64_t n = pred.numel();
    const float* pd = pred.data();
    const float* td = target.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; i++) {
        double d = double(pd[i]) - double(td[i]);
        acc += d * d;
    }
    Tensor y = Tensor::scalar(float(acc / double(n)));
    if (grad_wanted({&pred, &target})) {
        y.node()->needs_grad = true;
        auto pn = pred.node(), tn = target.node(), yn = y.node();
        GradTape::active()->record([pn, tn, yn, n] {
            double g = 2.0 * double(yn->grad[0]) / double(n);
            if (pn->needs_grad) {
                pn->ensure_grad();
                for (int64_t i = 0; i < n; i++)
                    pn->grad[i] +=
                        float(g * (double(pn->data[i]) - double(tn->data[i])));
            }
            if (tn->needs_grad) {
                tn->ensure_grad();
                for (int64_t i = 0; i < n; i++)
                    tn->grad[i] -=
                        float(g * (double(pn->data[i]) - double(tn->data[i])));
            }
        });
    }
    return y;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2 || size_t(logits.dim(0)) != labels.size())
        throw ContractError("cross_entropy: logits " + shape_str(logits.shape()) +
                            " vs " + std::to_string(labels.size()) + " labels");
    int bsz = logits.dim(0), k = logits.dim(1);
    const float* zd = logits.data();
    double acc = 0.0;
    for (int r = 0; r < bsz; r++) {
        if (labels[size_t(r)] < 0 || labels[size_t(r)] >= k)
            throw ContractError("cross_entropy: label out of range");
        const float* z = zd + size_t(r) * k;
        double zmax = z[0];
        for (int j = 1; j < k; j++) zmax = std::max(zmax, double(z[j]));
        double se = 0.0;
        for (int j = 0; j < k; j++) se += std::exp(double(z[j]) - zmax);
        acc += zmax + std::log(se) - double(z[labels[size_t(r)]]);
    }
    Tensor y = Tensor::scalar(float(acc / bsz));
    if (grad_wanted({&logits})) {
        y.node()->needs_grad = true;
        auto zn = logits.node(), yn = y.node();
        GradTape::active()->record([zn, yn, labels, bsz, k] {
            zn->ensure_grad();
            double g = double(yn->grad[0]) / bsz;
            for (int r = 0; r < bsz; r++) {
                const float* z = zn->data.data() + size_t(r) * k;
                double zmax = z[0];
                for (int j = 1; j < k; j++) zmax = std::max(zmax, double(z[j]));
                double se = 0.0;
                for (int j = 0; j < k; j++) se += std::exp(double(z[j]) - zmax);
                for (int j = 0; j < k; j++) {
                    double p = std::exp(double(z[j]) - zmax) / se;
                    double d = p - (j == labels[size_t(r)] ? 1.0 : 0.0);
                    zn->grad[size_t(r) * k + j] += float(g * d);
                }
            }
        });
    }
    return y;
}

Tensor avgpool2(const Tensor& x) {
    if (x.rank() != 4 || x.dim(2) % 2 || x.dim(3) % 2)
        throw ContractError("avgpool2: expected even [B,C,H,W], got " +
                            shape_str(x.shape()));
    int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int oh = h / 2, ow = w / 2;
    Tensor y = Tensor::zeros({bsz, c, oh, ow});
    const float* xd = x.data();
    float* yd = y.data();
    for (int bc = 0; bc < bsz * c; bc++) {
        const float* xp = xd + size_t(bc) * h * w;
        float* yp = yd + size_t(bc) * oh * ow;
        for (int i = 0; i < oh; i++)
            for (int j = 0; j < ow; j++)
                yp[i * ow + j] = 0.25f * (xp[2 * i * w + 2 * j] +
                                          xp[2 * i * w + 2 * j + 1] +
                                          xp[(2 * i + 1) * w + 2 * j] +
                                          xp[(2 * i + 1) * w + 2 * j + 1]);
    }
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, bsz, c, h, w, oh, ow] {
            xn->ensure_grad();
            for (int bc = 0; bc < bsz * c; bc++) {
                float* dx = xn->grad.data() + size_t(bc) * h * w;
                const float* dy = yn->grad.data() + size_t(bc) * oh * ow;
                for (int i = 0; i < oh; i++)
                    for (int j = 0; j < ow; j++) {
                        float g = 0.25f * dy[i * ow + j];
                        dx[2 * i * w + 2 * j] += g;
                        dx[2 * i * w + 2 * j + 1] += g;
                        dx[(2 * i + 1) * w + 2 * j] += g;
                        dx[(2 * i + 1) * w + 2 * j + 1] += g;
                    }
            }
        });
    }
    return y;
}

Tensor upsample2(const Tensor& x) {
    if (x.rank() != 4)
        throw ContractError("upsample2: expected [B,C,H,W], got " +
                            shape_str(x.shape()));
    int bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    int oh = h * 2, ow = w * 2;
    Tensor y = Tensor::zeros({bsz, c, oh, ow});
    const float* xd = x.data();
    float* yd = y.data();
    for (int bc = 0; bc < bsz * c; bc++) {
        const float* xp = xd + size_t(bc) * h * w;
        float* yp = yd + size_t(bc) * oh * ow;
        for (int i = 0; i < oh; i++)
            for (int j = 0; j < ow; j++) yp[i * ow + j] = xp[(i / 2) * w + j / 2];
    }
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, bsz, c, h, w, oh, ow] {
            xn->ensure_grad();
            for (int bc = 0; bc < bsz * c; bc++) {
                float* dx = xn->grad.data() + size_t(bc) * h * w;
                const float* dy = yn->grad.data() + size_t(bc) * oh * ow;
                for (int i = 0; i < oh; i++)
                    for (int j = 0; j < ow; j++)
                        dx[(i / 2) * w + j / 2] += dy[i * ow + j];
            }
        });
    }
    return y;
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() != 4 || bias.rank() != 2 || bias.dim(1) != x.dim(1) ||
        (bias.dim(0) != 1 && bias.dim(0) != x.dim(0)))
        throw ContractError("add_channel_bias: x " + shape_str(x.shape()) +
                            " vs bias " + shape_str(bias.shape()));
    int bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    bool shared = bias.dim(0) == 1;
    Tensor y = Tensor::zeros(x.shape());
    const float* xd = x.data();
    const float* bd = bias.data();
    float* yd = y.data();
    for (int bi = 0; bi < bsz; bi++)
        for (int ci = 0; ci < c; ci++) {
            float bv = bd[(shared ? 0 : size_t(bi)) * c + ci];
            const float* xp = xd + (size_t(bi) * c + ci) * hw;
            float* yp = yd + (size_t(bi) * c + ci) * hw;
            for (int i = 0; i < hw; i++) yp[i] = xp[i] + bv;
        }
    if (grad_wanted({&x, &bias})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), bn = bias.node(), yn = y.node();
        GradTape::active()->record([xn, bn, yn, bsz, c, hw, shared] {
            if (xn->needs_grad) {
                xn->ensure_grad();
                int64_t n = int64_t(bsz) * c * hw;
                for (int64_t i = 0; i < n; i++) xn->grad[i] += yn->grad[i];
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (int bi = 0; bi < bsz; bi++)
                    for (int ci = 0; ci < c; ci++) {
                        const float* dy =
                            yn->grad.data() + (size_t(bi) * c + ci) * hw;
                        float acc = 0.0f;
                        for (int i = 0; i < hw; i++) acc += dy[i];
                        bn->grad[(shared ? 0 : size_t(bi)) * c + ci] += acc;
                    }
            }
        });
    }
    return y;
}

Tensor film(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    if (x.rank() != 4 || gamma.rank() != 2 || beta.rank() != 2 ||
        gamma.dim(0) != x.dim(0) || gamma.dim(1) != x.dim(1) ||
        beta.shape() != gamma.shape())
        throw ContractError("film: x " + shape_str(x.shape()) + ", gamma " +
                            shape_str(gamma.shape()) + ", beta " +
                            shape_str(beta.shape()));
    int bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y = Tensor::zeros(x.shape());
    const float* xd = x.data();
    const float* gd = gamma.data();
    const float* bd = beta.data();
    float* yd = y.data();
    for (int bi = 0; bi < bsz; bi++)
        for (int ci = 0; ci < c; ci++) {
            float g = gd[size_t(bi) * c + ci], b = bd[size_t(bi) * c + ci];
            const float* xp = xd + (size_t(bi) * c + ci) * hw;
            float* yp = yd + (size_t(bi) * c + ci) * hw;
            for (int i = 0; i < hw; i++) yp[i] = g * xp[i] + b;
        }
    if (grad_wanted({&x, &gamma, &beta})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node();
        GradTape::active()->record([xn, gn, bn, yn, bsz, c, hw] {
            for (int bi = 0; bi < bsz; bi++)
                for (int ci = 0; ci < c; ci++) {
                    size_t off = (size_t(bi) * c + ci) * hw;
                    const float* dy = yn->grad.data() + off;
                    float g = gn->data[size_t(bi) * c + ci];
                    if (xn->needs_grad) {
                        xn->ensure_grad();
                        float* dx = xn->grad.data() + off;
                        for (int i = 0; i < hw; i++) dx[i] += g * dy[i];
                    }
                    if (gn->needs_grad) {
                        gn->ensure_grad();
                        const float* xp = xn->data.data() + off;
                        float acc = 0.0f;
                        for (int i = 0; i < hw; i++) acc += dy[i] * xp[i];
                        gn->grad[size_t(bi) * c + ci] += acc;
                    }
                    if (bn->needs_grad) {
                        bn->ensure_grad();
                        float acc = 0.0f;
                        for (int i = 0; i < hw; i++) acc += dy[i];
                        bn->grad[size_t(bi) * c + ci] += acc;
                    }
                }
        });
    }
    return y;
}

Tensor cond_embed(const Tensor& table,
                  const std::vector<std::pair<int, int>>& idx) {
    if (table.rank() != 2) throw ContractError("cond_embed: table must be 2-d");
    int v = table.dim(0), d = table.dim(1), bsz = int(idx.size());
    for (auto& [i, j] : idx) {
        bool null_row = (i == -1 && j == -1);
        if (!null_row && (i < 0 || i >= v || j < 0 || j >= v))
            throw ContractError("cond_embed: row index out of range");
    }
    Tensor y = Tensor::zeros({bsz, d});
    const float* td = table.data();
    float* yd = y.data();
    for (int r = 0; r < bsz; r++) {
        auto [i, j] = idx[size_t(r)];
        if (i == -1) continue;  // null condition row stays zero
        const float* a = td + size_t(i) * d;
        const float* b = td + size_t(j) * d;
        for (int c = 0; c < d; c++) yd[size_t(r) * d + c] = 0.5f * (a[c] + b[c]);
    }
    if (grad_wanted({&table})) {
        y.node()->needs_grad = true;
        auto tn = table.node(), yn = y.node();
        GradTape::active()->record([tn, yn, idx, d] {
            tn->ensure_grad();
            for (size_t r = 0; r < idx.size(); r++) {
                auto [i, j] = idx[r];
                if (i == -1) continue;
                const float* dy = yn->grad.data() + r * d;
                for (int c = 0; c < d; c++) {
                    tn->grad[size_t(i) * d + c] += 0.5f * dy[c];
                    tn->grad[size_t(j) * d + c] += 0.5f * dy[c];
                }
            }
        });
    }
    return y;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
    if (shape_numel(shape) != x.numel())
        throw ContractError("reshape: element count mismatch (" +
                            shape_str(x.shape()) + " -> " + shape_str(shape) + ")");
    Tensor y = Tensor::from(std::move(shape), x.vec());
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        int64_t n = x.numel();
        GradTape::active()->record([xn, yn, n] {
            xn->ensure_grad();
            for (int64_t i = 0; i < n; i++) xn->grad[i] += yn->grad[i];
        });
    }
    return y;
}

Tensor broadcast_rows(const Tensor& row, int b) {
    int d;
    if (row.rank() == 1)
        d = row.dim(0);
    else if (row.rank() == 2 && row.dim(0) == 1)
        d = row.dim(1);
    else
        throw ContractError("broadcast_rows: expected [D] or [1,D], got " +
                            shape_str(row.shape()));
    Tensor y = Tensor::zeros({b, d});
    const float* rd = row.data();
    float* yd = y.data();
    for (int r = 0; r < b; r++)
        std::memcpy(yd + size_t(r) * d, rd, sizeof(float) * size_t(d));
    if (grad_wanted({&row})) {
        y.node()->needs_grad = true;
        auto rn = row.node(), yn = y.node();
        GradTape::active()->record([rn, yn, b, d] {
            rn->ensure_grad();
            for (int r = 0; r < b; r++)
                for (int c = 0; c < d; c++)
                    rn->grad[size_t(c)] += yn->grad[size_t(r) * d + c];
        });
    }
    return y;
}

Tensor global_mean_pool(const Tensor& x) {
    if (x.rank() != 4)
        throw ContractError("global_mean_pool: expected [B,C,H,W], got " +
                            shape_str(x.shape()));
    int bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y = Tensor::zeros({bsz, c});
    const float* xd = x.data();
    float* yd = y.data();
    for (int bc = 0; bc < bsz * c; bc++) {
        const float* xp = xd + size_t(bc) * hw;
        double acc = 0.0;
        for (int i = 0; i < hw; i++) acc += xp[i];
        yd[bc] = float(acc / hw);
    }
    if (grad_wanted({&x})) {
        y.node()->needs_grad = true;
        auto xn = x.node(), yn = y.node();
        GradTape::active()->record([xn, yn, bsz, c, hw] {
            xn->ensure_grad();
            for (int bc = 0; bc < bsz * c; bc++) {
                float g = yn->grad[size_t(bc)] / float(hw);
                float* dx = xn->grad.data() + size_t(bc) * hw;
                for (int i = 0; i < hw; i++) dx[i] += g;
            }
        });
    }
    return y;
}

Tensor stack_batch(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ContractError("stack_batch: empty input");
    std::vector<int> shape = xs[0].shape();
    for (auto& t : xs) check_same_shape(t, xs[0], "stack_batch");
    std::vector<int> out_shape;
    out_shape.push_back(int(xs.size()));
    for (int d : shape) out_shape.push_back(d);
    Tensor y = Tensor::zeros(out_shape);
    size_t per = size_t(xs[0].numel());
    for (size_t i = 0; i < xs.size(); i++)
        std::memcpy(y.data() + i * per, xs[i].data(), per * sizeof(float));
    return y;
}

bool all_finite(const Tensor& x) {
    const float* d = x.data();
    int64_t n = x.numel();
    for (int64_t i = 0; i < n; i++)
        if (!std::isfinite(d[i])) return false;
    return true;
}

}  // namespace steerlab::ops
