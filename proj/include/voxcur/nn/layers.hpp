#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "voxcur/core/errors.hpp"
#include "voxcur/core/rng.hpp"
#include "voxcur/core/tensor.hpp"

namespace voxcur::nn {

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<MatX<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const MatX<T>>;

/// A named trainable array with its gradient accumulator.
template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;

    void resize(std::vector<int> s, const std::string& n) {
        name = n;
        shape = std::move(s);
        std::size_t total = 1;
        for (int d : shape) total *= static_cast<std::size_t>(d);
        value.assign(total, T(0));
        grad.assign(total, T(0));
    }
    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
struct Layer {
    virtual ~Layer() = default;
    virtual Batch<T> forward(const Batch<T>& in) = 0;
    virtual Batch<T> backward(const Batch<T>& grad_out) = 0;
    virtual std::vector<Param<T>*> params() { return {}; }
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

/// 3D convolution (no bias; normalization follows every conv). Forward and
/// backward run as im2col + GEMM per sample.
template <typename T>
class Conv3d : public Layer<T> {
public:
    Conv3d(std::string name, int in_ch, int out_ch, Vec3i kernel, Vec3i stride,
           Vec3i pad)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), s_(stride), p_(pad) {
        w_.resize({out_ch, in_ch, k_.x, k_.y, k_.z}, name + ".weight");
    }

    void init(Rng& rng) {
        // He fan-in normal
        double fan_in = static_cast<double>(in_ch_) * k_.x * k_.y * k_.z;
        double std_dev = std::sqrt(2.0 / fan_in);
        for (auto& v : w_.value) v = static_cast<T>(rng.normal(0.0, std_dev));
    }

    Vec3i out_shape(Vec3i in) const {
        return {conv_out_dim(in.x, k_.x, s_.x, p_.x), conv_out_dim(in.y, k_.y, s_.y, p_.y),
                conv_out_dim(in.z, k_.z, s_.z, p_.z)};
    }

    Batch<T> forward(const Batch<T>& in) override {
        if (in.c != in_ch_)
            throw ShapeError(w_.name + ": expected " + std::to_string(in_ch_) +
                             " input channels, got " + std::to_string(in.c));
        in_ = in;
        Vec3i os = out_shape({in.x, in.y, in.z});
        if (os.x < 1 || os.y < 1 || os.z < 1)
            throw ShapeError(w_.name + ": input spatial extent too small, axis " +
                             std::string(os.x < 1 ? "x" : os.y < 1 ? "y" : "z"));
        Batch<T> out(in.n, out_ch_, os.x, os.y, os.z);
        const int K = in_ch_ * k_.x * k_.y * k_.z;
        const int M = os.x * os.y * os.z;
        MapConstMat<T> W(w_.value.data(), out_ch_, K);
        cols_.assign(static_cast<std::size_t>(in.n) * K * M, T(0));
        for (int ni = 0; ni < in.n; ++ni) {
            T* col = cols_.data() + static_cast<std::size_t>(ni) * K * M;
            im2col(in.sample(ni), {in.x, in.y, in.z}, os, col);
            MapMat<T> C(col, K, M);
            MapMat<T> O(out.sample(ni), out_ch_, M);
            O.noalias() = W * C;
        }
        out_spatial_ = os;
        return out;
    }

    Batch<T> backward(const Batch<T>& go) override {
        const Vec3i os = out_spatial_;
        const int K = in_ch_ * k_.x * k_.y * k_.z;
        const int M = os.x * os.y * os.z;
        Batch<T> gi(in_.n, in_.c, in_.x, in_.y, in_.z);
        MapConstMat<T> W(w_.value.data(), out_ch_, K);
        MapMat<T> dW(w_.grad.data(), out_ch_, K);
        std::vector<T> dcol(static_cast<std::size_t>(K) * M);
        for (int ni = 0; ni < go.n; ++ni) {
            MapConstMat<T> G(go.sample(ni), out_ch_, M);
            MapConstMat<T> C(cols_.data() + static_cast<std::size_t>(ni) * K * M, K, M);
            dW.noalias() += G * C.transpose();
            MapMat<T> D(dcol.data(), K, M);
            D.noalias() = W.transpose() * G;
            col2im(dcol.data(), {in_.x, in_.y, in_.z}, os, gi.sample(ni));
        }
        return gi;
    }

    std::vector<Param<T>*> params() override { return {&w_}; }
    Param<T>& weight() { return w_; }
    int out_channels() const { return out_ch_; }

private:
    void im2col(const T* src, Vec3i is, Vec3i os, T* col) const {
        const std::size_t plane = static_cast<std::size_t>(is.x) * is.y * is.z;
        const int M = os.x * os.y * os.z;
        std::size_t row = 0;
        for (int ci = 0; ci < in_ch_; ++ci) {
            const T* ch = src + ci * plane;
            for (int kx = 0; kx < k_.x; ++kx)
                for (int ky = 0; ky < k_.y; ++ky)
                    for (int kz = 0; kz < k_.z; ++kz) {
                        T* dst = col + row * M;
                        std::size_t m = 0;
                        for (int ox = 0; ox < os.x; ++ox) {
                            int sx = ox * s_.x + kx - p_.x;
                            bool x_ok = sx >= 0 && sx < is.x;
                            for (int oy = 0; oy < os.y; ++oy) {
                                int sy = oy * s_.y + ky - p_.y;
                                bool xy_ok = x_ok && sy >= 0 && sy < is.y;
                                for (int oz = 0; oz < os.z; ++oz, ++m) {
                                    int sz = oz * s_.z + kz - p_.z;
                                    dst[m] = (xy_ok && sz >= 0 && sz < is.z)
                                                 ? ch[(static_cast<std::size_t>(sx) * is.y +
                                                       sy) * is.z + sz]
                                                 : T(0);
                                }
                            }
                        }
                        ++row;
                    }
        }
    }

    void col2im(const T* col, Vec3i is, Vec3i os, T* dst) const {
        const std::size_t plane = static_cast<std::size_t>(is.x) * is.y * is.z;
        const int M = os.x * os.y * os.z;
        std::size_t row = 0;
        for (int ci = 0; ci < in_ch_; ++ci) {
            T* ch = dst + ci * plane;
            for (int kx = 0; kx < k_.x; ++kx)
                for (int ky = 0; ky < k_.y; ++ky)
                    for (int kz = 0; kz < k_.z; ++kz) {
                        const T* src_row = col + row * M;
                        std::size_t m = 0;
                        for (int ox = 0; ox < os.x; ++ox) {
                            int sx = ox * s_.x + kx - p_.x;
                            bool x_ok = sx >= 0 && sx < is.x;
                            for (int oy = 0; oy < os.y; ++oy) {
                                int sy = oy * s_.y + ky - p_.y;
                                bool xy_ok = x_ok && sy >= 0 && sy < is.y;
                                for (int oz = 0; oz < os.z; ++oz, ++m) {
                                    int sz = oz * s_.z + kz - p_.z;
                                    if (xy_ok && sz >= 0 && sz < is.z)
                                        ch[(static_cast<std::size_t>(sx) * is.y + sy) * is.z +
                                           sz] += src_row[m];
                                }
                            }
                        }
                        ++row;
                    }
        }
    }

    int in_ch_, out_ch_;
    Vec3i k_, s_, p_;
    Param<T> w_;
    Batch<T> in_;
    std::vector<T> cols_;
    Vec3i out_spatial_{};
};

/// Instance normalization with affine parameters: per (sample, channel)
/// spatial standardization.
template <typename T>
class InstanceNorm3d : public Layer<T> {
public:
    InstanceNorm3d(std::string name, int channels, T eps = T(1e-5))
        : channels_(channels), eps_(eps) {
        gamma_.resize({channels}, name + ".gamma");
        beta_.resize({channels}, name + ".beta");
        std::fill(gamma_.value.begin(), gamma_.value.end(), T(1));
    }

    Batch<T> forward(const Batch<T>& in) override {
        const std::size_t sp = in.spatial_size();
        xhat_ = in;  // reused as storage for the normalized activations
        invstd_.assign(static_cast<std::size_t>(in.n) * in.c, T(0));
        Batch<T> out(in.n, in.c, in.x, in.y, in.z);
        for (int ni = 0; ni < in.n; ++ni)
            for (int ci = 0; ci < in.c; ++ci) {
                const T* src = in.sample(ni) + ci * sp;
                T mean = 0;
                for (std::size_t i = 0; i < sp; ++i) mean += src[i];
                mean /= static_cast<T>(sp);
                T var = 0;
                for (std::size_t i = 0; i < sp; ++i) {
                    T d = src[i] - mean;
                    var += d * d;
                }
                var /= static_cast<T>(sp);
                T inv = T(1) / std::sqrt(var + eps_);
                invstd_[ni * in.c + ci] = inv;
                T* xh = xhat_.sample(ni) + ci * sp;
                T* dst = out.sample(ni) + ci * sp;
                T g = gamma_.value[ci], b = beta_.value[ci];
                for (std::size_t i = 0; i < sp; ++i) {
                    T h = (src[i] - mean) * inv;
                    xh[i] = h;
                    dst[i] = g * h + b;
                }
            }
        return out;
    }

    Batch<T> backward(const Batch<T>& go) override {
        const std::size_t sp = go.spatial_size();
        Batch<T> gi(go.n, go.c, go.x, go.y, go.z);
        for (int ni = 0; ni < go.n; ++ni)
            for (int ci = 0; ci < go.c; ++ci) {
                const T* g = go.sample(ni) + ci * sp;
                const T* xh = xhat_.sample(ni) + ci * sp;
                T* d = gi.sample(ni) + ci * sp;
                T sum_g = 0, sum_gx = 0;
                for (std::size_t i = 0; i < sp; ++i) {
                    sum_g += g[i];
                    sum_gx += g[i] * xh[i];
                }
                gamma_.grad[ci] += sum_gx;
                beta_.grad[ci] += sum_g;
                T gamma = gamma_.value[ci];
                T inv = invstd_[ni * go.c + ci];
                T n = static_cast<T>(sp);
                for (std::size_t i = 0; i < sp; ++i)
                    d[i] = gamma * inv * (g[i] - sum_g / n - xh[i] * sum_gx / n);
            }
        return gi;
    }

    std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }

private:
    int channels_;
    T eps_;
    Param<T> gamma_, beta_;
    Batch<T> xhat_;
    std::vector<T> invstd_;
};

template <typename T>
class LeakyReLU : public Layer<T> {
public:
    explicit LeakyReLU(T slope = T(0.01)) : slope_(slope) {}

    Batch<T> forward(const Batch<T>& in) override {
        in_ = in;
        Batch<T> out = in;
        for (auto& v : out.data)
            if (v < T(0)) v *= slope_;
        return out;
    }

    Batch<T> backward(const Batch<T>& go) override {
        Batch<T> gi = go;
        for (std::size_t i = 0; i < gi.data.size(); ++i)
            if (in_.data[i] < T(0)) gi.data[i] *= slope_;
        return gi;
    }

private:
    T slope_;
    Batch<T> in_;
};

/// Fixed-window average pooling, stride == window, remainder voxels dropped.
template <typename T>
class AvgPool3d : public Layer<T> {
public:
    explicit AvgPool3d(Vec3i window) : w_(window) {}

    Batch<T> forward(const Batch<T>& in) override {
        Vec3i os{in.x / w_.x, in.y / w_.y, in.z / w_.z};
        if (os.x < 1 || os.y < 1 || os.z < 1)
            throw ShapeError("avg_pool: input smaller than pooling window, axis " +
                             std::string(os.x < 1 ? "x" : os.y < 1 ? "y" : "z"));
        in_shape_ = {in.x, in.y, in.z};
        n_ = in.n;
        c_ = in.c;
        Batch<T> out(in.n, in.c, os.x, os.y, os.z);
        const T inv = T(1) / static_cast<T>(w_.x * w_.y * w_.z);
        for (int ni = 0; ni < in.n; ++ni)
            for (int ci = 0; ci < in.c; ++ci)
                for (int ox = 0; ox < os.x; ++ox)
                    for (int oy = 0; oy < os.y; ++oy)
                        for (int oz = 0; oz < os.z; ++oz) {
                            T acc = 0;
                            for (int dx = 0; dx < w_.x; ++dx)
                                for (int dy = 0; dy < w_.y; ++dy)
                                    for (int dz = 0; dz < w_.z; ++dz)
                                        acc += in.at(ni, ci, ox * w_.x + dx,
                                                     oy * w_.y + dy, oz * w_.z + dz);
                            out.at(ni, ci, ox, oy, oz) = acc * inv;
                        }
        return out;
    }

    Batch<T> backward(const Batch<T>& go) override {
        Batch<T> gi(n_, c_, in_shape_.x, in_shape_.y, in_shape_.z);
        const T inv = T(1) / static_cast<T>(w_.x * w_.y * w_.z);
        for (int ni = 0; ni < go.n; ++ni)
            for (int ci = 0; ci < go.c; ++ci)
                for (int ox = 0; ox < go.x; ++ox)
                    for (int oy = 0; oy < go.y; ++oy)
                        for (int oz = 0; oz < go.z; ++oz) {
                            T g = go.at(ni, ci, ox, oy, oz) * inv;
                            for (int dx = 0; dx < w_.x; ++dx)
                                for (int dy = 0; dy < w_.y; ++dy)
                                    for (int dz = 0; dz < w_.z; ++dz)
                                        gi.at(ni, ci, ox * w_.x + dx, oy * w_.y + dy,
                                              oz * w_.z + dz) += g;
                        }
        return gi;
    }

private:
    Vec3i w_;
    Vec3i in_shape_{};
    int n_ = 0, c_ = 0;
};

/// Adaptive average pooling to a fixed 1x1x1 output (spatial mean).
template <typename T>
class AdaptiveAvgPool3d : public Layer<T> {
public:
    Batch<T> forward(const Batch<T>& in) override {
        in_shape_ = {in.x, in.y, in.z};
        Batch<T> out(in.n, in.c, 1, 1, 1);
        const std::size_t sp = in.spatial_size();
        for (int ni = 0; ni < in.n; ++ni)
            for (int ci = 0; ci < in.c; ++ci) {
                const T* src = in.sample(ni) + ci * sp;
                T acc = 0;
                for (std::size_t i = 0; i < sp; ++i) acc += src[i];
                out.at(ni, ci, 0, 0, 0) = acc / static_cast<T>(sp);
            }
        return out;
    }

    Batch<T> backward(const Batch<T>& go) override {
        Batch<T> gi(go.n, go.c, in_shape_.x, in_shape_.y, in_shape_.z);
        const std::size_t sp = gi.spatial_size();
        const T inv = T(1) / static_cast<T>(sp);
        for (int ni = 0; ni < go.n; ++ni)
            for (int ci = 0; ci < go.c; ++ci) {
                T g = go.at(ni, ci, 0, 0, 0) * inv;
                T* d = gi.sample(ni) + ci * sp;
                for (std::size_t i = 0; i < sp; ++i) d[i] = g;
            }
        return gi;
    }

private:
    Vec3i in_shape_{};
};

/// Fully-connected layer on flattened (n, c, 1, 1, 1) features.
template <typename T>
class Linear : public Layer<T> {
public:
    Linear(std::string name, int in_features, int out_features)
        : in_f_(in_features), out_f_(out_features) {
        w_.resize({out_features, in_features}, name + ".weight");
        b_.resize({out_features}, name + ".bias");
    }

    void init(Rng& rng) {
        double std_dev = std::sqrt(1.0 / in_f_);
        for (auto& v : w_.value) v = static_cast<T>(rng.normal(0.0, std_dev));
    }

    Batch<T> forward(const Batch<T>& in) override {
        if (static_cast<int>(in.sample_size()) != in_f_)
            throw ShapeError(w_.name + ": expected " + std::to_string(in_f_) +
                             " input features, got " + std::to_string(in.sample_size()));
        in_ = in;
        Batch<T> out(in.n, out_f_, 1, 1, 1);
        MapConstMat<T> X(in.data.data(), in.n, in_f_);
        MapConstMat<T> W(w_.value.data(), out_f_, in_f_);
        MapMat<T> O(out.data.data(), in.n, out_f_);
        O.noalias() = X * W.transpose();
        for (int ni = 0; ni < in.n; ++ni)
            for (int oi = 0; oi < out_f_; ++oi) out.data[ni * out_f_ + oi] += b_.value[oi];
        return out;
    }

    Batch<T> backward(const Batch<T>& go) override {
        MapConstMat<T> G(go.data.data(), go.n, out_f_);
        MapConstMat<T> X(in_.data.data(), go.n, in_f_);
        MapMat<T> dW(w_.grad.data(), out_f_, in_f_);
        dW.noalias() += G.transpose() * X;
        for (int ni = 0; ni < go.n; ++ni)
            for (int oi = 0; oi < out_f_; ++oi) b_.grad[oi] += go.data[ni * out_f_ + oi];
        Batch<T> gi(go.n, in_.c, in_.x, in_.y, in_.z);
        MapConstMat<T> W(w_.value.data(), out_f_, in_f_);
        MapMat<T> D(gi.data.data(), go.n, in_f_);
        D.noalias() = G * W;
        return gi;
    }

    std::vector<Param<T>*> params() override { return {&w_, &b_}; }
    Param<T>& weight() { return w_; }
    Param<T>& bias() { return b_; }

private:
    int in_f_, out_f_;
    Param<T> w_, b_;
    Batch<T> in_;
};

/// Numerically stable softmax cross-entropy on logits.
/// Returns mean loss; fills grad w.r.t. logits (already divided by batch size).
template <typename T>
T softmax_cross_entropy(const Batch<T>& logits, const std::vector<int>& labels,
                        Batch<T>* grad = nullptr) {
    const int n = logits.n, k = logits.c;
    if (static_cast<int>(labels.size()) != n)
        throw ArgumentError("softmax_cross_entropy: label count mismatch");
    if (grad) *grad = Batch<T>(n, k, 1, 1, 1);
    T loss = 0;
    for (int ni = 0; ni < n; ++ni) {
        const T* row = logits.data.data() + static_cast<std::size_t>(ni) * k;
        T mx = row[0];
        for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        T sum = 0;
        for (int i = 0; i < k; ++i) sum += std::exp(row[i] - mx);
        T log_sum = std::log(sum) + mx;
        loss += log_sum - row[labels[ni]];
        if (grad) {
            T* g = grad->data.data() + static_cast<std::size_t>(ni) * k;
            for (int i = 0; i < k; ++i) {
                T p = std::exp(row[i] - log_sum);
                g[i] = (p - (i == labels[ni] ? T(1) : T(0))) / static_cast<T>(n);
            }
        }
    }
    return loss / static_cast<T>(n);
}

template <typename T>
std::vector<T> softmax_row(const T* row, int k) {
    T mx = row[0];
    for (int i = 1; i < k; ++i) mx = std::max(mx, row[i]);
    T sum = 0;
    std::vector<T> p(k);
    for (int i = 0; i < k; ++i) {
        p[i] = std::exp(row[i] - mx);
        sum += p[i];
    }
    for (int i = 0; i < k; ++i) p[i] /= sum;
    return p;
}

}  // namespace voxcur::nn
