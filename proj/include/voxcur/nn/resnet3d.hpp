#pragma once

#include <array>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "voxcur/core/errors.hpp"
#include "voxcur/core/rng.hpp"
#include "voxcur/core/tensor.hpp"
#include "voxcur/nn/layers.hpp"

namespace voxcur::nn {

enum class StageMode { Patch, WholeVolume };

inline const char* stage_mode_name(StageMode m) {
    return m == StageMode::Patch ? "patch" : "whole_volume";
}

struct ModelConfig {
    int in_channels = 6;
    int n_classes = 2;
    int base_width = 16;
    std::array<int, 4> block_widths{16, 32, 64, 128};
    double leaky_slope = 0.01;
    // Per-stage downsampling strides. The default reduces x,y by 16 and z by
    // 4 overall (with the stem), so the paper's 64x64x4 patches leave a 4x4x1
    // final map; presets for smaller patches may downsample less.
    std::array<Vec3i, 4> stage_strides{Vec3i{1, 1, 1}, Vec3i{2, 2, 1}, Vec3i{2, 2, 2},
                                       Vec3i{2, 2, 2}};
    // Window of the head's fixed average pooling, sized so a Stage-1 patch
    // reduces to 1x1x1 (see pool_window_for_patch).
    Vec3i pool_window{4, 4, 1};
    std::uint64_t init_seed = 0;

    void validate() const {
        if (in_channels < 1) throw ConfigError("in_channels must be >= 1");
        if (n_classes < 2) throw ConfigError("n_classes must be >= 2");
        if (base_width < 1) throw ConfigError("base_width must be >= 1");
        if (block_widths[0] != base_width)
            throw ConfigError("block_widths[0] must equal base_width");
        for (int i = 1; i < 4; ++i)
            if (block_widths[i] != 2 * block_widths[i - 1])
                throw ConfigError("block_widths must double at every stage");
        for (const auto& s : stage_strides)
            for (int v : {s.x, s.y, s.z})
                if (v != 1 && v != 2) throw ConfigError("stage strides must be 1 or 2");
        if (pool_window.x < 1 || pool_window.y < 1 || pool_window.z < 1)
            throw ConfigError("pool_window dims must be >= 1");
    }

    /// Spatial shape of the final-stage feature map for a given input shape
    /// (stem stride (2,2,1), then the configured stage strides; 3x3x3 kernels
    /// with padding 1, so each stride-2 step is ceil(d/2)).
    Vec3i final_map_shape(Vec3i in) const {
        auto step = [](int d, int s) { return s == 1 ? d : (d + 1) / 2; };
        Vec3i d{step(in.x, 2), step(in.y, 2), in.z};
        for (const auto& s : stage_strides)
            d = {step(d.x, s.x), step(d.y, s.y), step(d.z, s.z)};
        return d;
    }

    /// Pooling window that reduces a Stage-1 patch of this shape to 1x1x1.
    Vec3i pool_window_for_patch(Vec3i patch) const {
        Vec3i f = final_map_shape(patch);
        return {std::max(1, f.x), std::max(1, f.y), std::max(1, f.z)};
    }
};

/// ResNet basic block: two 3x3x3 convs with instance norm and leaky ReLU,
/// plus an identity or 1x1x1-projected skip.
template <typename T>
class BasicBlock3d {
public:
    BasicBlock3d(const std::string& name, int in_ch, int out_ch, Vec3i stride,
                 double slope)
        : conv1_(name + ".conv1", in_ch, out_ch, {3, 3, 3}, stride, {1, 1, 1}),
          in1_(name + ".norm1", out_ch),
          relu1_(static_cast<T>(slope)),
          conv2_(name + ".conv2", out_ch, out_ch, {3, 3, 3}, {1, 1, 1}, {1, 1, 1}),
          in2_(name + ".norm2", out_ch),
          relu_out_(static_cast<T>(slope)),
          projected_(in_ch != out_ch || stride.x != 1 || stride.y != 1 || stride.z != 1) {
        if (projected_) {
            down_conv_ = std::make_unique<Conv3d<T>>(name + ".down", in_ch, out_ch,
                                                     Vec3i{1, 1, 1}, stride, Vec3i{0, 0, 0});
            down_norm_ = std::make_unique<InstanceNorm3d<T>>(name + ".down_norm", out_ch);
        }
    }

    void init(Rng& rng) {
        conv1_.init(rng);
        conv2_.init(rng);
        if (down_conv_) down_conv_->init(rng);
    }

    Batch<T> forward(const Batch<T>& in) {
        Batch<T> main = in2_.forward(conv2_.forward(relu1_.forward(in1_.forward(conv1_.forward(in)))));
        Batch<T> skip = projected_ ? down_norm_->forward(down_conv_->forward(in)) : in;
        if (!main.same_shape(skip))
            throw ShapeError("residual block: main and skip paths disagree on shape");
        for (std::size_t i = 0; i < main.data.size(); ++i) main.data[i] += skip.data[i];
        return relu_out_.forward(main);
    }

    Batch<T> backward(const Batch<T>& go) {
        Batch<T> g = relu_out_.backward(go);
        Batch<T> gi =
            conv1_.backward(in1_.backward(relu1_.backward(conv2_.backward(in2_.backward(g)))));
        if (projected_) {
            Batch<T> gs = down_conv_->backward(down_norm_->backward(g));
            for (std::size_t i = 0; i < gi.data.size(); ++i) gi.data[i] += gs.data[i];
        } else {
            for (std::size_t i = 0; i < gi.data.size(); ++i) gi.data[i] += g.data[i];
        }
        return gi;
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        for (auto* p : conv1_.params()) out.push_back(p);
        for (auto* p : in1_.params()) out.push_back(p);
        for (auto* p : conv2_.params()) out.push_back(p);
        for (auto* p : in2_.params()) out.push_back(p);
        if (projected_) {
            for (auto* p : down_conv_->params()) out.push_back(p);
            for (auto* p : down_norm_->params()) out.push_back(p);
        }
        return out;
    }

private:
    Conv3d<T> conv1_;
    InstanceNorm3d<T> in1_;
    LeakyReLU<T> relu1_;
    Conv3d<T> conv2_;
    InstanceNorm3d<T> in2_;
    LeakyReLU<T> relu_out_;
    bool projected_;
    std::unique_ptr<Conv3d<T>> down_conv_;
    std::unique_ptr<InstanceNorm3d<T>> down_norm_;
};

/// 3D ResNet18 classifier: stem conv, four stages of two basic blocks,
/// fixed-window average pooling and a fully-connected head. adapt_for_stage2
/// inserts a parameter-free adaptive average pooling (to 1x1x1) between the
/// fixed pooling and the head so whole volumes become valid inputs.
template <typename T>
class ResNet3d {
public:
    explicit ResNet3d(const ModelConfig& cfg)
        : cfg_(cfg),
          stem_(
              "stem", cfg.in_channels, cfg.block_widths[0], {3, 3, 3}, {2, 2, 1}, {1, 1, 1}),
          stem_norm_("stem_norm", cfg.block_widths[0]),
          stem_relu_(static_cast<T>(cfg.leaky_slope)),
          pool_(cfg.pool_window),
          fc_("fc", cfg.block_widths[3], cfg.n_classes) {
        cfg.validate();
        int in_ch = cfg.block_widths[0];
        for (int s = 0; s < 4; ++s) {
            int out_ch = cfg.block_widths[s];
            std::string base = "c" + std::to_string(s + 1);
            blocks_.push_back(std::make_unique<BasicBlock3d<T>>(
                base + ".0", in_ch, out_ch, cfg.stage_strides[s], cfg.leaky_slope));
            blocks_.push_back(std::make_unique<BasicBlock3d<T>>(
                base + ".1", out_ch, out_ch, Vec3i{1, 1, 1}, cfg.leaky_slope));
            in_ch = out_ch;
        }
        Rng rng = Rng::from_keys({cfg.init_seed, 0x6d6f64656cull});
        stem_.init(rng);
        for (auto& b : blocks_) b->init(rng);
        fc_.init(rng);
    }

    ResNet3d(const ResNet3d& o) : ResNet3d(o.cfg_) {
        mode_ = o.mode_;
        auto src = const_cast<ResNet3d&>(o).params();
        auto dst = params();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    }
    ResNet3d& operator=(const ResNet3d&) = delete;

    const ModelConfig& config() const { return cfg_; }
    StageMode stage_mode() const { return mode_; }

    /// Stage-2 adaptation. Idempotency is an error by contract.
    void adapt_for_stage2() {
        if (mode_ == StageMode::WholeVolume)
            throw StageError("model is already adapted for whole-volume input");
        mode_ = StageMode::WholeVolume;
    }

    void check_input(const Batch<T>& in) const {
        if (in.c != cfg_.in_channels)
            throw ShapeError("forward: expected " + std::to_string(cfg_.in_channels) +
                             " channels, got " + std::to_string(in.c));
        // Spatial minimum: the final feature map and the fixed pooling window
        // must both be non-degenerate.
        Vec3i f = cfg_.final_map_shape({in.x, in.y, in.z});
        struct Axis {
            const char* name;
            int dim, final_dim, win;
        };
        const Axis axes[3] = {{"x", in.x, f.x, cfg_.pool_window.x},
                              {"y", in.y, f.y, cfg_.pool_window.y},
                              {"z", in.z, f.z, cfg_.pool_window.z}};
        for (const auto& a : axes)
            if (a.final_dim / a.win < 1)
                throw ShapeError(std::string("forward: axis ") + a.name + " extent " +
                                 std::to_string(a.dim) + " too small for the network");
    }

    Batch<T> forward(const Batch<T>& in) {
        check_input(in);
        Batch<T> h = stem_relu_.forward(stem_norm_.forward(stem_.forward(in)));
        for (auto& b : blocks_) h = b->forward(h);
        features_ = h;  // final-stage maps, kept for class activation maps
        h = pool_.forward(h);
        if (mode_ == StageMode::WholeVolume) h = adaptive_.forward(h);
        else if (h.x != 1 || h.y != 1 || h.z != 1)
            throw ShapeError("forward: patch-mode head expects a 1x1x1 pooled map, got " +
                             shape_string(h.c, h.x, h.y, h.z) +
                             "; adapt_for_stage2 enables arbitrary input sizes");
        return fc_.forward(h);
    }

    void backward(const Batch<T>& dlogits) {
        Batch<T> g = fc_.backward(dlogits);
        if (mode_ == StageMode::WholeVolume) g = adaptive_.backward(g);
        g = pool_.backward(g);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
        stem_.backward(stem_norm_.backward(stem_relu_.backward(g)));
    }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        for (auto* p : stem_.params()) out.push_back(p);
        for (auto* p : stem_norm_.params()) out.push_back(p);
        for (auto& b : blocks_)
            for (auto* p : b->params()) out.push_back(p);
        for (auto* p : fc_.params()) out.push_back(p);
        return out;
    }

    std::size_t count_parameters() {
        auto ps = params();
        return std::accumulate(ps.begin(), ps.end(), std::size_t(0),
                               [](std::size_t a, Param<T>* p) { return a + p->size(); });
    }

    void zero_grad() {
        for (auto* p : params()) p->zero_grad();
    }

    /// Final-stage feature maps cached by the last forward call.
    const Batch<T>& last_features() const { return features_; }
    const Param<T>& fc_weight() { return fc_.weight(); }

private:
    ModelConfig cfg_;
    StageMode mode_ = StageMode::Patch;
    Conv3d<T> stem_;
    InstanceNorm3d<T> stem_norm_;
    LeakyReLU<T> stem_relu_;
    std::vector<std::unique_ptr<BasicBlock3d<T>>> blocks_;
    AvgPool3d<T> pool_;
    AdaptiveAvgPool3d<T> adaptive_;
    Linear<T> fc_;
    Batch<T> features_;
};

/// Standalone per-(sample, channel) spatial standardization.
template <typename T>
Batch<T> instance_normalize(const Batch<T>& in, T eps = T(1e-5)) {
    InstanceNorm3d<T> norm("tmp", in.c, eps);
    return norm.forward(in);
}

}  // namespace voxcur::nn
