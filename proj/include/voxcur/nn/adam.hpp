#pragma once

#include <cmath>
#include <vector>

#include "voxcur/nn/layers.hpp"

namespace voxcur::nn {

/// Adam with the standard default moments (beta1 0.9, beta2 0.999, eps 1e-8).
template <typename T>
class Adam {
public:
    explicit Adam(std::vector<Param<T>*> params, double lr, double weight_decay = 0.0,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2),
          eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->size(), T(0));
            v_[i].assign(params_[i]->size(), T(0));
        }
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Param<T>& p = *params_[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                double g = static_cast<double>(p.grad[j]);
                double m = b1_ * static_cast<double>(m_[i][j]) + (1.0 - b1_) * g;
                double v = b2_ * static_cast<double>(v_[i][j]) + (1.0 - b2_) * g * g;
                m_[i][j] = static_cast<T>(m);
                v_[i][j] = static_cast<T>(v);
                double update = lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
                if (wd_ != 0.0) update += lr_ * wd_ * static_cast<double>(p.value[j]);
                p.value[j] -= static_cast<T>(update);
            }
        }
    }

private:
    std::vector<Param<T>*> params_;
    double lr_, wd_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace voxcur::nn
