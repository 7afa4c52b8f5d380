#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "jscc/nn/layers.hpp"

namespace jscc::nn {

/// SGD with (Nesterov) momentum and L2 penalty added to the gradient:
///   g' = g + wd * p;  v = mu * v + g';  step = nesterov ? g' + mu * v : v;  p -= lr * step
class SgdOptimizer {
public:
    SgdOptimizer(double lr, double momentum = 0.9, bool nesterov = true, double weight_decay = 5e-4)
        : lr_(lr), momentum_(momentum), nesterov_(nesterov), weight_decay_(weight_decay) {}

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }

    /// Velocity buffers are keyed by the parameter storage address, so the same
    /// optimizer must always be stepped with the same parameter set.
    void step(const std::vector<Param>& params) {
        for (const auto& p : params) {
            auto& v = velocity_[p.value];
            if (v.size() != p.value->size()) v.assign(p.value->size(), 0.0);
            auto& value = p.value->data();
            const auto& grad = p.grad->data();
            for (std::size_t k = 0; k < value.size(); ++k) {
                const double g = grad[k] + weight_decay_ * value[k];
                v[k] = momentum_ * v[k] + g;
                const double step = nesterov_ ? g + momentum_ * v[k] : v[k];
                value[k] -= lr_ * step;
            }
        }
    }

    void reset() { velocity_.clear(); }

private:
    double lr_, momentum_;
    bool nesterov_;
    double weight_decay_;
    std::unordered_map<const Tensor*, std::vector<double>> velocity_;
};

/// Step decay: lr(e) = base * factor^(number of decay points <= e). Decay points
/// are either every `period` epochs or an explicit milestone list.
class StepLrSchedule {
public:
    static StepLrSchedule every(double base_lr, double factor, int period) {
        StepLrSchedule s(base_lr, factor);
        s.period_ = period;
        return s;
    }

    static StepLrSchedule milestones(double base_lr, double factor, std::vector<int> epochs) {
        StepLrSchedule s(base_lr, factor);
        std::sort(epochs.begin(), epochs.end());
        s.milestones_ = std::move(epochs);
        return s;
    }

    double base_lr() const { return base_lr_; }
    double factor() const { return factor_; }
    int period() const { return period_; }
    const std::vector<int>& milestone_list() const { return milestones_; }

    double lr_at_epoch(int epoch) const {
        int decays = 0;
        if (period_ > 0) {
            decays = epoch / period_;
        } else {
            decays = static_cast<int>(std::upper_bound(milestones_.begin(), milestones_.end(), epoch) -
                                      milestones_.begin());
        }
        return base_lr_ * std::pow(factor_, decays);
    }

private:
    StepLrSchedule(double base_lr, double factor) : base_lr_(base_lr), factor_(factor) {}

    double base_lr_, factor_;
    int period_ = 0;
    std::vector<int> milestones_;
};

} // namespace jscc::nn
