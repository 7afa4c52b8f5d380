#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "jscc/nn/layers.hpp"

namespace jscc::nn {

/// Ordered sequence of layers; value semantics via deep copy.
class LayerStack {
public:
    LayerStack() = default;

    LayerStack(const LayerStack& other) {
        layers_.reserve(other.layers_.size());
        for (const auto& l : other.layers_) layers_.push_back(l->clone());
    }
    LayerStack& operator=(const LayerStack& other) {
        if (this != &other) {
            LayerStack copy(other);
            layers_ = std::move(copy.layers_);
        }
        return *this;
    }
    LayerStack(LayerStack&&) noexcept = default;
    LayerStack& operator=(LayerStack&&) noexcept = default;

    template <typename L, typename... Args>
    L& add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L& ref = *layer;
        layers_.push_back(std::move(layer));
        return ref;
    }

    void push(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

    std::size_t size() const { return layers_.size(); }
    bool empty() const { return layers_.empty(); }
    Layer& operator[](std::size_t i) { return *layers_[i]; }
    const Layer& operator[](std::size_t i) const { return *layers_[i]; }

    Tensor forward(const Tensor& x, Mode mode) {
        Tensor h = x;
        for (auto& l : layers_) h = l->forward(h, mode);
        return h;
    }

    Tensor infer(const Tensor& x) const {
        Tensor h = x;
        for (const auto& l : layers_) h = l->infer(h);
        return h;
    }

    Tensor backward(const Tensor& grad_out) {
        Tensor g = grad_out;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    /// Parameters with names prefixed by layer index, e.g. "2.weight".
    std::vector<Param> params() {
        std::vector<Param> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (auto p : layers_[i]->params()) {
                p.name = std::to_string(i) + "." + p.name;
                out.push_back(p);
            }
        return out;
    }

    std::vector<NamedTensor> state() {
        std::vector<NamedTensor> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (auto t : layers_[i]->state()) {
                t.name = std::to_string(i) + "." + t.name;
                out.push_back(t);
            }
        return out;
    }

    void zero_grad() {
        for (auto& l : layers_) l->zero_grad();
    }

    nlohmann::json topology() const {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& l : layers_) arr.push_back(l->topology());
        return arr;
    }

    static LayerStack from_topology(const nlohmann::json& arr) {
        LayerStack s;
        for (const auto& t : arr) s.push(make_layer(t));
        return s;
    }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

} // namespace jscc::nn
