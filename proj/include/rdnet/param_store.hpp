#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rdnet/errors.hpp"
#include "rdnet/random.hpp"
#include "rdnet/tensor.hpp"

namespace rdnet {

/// Named trainable tensors in registration order, plus RMSprop state.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        std::vector<double> square_avg;  // empty until the first step
        std::vector<double> momentum;
    };

    Tensor add(const std::string& name, Tensor value) {
        if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
        value.set_requires_grad(true);
        index_.emplace(name, entries_.size());
        entries_.push_back({name, value, {}, {}});
        return value;
    }

    /// Uniform in ±sqrt(1/fan_in).
    Tensor add_uniform(const std::string& name, Shape shape, std::size_t fan_in, Rng& rng) {
        const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
        std::vector<double> v(shape.numel());
        for (double& x : v) x = rng.uniform(-bound, bound);
        return add(name, Tensor::from(shape, std::move(v)));
    }

    Tensor add_zeros(const std::string& name, Shape shape) { return add(name, Tensor::zeros(shape)); }

    bool contains(const std::string& name) const { return index_.contains(name); }

    Tensor get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return entries_[it->second].value;
    }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t scalar_count() const {
        std::size_t total = 0;
        for (const auto& e : entries_) total += e.value.numel();
        return total;
    }

    void zero_grad() {
        for (auto& e : entries_) e.value.zero_grad();
    }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
};

struct RmspropConfig {
    double lr = 1e-5;
    double momentum = 0.9;
    double decay = 0.99;
    double eps = 1e-8;
};

/// One RMSprop update over every parameter holding a gradient:
///   v <- decay·v + (1-decay)·g²
///   buf <- momentum·buf + g / (sqrt(v) + eps);  p <- p - lr·buf
/// (without momentum: p <- p - lr·g / (sqrt(v) + eps)).
/// Parameters that received no gradient this step are left untouched.
inline void rmsprop_step(ParamStore& params, const RmspropConfig& cfg) {
    bool any = false;
    for (auto& e : params.entries()) {
        if (!e.value.has_grad()) continue;
        any = true;
        const auto g = e.value.grad();
        auto p = e.value.mutable_data();
        if (e.square_avg.empty()) e.square_avg.assign(p.size(), 0.0);
        if (cfg.momentum > 0.0 && e.momentum.empty()) e.momentum.assign(p.size(), 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            e.square_avg[i] = cfg.decay * e.square_avg[i] + (1.0 - cfg.decay) * g[i] * g[i];
            const double step = g[i] / (std::sqrt(e.square_avg[i]) + cfg.eps);
            if (cfg.momentum > 0.0) {
                e.momentum[i] = cfg.momentum * e.momentum[i] + step;
                p[i] -= cfg.lr * e.momentum[i];
            } else {
                p[i] -= cfg.lr * step;
            }
        }
    }
    if (!any && params.size() > 0) throw StateError("rmsprop_step: no parameter has a gradient; run backward() first");
}

}  // namespace rdnet
